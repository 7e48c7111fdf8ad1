"""Action space, cached per-slot power solutions and trajectory replay."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError
from .aoi import AoiState, ObjectiveBreakdown, breakdown, step_aoi, weighted_age_sum
from .link import decoding_error_prob, gain_matrix, sinr_all
from .power import PowerProblem, PowerSolution, min_power_allocation

ACTION_GUARD = 10**6
# relative slack on the error target; the power solver meets it with equality
SUCCESS_RTOL = 1e-6


class ActionSpace:
    """Mixed-radix enumeration of per-slot assignments.

    Vehicle ``i`` chooses from ``{0} U R_i`` (sorted); vehicle 0 is the most
    significant digit, so index 0 is the all-idle action.
    """

    def __init__(self, demand, guard: int = ACTION_GUARD):
        demand = np.asarray(demand)
        self.choices = [np.concatenate([[0], np.flatnonzero(row) + 1]) for row in demand]
        self.radix = np.array([len(c) for c in self.choices], dtype=np.int64)
        size = int(np.prod([int(r) for r in self.radix], dtype=object))
        if size > guard:
            raise ValidationError(f"action space has {size} assignments, above the guard of {guard}")
        self.size = size
        self.V = len(self.choices)
        self._weights = np.array(
            [int(np.prod(self.radix[i + 1 :])) for i in range(self.V)], dtype=np.int64
        )
        self._actions = None

    def __len__(self):
        return self.size

    def decode(self, index) -> np.ndarray:
        index = int(index)
        if not 0 <= index < self.size:
            raise IndexError(index)
        digits = (index // self._weights) % self.radix
        return np.array([self.choices[i][d] for i, d in enumerate(digits)], dtype=int)

    def encode(self, mu) -> int:
        digits = []
        for i, m in enumerate(mu):
            pos = np.flatnonzero(self.choices[i] == m)
            if pos.size == 0:
                raise ValidationError(f"vehicle {i + 1} cannot be assigned process {m}")
            digits.append(int(pos[0]))
        return int(np.dot(digits, self._weights))

    @property
    def actions(self) -> np.ndarray:
        """All assignments as a (size, V) array, in index order."""
        if self._actions is None:
            idx = np.arange(self.size, dtype=np.int64)
            digits = (idx[:, None] // self._weights[None, :]) % self.radix[None, :]
            self._actions = np.column_stack(
                [self.choices[i][digits[:, i]] for i in range(self.V)]
            ).astype(int)
        return self._actions


def enumerate_actions(scenario, guard: int = ACTION_GUARD) -> np.ndarray:
    return ActionSpace(scenario.demand, guard).actions


class PowerCache:
    """Memoised minimum-power solutions keyed by (slot, assignment)."""

    def __init__(self, scenario):
        self.scenario = scenario
        self._store: dict[tuple, PowerSolution] = {}

    def problem(self, t: int, mu) -> PowerProblem:
        s = self.scenario
        g = gain_matrix(mu, s.channels[t - 1], s.F)
        return PowerProblem(gains=g, gamma_hat=s.gamma_hat, mu=np.asarray(mu), sigma2=s.sigma2, Pmax=s.Pmax)

    def solve(self, t: int, mu) -> PowerSolution:
        key = (t, tuple(int(m) for m in mu))
        sol = self._store.get(key)
        if sol is None:
            sol = min_power_allocation(self.problem(t, mu))
            self._store[key] = sol
        return sol


def power_cache(scenario) -> PowerCache:
    """The scenario's shared cache (scenarios are immutable)."""
    cache = scenario._cache.get("power")
    if cache is None:
        cache = scenario._cache["power"] = PowerCache(scenario)
    return cache


def slot_success(scenario, t: int, mu, powers) -> np.ndarray:
    """Per-vehicle flag: assigned and decoded within the error target."""
    mu = np.asarray(mu, dtype=int)
    g = gain_matrix(mu, scenario.channels[t - 1], scenario.F)
    gam = sinr_all(mu, powers, g, scenario.sigma2)
    ok = np.zeros(len(mu), dtype=bool)
    pos = gam > 0
    if pos.any():
        ok[pos] = decoding_error_prob(gam[pos], scenario) <= scenario.epsilonMax * (1 + SUCCESS_RTOL)
    return ok


@dataclass(frozen=True)
class SlotRecord:
    t: int
    mu: tuple
    powers: tuple
    success: tuple
    weighted_age_sum: float


@dataclass
class SolveResult:
    schedule: np.ndarray  # (T, V)
    powers: np.ndarray  # (T, F)
    success: np.ndarray  # (T, V)
    records: list[SlotRecord]
    breakdown: ObjectiveBreakdown
    meta: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.breakdown.value

    def to_csv(self) -> str:
        return trajectory_csv(self.records)


def replay(scenario, schedule, powers, zeta: float, meta=None) -> SolveResult:
    """Run a schedule through the SINR / error / AoI pipeline and score it."""
    schedule = np.asarray(schedule, dtype=int)
    powers = np.asarray(powers, dtype=float)
    if schedule.shape != (scenario.T, scenario.V) or powers.shape != (scenario.T, scenario.F):
        raise ValidationError("schedule must be (T, V) and powers (T, F)")
    state = AoiState.initial(scenario.V, scenario.F, scenario.delta)
    records, succ = [], []
    for t in range(1, scenario.T + 1):
        mu = schedule[t - 1]
        if np.any(mu < 0) or np.any(mu > scenario.F):
            raise ValidationError(f"slot {t}: process index out of range")
        if np.any(scenario.demand[np.flatnonzero(mu), mu[mu > 0] - 1] == 0):
            raise ValidationError(f"slot {t}: vehicle assigned a process it does not demand")
        ok = slot_success(scenario, t, mu, powers[t - 1])
        state = step_aoi(state, mu, ok, scenario.demand)
        succ.append(ok)
        records.append(
            SlotRecord(
                t=t,
                mu=tuple(int(m) for m in mu),
                powers=tuple(float(p) for p in powers[t - 1]),
                success=tuple(bool(x) for x in ok),
                weighted_age_sum=weighted_age_sum(state, scenario.demand),
            )
        )
    avg_aoi = state.cumulative * scenario.delta / scenario.T
    avg_power = float(powers.sum()) / scenario.T
    return SolveResult(
        schedule=schedule,
        powers=powers,
        success=np.array(succ),
        records=records,
        breakdown=breakdown(avg_aoi, avg_power, scenario, zeta),
        meta=dict(meta or {}),
    )


def trajectory_csv(records) -> str:
    """Per-slot log: t, mu_*, p_*, success_*, weightedAgeSum (12 significant digits)."""
    if not records:
        return ""
    V, F = len(records[0].mu), len(records[0].powers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["t"]
        + [f"mu_{i + 1}" for i in range(V)]
        + [f"p_{l + 1}" for l in range(F)]
        + [f"success_{i + 1}" for i in range(V)]
        + ["weightedAgeSum"]
    )
    for r in records:
        w.writerow(
            [r.t, *r.mu, *(f"{p:.12g}" for p in r.powers), *(int(s) for s in r.success), f"{r.weighted_age_sum:.12g}"]
        )
    return buf.getvalue()


def read_trajectory_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`trajectory_csv`: schedule, powers, success flags, weighted age sums."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    mu_cols = [k for k, h in enumerate(header) if h.startswith("mu_")]
    p_cols = [k for k, h in enumerate(header) if h.startswith("p_")]
    s_cols = [k for k, h in enumerate(header) if h.startswith("success_")]
    sched = np.array([[int(r[k]) for k in mu_cols] for r in body], dtype=int)
    powers = np.array([[float(r[k]) for k in p_cols] for r in body])
    succ = np.array([[bool(int(r[k])) for k in s_cols] for r in body])
    was = np.array([float(r[-1]) for r in body])
    return sched, powers, succ, was
