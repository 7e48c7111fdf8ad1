"""Assignment search: random baseline, per-slot exhaustive search and ant colony optimisation."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_positive_int, check_rng, check_zeta
from .aoi import aoi_lower_bound, aoi_upper_bound, assignment_matrix
from .base import BaseScheduler
from .simulate import ActionSpace, SolveResult, power_cache, replay

# largest action space for which the ACO result is polished by local search
LOCAL_SEARCH_LIMIT = 5000

__all__ = [
    "random_policy",
    "exhaustive_policy",
    "aco_solve",
    "refine_schedule",
    "assignment_probabilities",
    "pheromone_update",
    "PheromoneTable",
    "RandomScheduler",
    "ExhaustiveScheduler",
    "ACOScheduler",
]


def random_policy(scenario, rng=None, zeta: float = 0.5) -> SolveResult:
    """Uniform random assignment per slot with a random power budget.

    Each slot draws an assignment uniformly from the action space and a
    total power ``U(0, 1) * Pmax`` split equally over the scheduled processes.
    """
    rng = check_rng(rng)
    space = ActionSpace(scenario.demand)
    T, F = scenario.T, scenario.F
    schedule = np.zeros((T, scenario.V), dtype=int)
    powers = np.zeros((T, F))
    for t in range(T):
        mu = space.decode(rng.integers(space.size))
        frac = rng.uniform()
        sched = np.unique(mu[mu > 0])
        schedule[t] = mu
        if sched.size:
            powers[t, sched - 1] = frac * scenario.Pmax / sched.size
    return replay(scenario, schedule, powers, zeta, meta={"solver": "random"})


def _slot_weights(scenario, zeta: float):
    """Objective weight per slot-unit of demand-weighted age and per watt."""
    T = scenario.T
    span = aoi_upper_bound(scenario) - aoi_lower_bound(scenario)
    return zeta * scenario.delta / (T * span), (1 - zeta) / (T * scenario.Pmax)


def exhaustive_policy(
    scenario, zeta: float = 0.5, lookahead: bool = True, refine: bool = True, prefix=None
) -> SolveResult:
    """Slot-by-slot search over every assignment.

    Each slot scores every assignment whose power problem is feasible by its
    contribution to the objective and keeps the minimiser (lowest index on
    ties). With ``lookahead`` the age term counts the post-step ages over all
    remaining slots as if nothing further were delivered, which is the exact
    change in the objective for an otherwise idle remainder; without it only
    the current slot's ages are counted. With ``refine`` the greedy schedule
    is then improved by coordinate descent over single slots and pairs of
    slots until no move lowers the objective. ``prefix`` fixes the
    assignments of the first slots; only the remaining slots are searched.
    """
    zeta = check_zeta(zeta)
    space = ActionSpace(scenario.demand)
    actions = space.actions
    cache = power_cache(scenario)
    w_age, w_pow = _slot_weights(scenario, zeta)
    demand = scenario.demand.astype(np.int64)
    T, F = scenario.T, scenario.F

    eta_all = np.stack([assignment_matrix(mu, F) for mu in actions]).astype(bool)
    age = np.zeros((scenario.V, F), dtype=np.int64)
    schedule = np.zeros((T, scenario.V), dtype=int)
    powers = np.zeros((T, F))
    fixed = 0 if prefix is None else len(prefix)
    for t in range(1, fixed + 1):
        mu = np.asarray(prefix[t - 1], dtype=int)
        k = space.encode(mu)
        sol = cache.solve(t, mu)
        if not sol.feasible:
            raise ValidationError(f"fixed assignment in slot {t} has no feasible power allocation")
        schedule[t - 1], powers[t - 1] = mu, sol.p
        age = np.where(eta_all[k], 1, age + 1)
    for t in range(fixed + 1, T + 1):
        sols = [cache.solve(t, mu) for mu in actions]
        feasible = np.array([s.feasible for s in sols])
        total = np.array([s.total for s in sols])
        nxt = np.where(eta_all, 1, age[None] + 1)
        age_sum = (nxt * demand[None]).sum(axis=(1, 2))
        horizon = T - t + 1 if lookahead else 1
        score = w_age * horizon * age_sum + w_pow * total
        score = np.where(feasible, score, np.inf)
        k = int(np.argmin(score)) if np.isfinite(score).any() else 0
        if not feasible[k]:
            k = 0
        mu = actions[k]
        schedule[t - 1] = mu
        powers[t - 1] = sols[k].p
        age = np.where(eta_all[k], 1, age + 1)
    passes = 0
    if refine:
        passes = _refine(scenario, schedule, powers, actions, cache, w_age, w_pow, first=fixed)
    return replay(
        scenario,
        schedule,
        powers,
        zeta,
        meta={"solver": "exhaustive", "lookahead": lookahead, "refine_passes": passes, "fixed_slots": fixed},
    )


def _vehicle_age_cost(demand_row, seq) -> int:
    """Sum over slots of one vehicle's demand-weighted ages (slot units)."""
    age = np.zeros(len(demand_row), dtype=np.int64)
    total = 0
    for m in seq:
        age += 1
        if m:
            age[m - 1] = 1
        total += int(demand_row @ age)
    return total


def refine_schedule(scenario, schedule, powers, zeta: float, pair_moves: bool = True) -> int:
    """Improve ``schedule``/``powers`` in place by coordinate descent; returns passes used."""
    actions = ActionSpace(scenario.demand).actions
    w_age, w_pow = _slot_weights(scenario, zeta)
    limit = 2000 if pair_moves else 0
    return _refine(scenario, schedule, powers, actions, power_cache(scenario), w_age, w_pow, pair_limit=limit)


def _refine(scenario, schedule, powers, actions, cache, w_age, w_pow, max_passes=50, pair_limit=2000, first=0):
    """Block coordinate descent on the exact objective.

    Each pass re-scores every feasible assignment of each single slot, then
    (when the action space has at most ``pair_limit`` entries) every joint
    assignment of each pair of slots, holding the other slots fixed. Moves
    are accepted only on strict improvement, so the objective never
    increases. The age cost separates over vehicles, which keeps pair moves
    cheap. Slots before ``first`` are left untouched. Modifies
    ``schedule``/``powers`` in place.
    """
    T, V = scenario.T, scenario.V
    demand = scenario.demand.astype(np.int64)
    space = ActionSpace(scenario.demand)
    K = len(actions)
    feas = np.zeros((T, K), dtype=bool)
    tot = np.zeros((T, K))
    for t in range(T):
        sols = [cache.solve(t + 1, mu) for mu in actions]
        feas[t] = [s.feasible for s in sols]
        tot[t] = [s.total for s in sols]
    digits = np.array([[int(np.flatnonzero(space.choices[i] == mu[i])[0]) for i in range(V)] for mu in actions])
    current = np.array([space.encode(mu) for mu in schedule])

    def seq_of(i):
        return [int(actions[current[t], i]) for t in range(T)]

    def single(t):
        cost = np.zeros(K)
        for i in range(V):
            base = seq_of(i)
            table = []
            for m in space.choices[i]:
                base[t] = int(m)
                table.append(_vehicle_age_cost(demand[i], base))
            cost += np.asarray(table)[digits[:, i]]
        score = np.where(feas[t], w_age * cost + w_pow * tot[t], np.inf)
        k = int(np.argmin(score))
        if score[k] < score[current[t]] - 1e-12:
            current[t] = k
            return True
        return False

    def pair(t1, t2):
        cost = np.zeros((K, K))
        for i in range(V):
            base = seq_of(i)
            ch = space.choices[i]
            table = np.empty((len(ch), len(ch)))
            for a, m1 in enumerate(ch):
                for b, m2 in enumerate(ch):
                    base[t1], base[t2] = int(m1), int(m2)
                    table[a, b] = _vehicle_age_cost(demand[i], base)
            cost += table[digits[:, i][:, None], digits[:, i][None, :]]
        power = tot[t1][:, None] + tot[t2][None, :]
        ok = feas[t1][:, None] & feas[t2][None, :]
        score = np.where(ok, w_age * cost + w_pow * power, np.inf)
        flat = int(np.argmin(score))
        k1, k2 = divmod(flat, K)
        if score[k1, k2] < score[current[t1], current[t2]] - 1e-12:
            current[t1], current[t2] = k1, k2
            return True
        return False

    for p in range(1, max_passes + 1):
        improved = False
        for t in range(first, T):
            improved |= single(t)
        if K <= pair_limit:
            for t1 in range(first, T):
                for t2 in range(t1 + 1, T):
                    improved |= pair(t1, t2)
        if not improved:
            break
    for t in range(T):
        schedule[t] = actions[current[t]]
        powers[t] = cache.solve(t + 1, actions[current[t]]).p
    return p


@dataclass
class PheromoneTable:
    """Trail intensities per (slot, vehicle, process)."""

    tau: np.ndarray
    kappa: float
    iota1: float = 1.0
    iota2: float = 1.0
    Pmax: float = math.inf  # deposit gate on per-slot total power

    @classmethod
    def uniform(cls, T, V, F, kappa, initial=1.0, iota1=1.0, iota2=1.0, Pmax=math.inf):
        return cls(np.full((T, V, F), float(initial)), kappa, iota1, iota2, Pmax)


def assignment_probabilities(tau, attractiveness, iota1=1.0, iota2=1.0) -> np.ndarray:
    """Per-vehicle choice probabilities, idle first.

    ``tau`` and ``attractiveness`` have shape (..., F); the result has shape
    (..., F + 1) with column 0 the probability of leaving the vehicle idle.
    """
    w = np.power(tau, iota1) * np.power(attractiveness, iota2)
    denom = 1.0 + w.sum(axis=-1, keepdims=True)
    probs = w / denom
    idle = 1.0 - probs.sum(axis=-1, keepdims=True)
    return np.concatenate([np.clip(idle, 0.0, 1.0), probs], axis=-1)


def deposit_amount(objective: float, slot_powers, Pmax: float) -> float:
    """exp(-O) for a tour respecting the power budget in every slot, else 0."""
    totals = np.asarray(slot_powers, dtype=float).reshape(len(slot_powers), -1).sum(axis=1)
    if np.all(totals <= Pmax * (1 + 1e-9)):
        return math.exp(-objective)
    return 0.0


def pheromone_update(table: PheromoneTable, *ants) -> PheromoneTable:
    """Evaporate once, then let each depositing ant reinforce its chosen cells.

    Each ant is a tuple ``(schedule (T, V), slot_powers (T, F), objective)``.
    """
    tau = (1 - table.kappa) * table.tau
    F = tau.shape[2]
    for schedule, slot_powers, obj in ants:
        amount = deposit_amount(obj, slot_powers, table.Pmax)
        if amount == 0.0:
            continue
        for t, mu in enumerate(np.asarray(schedule)):
            tau[t] += assignment_matrix(mu, F) * amount
    return PheromoneTable(tau, table.kappa, table.iota1, table.iota2, table.Pmax)


def _sample_choices(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Cumulative-probability inversion along the last axis."""
    cum = np.cumsum(probs, axis=-1)
    cum /= cum[..., -1:]
    return (cum[..., :-1] <= u[..., None]).sum(axis=-1)


def aco_solve(
    scenario,
    zeta: float = 0.5,
    n_ants: int = 100,
    max_colonies: int = 400,
    kappa: float = 0.1,
    iota1: float = 1.0,
    iota2: float = 1.0,
    epsilon0: float = 0.01,
    initial_pheromone: float = 10.0,
    patience: int = 100,
    local_search: bool = True,
    rng=None,
) -> SolveResult:
    """Ant colony search over whole-horizon schedules.

    Every ant builds a T-slot tour; at each slot every vehicle independently
    picks idle or one of its demanded processes with probability proportional
    to pheromone times attractiveness (age of the process if not served,
    divided by the slot index). Assignments whose power problem is infeasible
    are discarded and the slot is left idle. The two lowest-objective ants of
    each colony deposit ``exp(-O)``. The search stops once the best objective
    has improved by less than ``epsilon0`` over the last ``patience``
    colonies (``patience=1`` compares consecutive colonies), or after
    ``max_colonies`` colonies. With ``local_search`` the best tour is
    finished with single-slot coordinate descent on the exact objective
    when the action space has at most ``LOCAL_SEARCH_LIMIT`` entries.
    """
    zeta = check_zeta(zeta)
    A = check_positive_int(n_ants, "n_ants", minimum=2)
    I = check_positive_int(max_colonies, "max_colonies")
    patience = check_positive_int(patience, "patience")
    rng = check_rng(rng)
    T, V, F = scenario.T, scenario.V, scenario.F
    cache = power_cache(scenario)
    demand = scenario.demand.astype(np.int64)
    lo, hi = aoi_lower_bound(scenario), aoi_upper_bound(scenario)
    table = PheromoneTable.uniform(T, V, F, kappa, initial_pheromone, iota1, iota2, scenario.Pmax)

    best = None  # (objective, schedule, powers)
    o_star = math.inf
    history = [0.0]  # best objective before each colony
    colonies = 0
    while I >= 1 and (len(history) <= patience or abs(o_star - history[-patience]) >= epsilon0):
        I -= 1
        colonies += 1
        history.append(o_star)
        ages = np.zeros((A, V, F), dtype=np.int64)
        cum = np.zeros(A, dtype=np.int64)
        sched = np.zeros((A, T, V), dtype=int)
        pw = np.zeros((A, T, F))
        u = rng.uniform(size=(T, A, V))
        for t in range(1, T + 1):
            attract = demand[None] * ages * scenario.delta / t
            probs = assignment_probabilities(table.tau[t - 1][None], attract, iota1, iota2)
            mus = _sample_choices(probs, u[t - 1])
            for a in range(A):
                sol = cache.solve(t, mus[a])
                if sol.feasible:
                    sched[a, t - 1] = mus[a]
                    pw[a, t - 1] = sol.p
                else:
                    mus[a] = 0
            eta = np.zeros((A, V, F), dtype=bool)
            act = mus > 0
            aa, ii = np.nonzero(act)
            eta[aa, ii, mus[act] - 1] = True
            ages = np.where(eta, 1, ages + 1)
            cum += (ages * demand[None]).sum(axis=(1, 2))
        avg_aoi = cum * scenario.delta / T
        avg_pow = pw.sum(axis=(1, 2)) / T
        obj = zeta * (avg_aoi - lo) / (hi - lo) + (1 - zeta) * avg_pow / scenario.Pmax
        order = np.argsort(obj, kind="stable")
        a1, a2 = order[0], order[1]
        if obj[a1] < o_star:
            o_star = float(obj[a1])
            best = (o_star, sched[a1].copy(), pw[a1].copy())
        table = pheromone_update(
            table, (sched[a1], pw[a1], obj[a1]), (sched[a2], pw[a2], obj[a2])
        )

    _, schedule, powers = best
    if local_search and ActionSpace(scenario.demand).size <= LOCAL_SEARCH_LIMIT:
        refine_schedule(scenario, schedule, powers, zeta, pair_moves=False)
    return replay(
        scenario, schedule, powers, zeta, meta={"solver": "aco", "colonies": colonies, "pheromone": table.tau}
    )


class RandomScheduler(BaseScheduler):
    """Random assignment and power baseline."""

    def __init__(self, zeta=0.5, random_state=None):
        self.zeta = zeta
        self.random_state = random_state

    def fit(self, scenario, y=None):
        scenario = self._validate(scenario)
        t0 = time.perf_counter()
        self.result_ = random_policy(scenario, check_rng(self.random_state), self.zeta)
        self.result_.meta["wall_time"] = time.perf_counter() - t0
        return self


class ExhaustiveScheduler(BaseScheduler):
    """Per-slot exhaustive search over the assignment space."""

    def __init__(self, zeta=0.5, lookahead=True, refine=True):
        self.zeta = zeta
        self.lookahead = lookahead
        self.refine = refine

    def fit(self, scenario, y=None):
        scenario = self._validate(scenario)
        t0 = time.perf_counter()
        self.result_ = exhaustive_policy(scenario, self.zeta, self.lookahead, self.refine)
        self.result_.meta["wall_time"] = time.perf_counter() - t0
        return self


class ACOScheduler(BaseScheduler):
    """Ant colony optimisation of the whole-horizon schedule."""

    def __init__(
        self,
        zeta=0.5,
        n_ants=100,
        max_colonies=400,
        kappa=0.1,
        iota1=1.0,
        iota2=1.0,
        epsilon0=0.01,
        initial_pheromone=10.0,
        patience=100,
        local_search=True,
        random_state=None,
    ):
        self.zeta = zeta
        self.n_ants = n_ants
        self.max_colonies = max_colonies
        self.kappa = kappa
        self.iota1 = iota1
        self.iota2 = iota2
        self.epsilon0 = epsilon0
        self.initial_pheromone = initial_pheromone
        self.patience = patience
        self.local_search = local_search
        self.random_state = random_state

    def fit(self, scenario, y=None):
        scenario = self._validate(scenario)
        if not 0 < self.kappa < 1:
            raise ValidationError("kappa must lie in (0, 1)")
        t0 = time.perf_counter()
        self.result_ = aco_solve(
            scenario,
            zeta=self.zeta,
            n_ants=self.n_ants,
            max_colonies=self.max_colonies,
            kappa=self.kappa,
            iota1=self.iota1,
            iota2=self.iota2,
            epsilon0=self.epsilon0,
            initial_pheromone=self.initial_pheromone,
            patience=self.patience,
            local_search=self.local_search,
            rng=check_rng(self.random_state),
        )
        self.result_.meta["wall_time"] = time.perf_counter() - t0
        self.pheromone_ = self.result_.meta["pheromone"]
        return self
