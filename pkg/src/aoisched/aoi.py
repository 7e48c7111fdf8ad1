"""Age-of-information state, horizon bounds, weighted-sum objective and slot reward.

Ages are kept as integer multiples of the slot length; they are converted to
seconds only when reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_zeta


@dataclass(frozen=True, eq=False)
class AoiState:
    """Instantaneous ages after ``t`` slots.

    ``age`` holds ages in slot units (V x F); ``cumulative`` is the running
    demand-weighted age sum over the slots seen so far, also in slot units.
    Initial ages are zero, so a process never served has age ``t`` at slot ``t``.
    """

    age: np.ndarray
    t: int
    cumulative: int
    delta: float

    @classmethod
    def initial(cls, V: int, F: int, delta: float) -> "AoiState":
        return cls(age=np.zeros((V, F), dtype=np.int64), t=0, cumulative=0, delta=float(delta))

    @property
    def age_seconds(self) -> np.ndarray:
        return self.age * self.delta

    @property
    def cumulative_seconds(self) -> float:
        return self.cumulative * self.delta


def assignment_matrix(mu, F: int) -> np.ndarray:
    """Binary V x F view of a per-vehicle assignment (0 = idle)."""
    mu = np.asarray(mu, dtype=int)
    eta = np.zeros((len(mu), F), dtype=np.int8)
    active = mu > 0
    eta[np.flatnonzero(active), mu[active] - 1] = 1
    return eta


def step_aoi(state: AoiState, mu, success, demand) -> AoiState:
    """Advance one slot: served-and-decoded pairs reset to one slot, others age."""
    demand = np.asarray(demand)
    eta = assignment_matrix(mu, demand.shape[1])
    reset = (eta == 1) & np.asarray(success, dtype=bool)[:, None]
    age = np.where(reset, 1, state.age + 1)
    weighted = int((demand * age).sum())
    return AoiState(age=age, t=state.t + 1, cumulative=state.cumulative + weighted, delta=state.delta)


def weighted_age_sum(state: AoiState, demand) -> float:
    """Demand-weighted sum of current ages in seconds."""
    return float((np.asarray(demand) * state.age).sum() * state.delta)


def average_aoi(state: AoiState, demand=None, T: int | None = None) -> float:
    """Total time-average AoI over the ``T`` slots accumulated in ``state``."""
    if T is not None and state.t != T:
        raise ValidationError(f"state has {state.t} slots, expected {T}")
    if state.t < 1:
        raise ValidationError("no slots accumulated")
    return state.cumulative * state.delta / state.t


def _tetra(n: int) -> int:
    # sum_{r=1}^{n} r(r+1)/2
    return n * (n + 1) * (n + 2) // 6 if n > 0 else 0


def min_age_sum(R: int, T: int) -> int:
    """Least achievable sum over ``T`` slots of the ages (slot units) of ``R`` processes.

    Serving one process per slot in round-robin order is optimal. For
    ``T >= R - 1`` this is ``T R(R+1)/2 - sum_{r<R} r(r+1)/2``; for shorter
    horizons some processes are never served and the sum is
    ``R T(T+1)/2 - sum_{r<T} r(r+1)/2``. Both agree for ``R-1 <= T <= R+1``.
    """
    if R < 1 or T < 1:
        raise ValidationError("R and T must be >= 1")
    long_form = T * R * (R + 1) // 2 - _tetra(R - 1)
    short_form = R * T * (T + 1) // 2 - _tetra(T - 1)
    if T > R + 1:
        return long_form
    if T < R - 1:
        return short_form
    assert long_form == short_form, (R, T)
    return long_form


def aoi_upper_bound(scenario, horizon: int | None = None) -> float:
    """Average AoI when nothing is ever delivered."""
    T = scenario.T if horizon is None else horizon
    return scenario.delta * (T + 1) / 2 * int(np.asarray(scenario.demand).sum())


def aoi_lower_bound(scenario, horizon: int | None = None) -> float:
    """Average AoI when every vehicle is served every slot, round-robin over its demands."""
    T = scenario.T if horizon is None else horizon
    if T < 1:
        raise ValidationError("horizon must be >= 1")
    counts = np.asarray(scenario.demand).sum(axis=1)
    return scenario.delta / T * sum(min_age_sum(int(R), T) for R in counts)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    avg_aoi: float
    aoi_lower: float
    aoi_upper: float
    avg_power: float
    Pmax: float
    zeta: float
    value: float

    @property
    def norm_aoi(self) -> float:
        return (self.avg_aoi - self.aoi_lower) / (self.aoi_upper - self.aoi_lower)

    @property
    def norm_power(self) -> float:
        return self.avg_power / self.Pmax


def objective(avg_aoi: float, avg_power: float, scenario, zeta: float) -> float:
    """Weighted sum of min-max normalised average AoI and average power (P_min = 0)."""
    return breakdown(avg_aoi, avg_power, scenario, zeta).value


def breakdown(avg_aoi: float, avg_power: float, scenario, zeta: float) -> ObjectiveBreakdown:
    zeta = check_zeta(zeta)
    hi = aoi_upper_bound(scenario)
    lo = aoi_lower_bound(scenario)
    if hi == lo:
        raise ValidationError("degenerate AoI range: upper bound equals lower bound")
    value = zeta * (avg_aoi - lo) / (hi - lo) + (1 - zeta) * avg_power / scenario.Pmax
    return ObjectiveBreakdown(
        avg_aoi=avg_aoi,
        aoi_lower=lo,
        aoi_upper=hi,
        avg_power=avg_power,
        Pmax=scenario.Pmax,
        zeta=zeta,
        value=value,
    )


def slot_cost(state: AoiState, power_history, scenario, zeta: float) -> float:
    """Objective evaluated over the first ``state.t`` slots only.

    At ``t = 1`` every age equals one slot whatever is scheduled, so the
    AoI range collapses; the AoI term is taken as zero there.
    """
    t = state.t
    if t < 1:
        raise ValidationError("reward needs at least one elapsed slot")
    hi = aoi_upper_bound(scenario, t)
    lo = aoi_lower_bound(scenario, t)
    avg = state.cumulative * state.delta / t
    aoi_term = 0.0 if hi == lo else (avg - lo) / (hi - lo)
    power = float(np.sum(power_history[:t])) / t
    return zeta * aoi_term + (1 - zeta) * power / scenario.Pmax


def slot_reward(state: AoiState, power_history, scenario, zeta: float, nu: float = 1e-6) -> float:
    """``-log(rho + nu)`` with ``rho`` the horizon-``t`` objective."""
    if nu <= 0:
        raise ValidationError("nu must be positive")
    return -math.log(slot_cost(state, power_history, scenario, zeta) + nu)
