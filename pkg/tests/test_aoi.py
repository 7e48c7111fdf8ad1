import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoisched import ValidationError
from aoisched.aoi import (
    AoiState,
    aoi_lower_bound,
    aoi_upper_bound,
    average_aoi,
    breakdown,
    min_age_sum,
    objective,
    slot_cost,
    slot_reward,
    step_aoi,
)
from aoisched.scenario import build_scenario


def _run(mu_seq, success_seq, demand, delta=1.0):
    demand = np.asarray(demand)
    st_ = AoiState.initial(*demand.shape, delta)
    for mu, ok in zip(mu_seq, success_seq):
        st_ = step_aoi(st_, mu, ok, demand)
    return st_


def test_step_branches():
    demand = [[1, 1]]
    s = _run([[1]], [[True]], demand)
    assert s.age.tolist() == [[1, 1]]
    s = step_aoi(s, [2], [True], demand)
    assert s.age.tolist() == [[2, 1]]
    s = step_aoi(s, [1], [False], demand)
    assert s.age.tolist() == [[3, 2]]
    s = step_aoi(s, [0], [False], demand)
    assert s.age.tolist() == [[4, 3]]


def test_average_always_served():
    s = _run([[1]] * 5, [[True]] * 5, [[1]])
    assert average_aoi(s) == 1.0


def test_average_never_served():
    s = _run([[0]] * 5, [[False]] * 5, [[1]])
    assert average_aoi(s) == 3.0


def test_average_in_seconds():
    s = _run([[0]] * 4, [[False]] * 4, [[1]], delta=0.5)
    assert average_aoi(s) == pytest.approx(0.5 * 2.5)


def test_upper_bound_toy(toy):
    assert aoi_upper_bound(toy) == 44.0


def test_upper_bound_single():
    s = build_scenario(dict(V=1, F=1, T=1, demand=[[1]]))
    assert aoi_upper_bound(s) == 1.0


def test_upper_bound_linear_in_demand():
    a = build_scenario(dict(V=2, F=3, T=6, demand=[[1, 0, 0], [0, 1, 0]]))
    b = build_scenario(dict(V=2, F=3, T=6, demand=[[1, 1, 0], [0, 1, 1]]))
    assert aoi_upper_bound(b) == 2 * aoi_upper_bound(a)


def test_lower_bound_single_process():
    s = build_scenario(dict(V=1, F=1, T=5, demand=[[1]]))
    assert aoi_lower_bound(s) == 1.0


def test_lower_bound_two_processes():
    s = build_scenario(dict(V=1, F=2, T=7, demand=[[1, 1]]))
    assert Fraction(aoi_lower_bound(s)).limit_denominator(100) == Fraction(20, 7)


def test_lower_bound_toy(toy):
    assert aoi_lower_bound(toy) == pytest.approx(118 / 7, abs=1e-12)
    assert Fraction(aoi_lower_bound(toy)).limit_denominator(100) == Fraction(118, 7)


def _brute_min(R, T):
    best = math.inf
    for seq in itertools.product(range(R + 1), repeat=T):
        age = [0] * R
        total = 0
        for m in seq:
            age = [a + 1 for a in age]
            if m:
                age[m - 1] = 1
            total += sum(age)
        best = min(best, total)
    return best


@pytest.mark.parametrize("R", [1, 2, 3])
@pytest.mark.parametrize("T", range(1, 9))
def test_min_age_sum_brute_force(R, T):
    assert min_age_sum(R, T) == _brute_min(R, T)


@pytest.mark.parametrize("R", range(1, 9))
def test_closed_forms_agree_in_overlap(R):
    for T in (R - 1, R, R + 1):
        if T >= 1:
            long_form = T * R * (R + 1) // 2 - (R - 1) * R * (R + 1) // 6
            short_form = R * T * (T + 1) // 2 - (T - 1) * T * (T + 1) // 6
            assert long_form == short_form == min_age_sum(R, T)


def test_min_age_sum_domain():
    with pytest.raises(ValidationError):
        min_age_sum(0, 3)


def test_objective_examples(toy):
    lo, hi = aoi_lower_bound(toy), aoi_upper_bound(toy)
    assert objective(lo, 0.0, toy, 0.3) == 0.0
    assert objective(hi, 0.0, toy, 1.0) == 1.0
    assert objective((lo + hi) / 2, toy.Pmax / 2, toy, 0.5) == pytest.approx(0.5)
    b = breakdown(hi, toy.Pmax, toy, 0.5)
    assert b.norm_aoi == 1.0 and b.norm_power == 1.0


@pytest.mark.parametrize("zeta", [0.0, -0.1, 1.5])
def test_objective_rejects_zeta(toy, zeta):
    with pytest.raises(ValidationError):
        objective(20.0, 0.1, toy, zeta)


def test_degenerate_range_rejected():
    s = build_scenario(dict(V=1, F=1, T=1, demand=[[1]]))
    with pytest.raises(ValidationError, match="degenerate"):
        objective(1.0, 0.0, s, 0.5)


def test_reward_at_lower_bound(toy):
    # one slot in, the AoI range is degenerate and no power was spent, so rho = 0
    st_ = AoiState.initial(toy.V, toy.F, toy.delta)
    st_ = step_aoi(st_, [0] * 5, [False] * 5, toy.demand)
    assert slot_reward(st_, [0.0], toy, 0.7) == pytest.approx(-math.log(1e-6))


def test_reward_log_one(toy):
    # construct rho = 1 - nu with zeta = 1 and a slot pinned at the upper bound
    nu = 1e-6
    st_ = AoiState.initial(toy.V, toy.F, toy.delta)
    st_ = step_aoi(st_, [0] * 5, [False] * 5, toy.demand)
    st_ = step_aoi(st_, [0] * 5, [False] * 5, toy.demand)
    rho = slot_cost(st_, [0.0, 0.0], toy, 0.5)
    assert rho == pytest.approx(0.5)
    assert slot_reward(st_, [0.0, 0.0], toy, 1.0, nu=nu) == pytest.approx(-math.log(1 + nu))
    p = (1 - nu) * toy.Pmax * 2
    assert slot_reward(st_, [p, 0.0], toy, 1e-12, nu=nu) == pytest.approx(0.0, abs=1e-9)


def test_reward_matches_replay_log(toy):
    from aoisched.schedulers import exhaustive_policy

    res = exhaustive_policy(toy, 0.5)
    st_ = AoiState.initial(toy.V, toy.F, toy.delta)
    hist = []
    for rec in res.records[:4]:
        st_ = step_aoi(st_, rec.mu, rec.success, toy.demand)
        hist.append(sum(rec.powers))
    # independent recomputation from logged weighted age sums
    cum = sum(r.weighted_age_sum for r in res.records[:4])
    lo = toy.delta / 4 * sum(min_age_sum(int(R), 4) for R in toy.demand.sum(axis=1))
    hi = toy.delta * 5 / 2 * toy.demand.sum()
    rho = 0.5 * (cum / 4 - lo) / (hi - lo) + 0.5 * sum(hist) / 4 / toy.Pmax
    assert slot_reward(st_, hist, toy, 0.5) == pytest.approx(-math.log(rho + 1e-6), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 5), st.integers(1, 4), st.integers(2, 10), st.integers(0, 2**31 - 1)
)
def test_bound_sandwich(V, F, T, seed):
    rng = np.random.default_rng(seed)
    demand = (rng.uniform(size=(V, F)) < 0.6).astype(int)
    demand[np.arange(V), rng.integers(F, size=V)] = 1
    mus = []
    for _ in range(T):
        mu = np.zeros(V, dtype=int)
        for i in range(V):
            opts = np.concatenate([[0], np.flatnonzero(demand[i]) + 1])
            mu[i] = rng.choice(opts)
        mus.append(mu)
    ok = rng.uniform(size=(T, V)) < 0.8
    s = _run(mus, ok, demand)
    avg = average_aoi(s)
    scen = build_scenario(dict(V=V, F=F, T=T, demand=demand))
    assert aoi_lower_bound(scen) - 1e-12 <= avg <= aoi_upper_bound(scen) + 1e-12


def test_replay_markov(toy):
    from aoisched.schedulers import exhaustive_policy

    res = exhaustive_policy(toy, 0.5)
    s = _run(res.schedule, res.success, toy.demand)
    assert s.cumulative * toy.delta / toy.T == pytest.approx(res.breakdown.avg_aoi)
