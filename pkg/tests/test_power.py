import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from aoisched.power import PowerProblem, _simplex, lp_oracle, min_power_allocation
from aoisched.simulate import power_cache, slot_success


def _problem(rng, V, F, gamma=1.0, sigma2=1e-3, Pmax=1.0, strong=5.0):
    mu = rng.integers(0, F + 1, size=V)
    g = rng.uniform(0.0, 1.0, size=(V, F))
    g[np.arange(V), np.maximum(mu - 1, 0)] += strong
    return PowerProblem(gains=g, gamma_hat=gamma, mu=mu, sigma2=sigma2, Pmax=Pmax)


def test_single_link_closed_form():
    pr = PowerProblem(gains=np.array([[0.2]]), gamma_hat=3.0, mu=np.array([1]), sigma2=0.01, Pmax=1.0)
    sol = min_power_allocation(pr)
    assert sol.feasible
    assert sol.p[0] == pytest.approx(3.0 * 0.01 / 0.2, rel=1e-12)


def test_empty_assignment():
    pr = PowerProblem(gains=np.ones((3, 2)), gamma_hat=1.0, mu=np.zeros(3, dtype=int), sigma2=0.1, Pmax=1.0)
    sol = min_power_allocation(pr)
    assert sol.feasible and np.all(sol.p == 0)


def test_two_by_two_against_linprog(rng):
    for _ in range(20):
        g = rng.uniform(0.05, 1.0, size=(2, 2)) + np.eye(2) * 2
        pr = PowerProblem(gains=g, gamma_hat=0.8, mu=np.array([1, 2]), sigma2=0.05, Pmax=10.0)
        sol = min_power_allocation(pr)
        gh, s2 = 0.8, 0.05
        A = [[-g[0, 0], gh * g[0, 1]], [gh * g[1, 0], -g[1, 1]]]
        ref = linprog([1, 1], A_ub=A, b_ub=[-gh * s2, -gh * s2], bounds=[(0, None)] * 2)
        assert ref.status == 0 and sol.feasible
        assert sol.total == pytest.approx(ref.fun, rel=1e-6)
        assert lp_oracle(pr).total == pytest.approx(ref.fun, rel=1e-6)


def test_infeasible_budget():
    pr = PowerProblem(gains=np.array([[1e-4]]), gamma_hat=1.0, mu=np.array([1]), sigma2=1.0, Pmax=1.0)
    assert not min_power_allocation(pr).feasible
    assert not lp_oracle(pr).feasible


def test_infeasible_interference():
    # each link sees the other at equal strength with threshold above 1
    g = np.ones((2, 2))
    pr = PowerProblem(gains=g, gamma_hat=2.0, mu=np.array([1, 2]), sigma2=1e-3, Pmax=1e6)
    assert not min_power_allocation(pr).feasible
    assert not lp_oracle(pr).feasible


def test_zero_own_gain_infeasible():
    pr = PowerProblem(gains=np.array([[0.0, 1.0]]), gamma_hat=1.0, mu=np.array([1]), sigma2=1.0, Pmax=1.0)
    assert not min_power_allocation(pr).feasible


def test_simplex_small_lp():
    # min x + y  s.t.  -x - 2y <= -4, -3x - y <= -6
    x, status = _simplex(np.array([1.0, 1.0]), np.array([[-1.0, -2.0], [-3.0, -1.0]]), np.array([-4.0, -6.0]))
    assert status == "optimal"
    np.testing.assert_allclose(x, [1.6, 1.2], rtol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_fixed_point_matches_simplex(V, F, seed):
    rng = np.random.default_rng(seed)
    pr = _problem(rng, V, F, gamma=rng.uniform(0.1, 2.0), Pmax=rng.uniform(0.5, 20.0))
    fp, lp = min_power_allocation(pr), lp_oracle(pr)
    assert fp.feasible == lp.feasible
    if fp.feasible:
        assert fp.total == pytest.approx(lp.total, rel=1e-6, abs=1e-12)
        if (pr.mu > 0).any():
            assert pr.constraint_slack(fp.p).min() >= -1e-9
        assert fp.total <= pr.Pmax * (1 + 1e-9)


def test_toy_solutions_meet_error_target(toy):
    cache = power_cache(toy)
    for t in range(1, toy.T + 1):
        for mu in ([1, 0, 0, 0, 0], [1, 3, 4, 2, 1], [4, 1, 1, 3, 2]):
            sol = cache.solve(t, mu)
            if sol.feasible:
                ok = slot_success(toy, t, mu, sol.p)
                assert ok[np.asarray(mu) > 0].all() and not ok[np.asarray(mu) == 0].any()


def test_reduced_power_fails_target(toy):
    mu = [1, 3, 0, 0, 0]
    sol = power_cache(toy).solve(2, mu)
    assert sol.feasible
    assert not slot_success(toy, 2, mu, sol.p * 0.99)[:2].all()
