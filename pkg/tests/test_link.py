import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoisched import ValidationError
from aoisched.link import (
    decoding_error_prob,
    gain_matrix,
    invert_error_to_sinr,
    mrt_beamformers,
    q_function,
    sinr,
    sinr_all,
)
from aoisched.scenario import build_scenario

RADIO = dict(delta2=0.9, omega=1e7, L=1024)


def _mp_q(x):
    mpmath.mp.dps = 40
    x = mpmath.mpf(x)
    return mpmath.quad(lambda z: mpmath.exp(-z * z / 2), [x, mpmath.inf]) / mpmath.sqrt(2 * mpmath.pi)


def _mp_error(gamma, delta2, omega, L):
    mpmath.mp.dps = 40
    g = mpmath.mpf(gamma)
    n = mpmath.mpf(delta2) * mpmath.mpf(omega)
    disp = 1 - (1 + g) ** -2
    arg = mpmath.sqrt(n / disp) * (mpmath.log(1 + g) - L * mpmath.log(2) / n)
    return _mp_q(arg)


def test_q_at_zero():
    assert q_function(0.0) == 0.5


def test_q_far_tail():
    assert q_function(40.0) < 1e-300


@pytest.mark.parametrize("x", [1.0, -1.3, 2.5, 5.0])
def test_q_matches_quadrature(x):
    assert abs(q_function(x) - float(_mp_q(x))) < 1e-12


def test_error_half_at_capacity_point():
    n = RADIO["delta2"] * RADIO["omega"]
    gamma = math.expm1(RADIO["L"] * math.log(2) / n)
    assert decoding_error_prob(gamma, **RADIO) == pytest.approx(0.5, abs=1e-9)


def test_error_large_sinr():
    assert decoding_error_prob(1e6, **RADIO) < 1e-12


def test_error_table_values_oracle():
    expected = float(_mp_error("1e-4", **RADIO))
    assert decoding_error_prob(1e-4, **RADIO) == pytest.approx(expected, rel=1e-9, abs=1e-15)


def test_error_soft_regime_oracle():
    radio = dict(delta2=1e-4, omega=1e6, L=64)
    for g in (0.5, 1.0, 2.0):
        assert decoding_error_prob(g, **radio) == pytest.approx(float(_mp_error(g, **radio)), rel=1e-9)


def test_error_rejects_nonpositive_sinr():
    with pytest.raises(ValidationError):
        decoding_error_prob(0.0, **RADIO)


def test_error_strictly_decreasing_on_grid():
    radio = dict(delta2=1e-4, omega=1e6, L=64)
    assert np.all(np.diff(decoding_error_prob(np.logspace(-6, 3, 1000), **radio)) <= 0)
    # strict across the band where the value is representable in float64
    eps = decoding_error_prob(np.logspace(-0.6, 1.2, 1000), **radio)
    assert 1e-300 < eps[-1] and eps[0] < 1.0
    assert np.all(np.diff(eps) < 0)


@pytest.mark.parametrize("target", [0.49, 1e-3, 1e-6, 1e-9])
def test_inversion_residual(target):
    g = invert_error_to_sinr(target, **RADIO)
    assert abs(decoding_error_prob(g, **RADIO) - target) <= 1e-9 * target


def test_inversion_monotone():
    assert invert_error_to_sinr(1e-6, **RADIO) > invert_error_to_sinr(1e-3, **RADIO)


@pytest.mark.parametrize("bad", [0.0, 0.5, 0.7, -1e-3])
def test_inversion_domain(bad):
    with pytest.raises(ValidationError):
        invert_error_to_sinr(bad, **RADIO)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 50.0))
def test_inversion_round_trip(gamma):
    radio = dict(delta2=1e-4, omega=1e6, L=64)
    eps = decoding_error_prob(gamma, **radio)
    if not 1e-300 < eps < 0.5:
        return
    assert invert_error_to_sinr(eps, **radio) == pytest.approx(gamma, rel=1e-8)


def test_table_gamma_hat(toy):
    assert decoding_error_prob(toy.gamma_hat, toy) == pytest.approx(toy.epsilonMax, rel=1e-9)


class _Chan:
    def __init__(self, h, chi):
        self.h = np.asarray(h, dtype=complex)
        self.chi = np.asarray(chi, dtype=float)


def _random_channel(rng, V, N):
    h = rng.normal(size=(V, N)) + 1j * rng.normal(size=(V, N))
    return _Chan(h, (np.abs(h) ** 2).mean(axis=1))


def test_single_vehicle_beamformer(rng):
    ch = _random_channel(rng, 1, 4)
    bf = mrt_beamformers([1], [0.3], ch)
    w = bf.w[0]
    assert np.linalg.norm(w) ** 2 == pytest.approx(0.3)
    # parallel to h
    assert abs(np.vdot(ch.h[0], w)) == pytest.approx(np.linalg.norm(ch.h[0]) * np.linalg.norm(w))


def test_zero_power_beamformer(rng):
    ch = _random_channel(rng, 2, 4)
    bf = mrt_beamformers([1, 2], [0.0, 0.2], ch)
    assert np.all(bf.w[0] == 0)


def test_symmetric_group(toy):
    s = build_scenario(
        dict(
            V=2, F=1, T=1, demand=[[1], [1]],
            vehicleInit=[dict(x=30.0, y=10.0, speed=10.0), dict(x=30.0, y=10.0, speed=10.0)],
        )
    )
    ch = s.channels[0]
    bf = mrt_beamformers([1, 1], [0.5], ch)
    assert np.linalg.norm(bf.w[0]) ** 2 == pytest.approx(0.5)
    r = np.abs(np.conj(ch.h) @ bf.w[0])
    assert r[0] == pytest.approx(r[1])


def test_norm_equals_power_on_toy(toy, rng):
    for t in range(toy.T):
        p = rng.uniform(0, 0.25, size=toy.F)
        bf = mrt_beamformers([1, 3, 4, 2, 1], p, toy.channels[t])
        np.testing.assert_allclose(np.sum(np.abs(bf.w) ** 2, axis=1), p, rtol=1e-12)


def test_sinr_no_interference(rng):
    ch = _random_channel(rng, 1, 3)
    bf = mrt_beamformers([1], [0.1], ch)
    expected = abs(np.vdot(ch.h[0], bf.w[0])) ** 2 / 1e-3
    assert sinr(0, 1, bf, ch, 1e-3) == pytest.approx(expected)


def test_sinr_zero_power(rng):
    ch = _random_channel(rng, 2, 3)
    bf = mrt_beamformers([1, 2], [0.0, 0.0], ch)
    assert sinr(0, 1, bf, ch, 1e-3) == 0.0


def _brute_sinr(h, chi, mu, p, sigma2):
    # independent loop implementation of the MRT combination and SINR ratio
    V, N = len(h), len(h[0])
    F = len(p)
    ws = []
    for l in range(1, F + 1):
        v = [0j] * N
        for i in range(V):
            if mu[i] == l:
                for n in range(N):
                    v[n] += h[i][n] / math.sqrt(N * chi[i])
        norm = math.sqrt(sum(abs(x) ** 2 for x in v))
        ws.append([math.sqrt(p[l - 1]) * x / norm if norm else 0j for x in v])
    out = []
    for i in range(V):
        if not mu[i]:
            out.append(0.0)
            continue
        resp = [abs(sum(h[i][n].conjugate() * w[n] for n in range(N))) ** 2 for w in ws]
        sig = resp[mu[i] - 1]
        out.append(sig / (sum(resp) - sig + sigma2))
    return out


def test_sinr_matches_brute_force(toy):
    ch = toy.channels[2]
    mu = [2, 1, 0, 2, 1]
    p = [0.05, 0.12, 0.0, 0.0]
    g = gain_matrix(mu, ch, toy.F)
    fast = sinr_all(mu, p, g, toy.sigma2)
    brute = _brute_sinr(ch.h.tolist(), ch.chi.tolist(), mu, p, toy.sigma2)
    np.testing.assert_allclose(fast, brute, rtol=1e-10)
    bf = mrt_beamformers(mu, p, ch)
    for i, l in enumerate(mu):
        if l:
            assert sinr(i, l, bf, ch, toy.sigma2) == pytest.approx(brute[i], rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_beamformer_homogeneity(alpha, seed):
    rng = np.random.default_rng(seed)
    ch = _random_channel(rng, 3, 4)
    mu = [1, 2, 1]
    p = rng.uniform(0.01, 1.0, size=2)
    a = np.abs(np.conj(ch.h) @ mrt_beamformers(mu, p, ch).w.T) ** 2
    b = np.abs(np.conj(ch.h) @ mrt_beamformers(mu, alpha * p, ch).w.T) ** 2
    np.testing.assert_allclose(b, alpha * a, rtol=1e-9)
