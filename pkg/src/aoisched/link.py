"""Short-packet error probability, SINR thresholds, MRT beamforming and SINR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from ._validation import InfeasibleError, ValidationError

LN2 = math.log(2.0)


def q_function(q):
    """Gaussian tail probability P(Z > q) for a standard normal Z."""
    return 0.5 * erfc(np.asarray(q, dtype=float) / math.sqrt(2.0))


def _error_argument(gamma, delta2, omega, L):
    gamma = np.asarray(gamma, dtype=float)
    dispersion = -np.expm1(-2.0 * np.log1p(gamma))  # 1 - (1+gamma)^-2
    n = delta2 * omega
    return np.sqrt(n / dispersion) * (np.log1p(gamma) - L * LN2 / n)


def decoding_error_prob(gamma, scenario=None, *, delta2=None, omega=None, L=None):
    """Normal-approximation block error probability at SINR ``gamma``.

    Radio constants come from ``scenario`` unless given explicitly.
    """
    if scenario is not None:
        delta2 = scenario.delta2 if delta2 is None else delta2
        omega = scenario.omega if omega is None else omega
        L = scenario.L if L is None else L
    if delta2 is None or delta2 <= 0:
        raise ValidationError("transmission time delta - delta1 must be positive")
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise ValidationError("SINR must be positive")
    out = q_function(_error_argument(g, delta2, omega, L))
    return float(out) if out.ndim == 0 else out


def invert_error_to_sinr(epsilon_max, scenario=None, *, max_iter=60, **radio):
    """Smallest SINR whose error probability does not exceed ``epsilon_max``.

    Geometric bracket expansion followed by bisection on log(gamma); relies on
    the error probability being strictly decreasing in the SINR.
    """
    if not 0 < epsilon_max < 0.5:
        raise ValidationError(f"epsilon_max must lie in (0, 0.5), got {epsilon_max!r}")

    def eps(g):
        return decoding_error_prob(g, scenario, **radio)

    # double from the bottom of the admissible range until the target is met
    lo = 1e-12
    hi = 1e-12
    while eps(hi) > epsilon_max:
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            raise InfeasibleError(f"no SINR bracket for epsilon_max={epsilon_max} within [1e-12, 1e12]")
    if hi == lo:
        return hi
    # invariant: eps(lo) > target >= eps(hi)
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(max_iter):
        mid = 0.5 * (llo + lhi)
        if mid in (llo, lhi):
            break
        if eps(math.exp(mid)) > epsilon_max:
            llo = mid
        else:
            lhi = mid
    return math.exp(lhi)


@dataclass(frozen=True)
class BeamformerSet:
    w: np.ndarray  # (F, N) complex
    p: np.ndarray  # (F,)


def mrt_beamformers(mu, powers, channel, F=None) -> BeamformerSet:
    mu = np.asarray(mu, dtype=int)
    powers = np.asarray(powers, dtype=float)
    F = len(powers) if F is None else F
    u = mrt_directions(mu, channel, F)
    p = np.where(np.linalg.norm(u, axis=1) > 0, powers, 0.0)
    return BeamformerSet(w=np.sqrt(p)[:, None] * u, p=p)


def mrt_directions(mu, channel, F) -> np.ndarray:
    """Unit-norm MRT directions per process for the assignment ``mu``.

    ``mu[i]`` is 0 when vehicle ``i`` is idle, otherwise its 1-based process.
    Row ``l-1`` combines the channels of vehicles assigned process ``l``, each
    weighted by ``1 / sqrt(N * chi_i)``; unscheduled processes get zero rows.
    """
    mu = np.asarray(mu, dtype=int)
    h = channel.h
    N = h.shape[1]
    u = np.zeros((F, N), dtype=complex)
    weights = 1.0 / np.sqrt(N * channel.chi)
    for i, l in enumerate(mu):
        if l:
            u[l - 1] += weights[i] * h[i]
    norms = np.linalg.norm(u, axis=1)
    nz = norms > 0
    u[nz] /= norms[nz, None]
    return u


def gain_matrix(mu, channel, F) -> np.ndarray:
    """``g[i, l] = |h_i^H u_l|^2`` for unit-power MRT directions."""
    u = mrt_directions(mu, channel, F)
    return np.abs(np.conj(channel.h) @ u.T) ** 2


def sinr(i, l, beamformers: BeamformerSet, channel, sigma2) -> float:
    """SINR at vehicle ``i`` (0-based) decoding process ``l`` (1-based)."""
    resp = np.abs(np.conj(channel.h[i]) @ beamformers.w.T) ** 2
    signal = resp[l - 1]
    interference = resp.sum() - signal
    return float(signal / (interference + sigma2))


def sinr_all(mu, powers, gains, sigma2) -> np.ndarray:
    """SINR of every vehicle under assignment ``mu``; idle vehicles get 0.

    ``gains`` is the output of :func:`gain_matrix` for the same assignment.
    """
    mu = np.asarray(mu, dtype=int)
    rx = gains * np.asarray(powers, dtype=float)[None, :]
    total = rx.sum(axis=1)
    out = np.zeros(len(mu))
    active = mu > 0
    idx = np.flatnonzero(active)
    sig = rx[idx, mu[idx] - 1]
    out[idx] = sig / (total[idx] - sig + sigma2)
    return out
