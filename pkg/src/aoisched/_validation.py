"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


class InfeasibleError(RuntimeError):
    """Raised when a requested quantity has no valid value (e.g. no bracket)."""


def check_zeta(zeta) -> float:
    if not isinstance(zeta, numbers.Real) or not 0 < zeta <= 1:
        raise ValidationError(f"zeta must lie in (0, 1], got {zeta!r}")
    return float(zeta)


def check_probability(p, name="probability", closed=False) -> float:
    lo_ok = p >= 0 if closed else p > 0
    hi_ok = p <= 1 if closed else p < 1
    if not (lo_ok and hi_ok):
        raise ValidationError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {p!r}")
    return float(p)


def check_positive_int(value, name, minimum=1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_rng(seed) -> np.random.Generator:
    """Turn None, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_scenario(scenario):
    from .scenario import Scenario

    if not isinstance(scenario, Scenario):
        raise ValidationError(f"expected a Scenario, got {type(scenario).__name__}")
    return scenario
