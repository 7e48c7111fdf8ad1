"""Problem instance, straight-road mobility and line-of-sight channel generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ._validation import ValidationError

# Table I defaults; delta1, the road segment and lane offset are not given there.
DEFAULTS: dict[str, Any] = {
    "V": 5,
    "F": 4,
    "T": 7,
    "delta": 1.0,
    "delta1": None,  # 0.1 * delta
    "N": 64,
    "fc": 3e9,
    "c0": 2.99e8,
    "L": 1024,
    "omega": 1e7,
    "Pmax": 1.0,
    "sigma2": 0.1,
    "epsilonMax": 1e-6,
    "rsuPosition": (0.0, 0.0),
    "speedRange": (10.0, 15.0),
    "segment": (-100.0, 100.0),
    "laneOffset": 10.0,
    "seed": 0,
}

# Demand matrix of the five-vehicle, four-process illustrative example.
TOY_DEMAND = np.array(
    [
        [1, 0, 0, 1],
        [1, 0, 1, 0],
        [1, 0, 0, 1],
        [1, 1, 1, 0],
        [1, 1, 0, 0],
    ],
    dtype=np.int8,
)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Static problem instance.

    Arrays are stored read-only; ``demand`` is the V x F binary interest
    matrix, ``vehicle_x0``/``vehicle_y`` the initial coordinates (m) and
    ``speeds`` the constant speeds along +x (m/s).
    """

    V: int
    F: int
    T: int
    delta: float
    delta1: float
    N: int
    fc: float
    c0: float
    L: float
    omega: float
    Pmax: float
    sigma2: float
    epsilonMax: float
    demand: np.ndarray
    rsuPosition: tuple[float, float]
    vehicle_x0: np.ndarray
    vehicle_y: np.ndarray
    speeds: np.ndarray
    seed: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("demand", "vehicle_x0", "vehicle_y", "speeds"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        validate_scenario(self)

    @property
    def delta2(self) -> float:
        """Information transmission time per slot."""
        return self.delta - self.delta1

    @property
    def demand_counts(self) -> np.ndarray:
        return self.demand.sum(axis=1).astype(int)

    @property
    def channels(self) -> tuple["ChannelState", ...]:
        """Channel states for slots 1..T (index 0 is slot 1), computed once."""
        if "channels" not in self._cache:
            self._cache["channels"] = tuple(
                channel_state(self, t) for t in range(1, self.T + 1)
            )
        return self._cache["channels"]

    @property
    def gamma_hat(self) -> float:
        """SINR threshold meeting ``epsilonMax`` with equality."""
        if "gamma_hat" not in self._cache:
            from .link import invert_error_to_sinr

            self._cache["gamma_hat"] = invert_error_to_sinr(self.epsilonMax, self)
        return self._cache["gamma_hat"]


@dataclass(frozen=True, eq=False)
class ChannelState:
    t: int
    positions: np.ndarray  # (V, 2)
    distance: np.ndarray  # (V,)
    angle: np.ndarray  # (V,)
    doppler: np.ndarray  # (V,) Hz
    h: np.ndarray  # (V, N) complex
    chi: np.ndarray  # (V,) real large-scale gain
    doppler_phase: np.ndarray  # (V,) rad


def validate_scenario(s: Scenario) -> None:
    if s.V < 1 or s.F < 1 or s.T < 1:
        raise ValidationError("V, F and T must all be >= 1")
    if s.N < 1:
        raise ValidationError("N must be >= 1")
    if not 0 < s.delta1 < s.delta:
        raise ValidationError("delta1 must satisfy 0 < delta1 < delta")
    if not 0 < s.epsilonMax < 1:
        raise ValidationError("epsilonMax must lie in (0, 1)")
    if s.Pmax <= 0:
        raise ValidationError("Pmax must be positive")
    if s.sigma2 <= 0:
        raise ValidationError("sigma2 must be positive")
    if s.demand.shape != (s.V, s.F):
        raise ValidationError(f"demand must have shape ({s.V}, {s.F}), got {s.demand.shape}")
    if not np.isin(s.demand, (0, 1)).all():
        raise ValidationError("demand entries must be 0 or 1")
    empty = np.flatnonzero(s.demand.sum(axis=1) == 0)
    if empty.size:
        raise ValidationError(f"vehicle has empty demand (vehicle {empty[0] + 1})")
    for name in ("vehicle_x0", "vehicle_y", "speeds"):
        if getattr(s, name).shape != (s.V,):
            raise ValidationError(f"{name} must have length V={s.V}")


def random_demand(V: int, F: int, per_vehicle: int, rng: np.random.Generator) -> np.ndarray:
    """Each vehicle demands ``per_vehicle`` distinct processes chosen uniformly."""
    if not 1 <= per_vehicle <= F:
        raise ValidationError(f"perVehicleCount must be in [1, {F}], got {per_vehicle}")
    demand = np.zeros((V, F), dtype=np.int8)
    for i in range(V):
        demand[i, rng.choice(F, size=per_vehicle, replace=False)] = 1
    return demand


def build_scenario(config: Mapping[str, Any] | None = None, **overrides) -> Scenario:
    """Validated :class:`Scenario` from a config mapping plus keyword overrides.

    Random draws use one generator seeded by ``seed`` in a fixed order:
    speeds, then initial x positions, then (if requested) random demand.
    """
    cfg = dict(DEFAULTS)
    cfg.update(config or {})
    cfg.update(overrides)
    unknown = set(cfg) - set(DEFAULTS) - {"demand", "randomDemand", "vehicleInit", "solver"}
    if unknown:
        raise ValidationError(f"unknown scenario field(s): {sorted(unknown)}")

    V, F, T = int(cfg["V"]), int(cfg["F"]), int(cfg["T"])
    delta = float(cfg["delta"])
    delta1 = 0.1 * delta if cfg["delta1"] is None else float(cfg["delta1"])
    rng = np.random.default_rng(cfg["seed"])

    lo, hi = map(float, cfg["speedRange"])
    speeds = rng.uniform(lo, hi, size=V)
    a, b = map(float, cfg["segment"])
    x0 = rng.uniform(a, b, size=V)
    lane = np.broadcast_to(np.asarray(cfg["laneOffset"], dtype=float), (V,)).copy()

    init = cfg.get("vehicleInit")
    if init is not None:
        if len(init) != V:
            raise ValidationError(f"vehicleInit must list {V} vehicles")
        x0 = np.array([float(v["x"]) for v in init])
        lane = np.array([float(v.get("y", lane[k])) for k, v in enumerate(init)])
        speeds = np.array([float(v["speed"]) for v in init])

    if cfg.get("demand") is not None:
        demand = np.asarray(cfg["demand"], dtype=np.int8)
    elif cfg.get("randomDemand") is not None:
        demand = random_demand(V, F, int(cfg["randomDemand"]["perVehicleCount"]), rng)
    else:
        if (V, F) != TOY_DEMAND.shape:
            raise ValidationError("demand or randomDemand is required unless V=5, F=4")
        demand = TOY_DEMAND.copy()

    return Scenario(
        V=V,
        F=F,
        T=T,
        delta=delta,
        delta1=delta1,
        N=int(cfg["N"]),
        fc=float(cfg["fc"]),
        c0=float(cfg["c0"]),
        L=float(cfg["L"]),
        omega=float(cfg["omega"]),
        Pmax=float(cfg["Pmax"]),
        sigma2=float(cfg["sigma2"]),
        epsilonMax=float(cfg["epsilonMax"]),
        demand=demand,
        rsuPosition=tuple(map(float, cfg["rsuPosition"])),
        vehicle_x0=x0,
        vehicle_y=lane,
        speeds=speeds,
        seed=cfg["seed"],
    )


def toy_scenario(seed: int = 0, **overrides) -> Scenario:
    """Five vehicles, four processes, seven slots, Table I radio constants."""
    return build_scenario(dict(V=5, F=4, T=7, demand=TOY_DEMAND, seed=seed), **overrides)


def advance_mobility(scenario: Scenario, t: int) -> np.ndarray:
    """Vehicle coordinates at slot ``t`` (1-based) as a (V, 2) array."""
    if not 1 <= t <= scenario.T:
        raise ValidationError(f"slot index must be in [1, {scenario.T}], got {t}")
    x = scenario.vehicle_x0 + scenario.speeds * (t - 1) * scenario.delta
    return np.column_stack([x, scenario.vehicle_y])


def steering_vector(phi: float, N: int) -> np.ndarray:
    """Half-wavelength uniform linear array response."""
    return np.exp(1j * np.pi * np.arange(N) * np.sin(phi))


def large_scale_gain(distance, fc: float, c0: float):
    return c0 / (4 * np.pi * fc * np.asarray(distance, dtype=float) ** 2)


def channel_vector(scenario: Scenario, t: int, i: int) -> np.ndarray:
    """Channel of vehicle ``i`` (0-based) at slot ``t``."""
    pos = advance_mobility(scenario, t)[i]
    return _channel(scenario, pos, scenario.speeds[i])[0]


def _channel(scenario: Scenario, pos, speed):
    dx = pos[0] - scenario.rsuPosition[0]
    dy = pos[1] - scenario.rsuPosition[1]
    ell = float(np.hypot(dx, dy))
    if ell == 0.0:
        raise ValidationError("vehicle collocated with RSU (zero distance)")
    phi = float(np.arccos(np.clip(dx / ell, -1.0, 1.0)))
    doppler = speed * scenario.fc * np.cos(phi) / scenario.c0
    chi = float(large_scale_gain(ell, scenario.fc, scenario.c0))
    phase = 2 * np.pi * doppler
    h = np.sqrt(chi) * np.conj(steering_vector(phi, scenario.N)) * np.exp(1j * phase)
    return h, ell, phi, doppler, chi, phase


def channel_state(scenario: Scenario, t: int) -> ChannelState:
    pos = advance_mobility(scenario, t)
    rows = [_channel(scenario, pos[i], scenario.speeds[i]) for i in range(scenario.V)]
    h, ell, phi, dop, chi, phase = (np.array(col) for col in zip(*rows))
    for arr in (pos, h, ell, phi, dop, chi, phase):
        arr.setflags(write=False)
    return ChannelState(
        t=t, positions=pos, distance=ell, angle=phi, doppler=dop, h=h, chi=chi, doppler_phase=phase
    )
