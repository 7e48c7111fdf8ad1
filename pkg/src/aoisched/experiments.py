"""Seeded experiment orchestration: single runs, sweeps and solver comparisons.

Configuration files are YAML (JSON is a subset). Layout::

    scenario:            # any field accepted by build_scenario
      T: 7
      randomDemand: {perVehicleCount: 2}
    experiment:
      solvers: [aco, exhaustive]
      zeta: [0.1, 0.5, 0.9]
      reps: 3
      seed: 0
    solverParams:
      aco: {n_ants: 100}

See ``docs/config_schema.md`` for the full schema.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ._validation import ValidationError, check_positive_int, check_zeta
from .dqn import DQNScheduler
from .scenario import DEFAULTS, build_scenario
from .schedulers import ACOScheduler, ExhaustiveScheduler, RandomScheduler

log = logging.getLogger(__name__)

SOLVERS = {
    "random": RandomScheduler,
    "exhaustive": ExhaustiveScheduler,
    "aco": ACOScheduler,
    "dqn": DQNScheduler,
}
_STOCHASTIC = {"random", "aco", "dqn"}
MASK64 = (1 << 64) - 1


class ConfigError(ValidationError):
    """Configuration problem, tagged with the offending field and line when known."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


# --- seeds ----------------------------------------------------------------

def splitmix64(x: int) -> int:
    """One step of the SplitMix64 output function (Steele, Lea and Flood)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """64-bit seed for replication ``index``: the index-th SplitMix64 output from ``base``."""
    return splitmix64((int(base) + int(index) * 0x9E3779B97F4A7C15) & MASK64)


def replication_seeds(base: int, reps: int) -> list[int]:
    return [derive_seed(base, k) for k in range(check_positive_int(reps, "reps"))]


# --- configuration ----------------------------------------------------------

def _key_lines(node, prefix="", out=None) -> dict[str, int]:
    """Map dotted key paths of a YAML mapping to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def parse_config(text: str) -> tuple[dict, dict[str, int]]:
    """Parse YAML/JSON text; returns the mapping and a key-path -> line index."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"cannot parse config: {exc.problem}", line=mark.line + 1 if mark else None) from None
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", line=1)
    return data, _key_lines(node)


def load_config(path) -> tuple[dict, dict[str, int]]:
    return parse_config(Path(path).read_text())


@dataclass
class ExperimentSpec:
    scenario: dict = field(default_factory=dict)
    solvers: list = field(default_factory=lambda: ["aco"])
    zetas: list = field(default_factory=lambda: [0.5])
    demand_counts: list | None = None  # perVehicleCount sweep
    reps: int = 1
    seed: int = 0
    out: str | None = None
    solver_params: dict = field(default_factory=dict)

    def validate(self, lines: Mapping[str, int] | None = None):
        lines = lines or {}
        for name in self.solvers:
            if name not in SOLVERS:
                raise ConfigError(f"unknown solver {name!r}", "experiment.solvers", lines.get("experiment.solvers"))
        for z in self.zetas:
            try:
                check_zeta(z)
            except ValidationError as exc:
                raise ConfigError(str(exc), "experiment.zeta", lines.get("experiment.zeta")) from None
        try:
            check_positive_int(self.reps, "reps")
        except ValidationError as exc:
            raise ConfigError(str(exc), "experiment.reps", lines.get("experiment.reps")) from None
        allowed = set(DEFAULTS) | {"demand", "randomDemand", "vehicleInit"}
        for key in self.scenario:
            if key not in allowed:
                raise ConfigError("unknown scenario field", f"scenario.{key}", lines.get(f"scenario.{key}"))
        for name, params in self.solver_params.items():
            if name not in SOLVERS:
                raise ConfigError(f"unknown solver {name!r}", f"solverParams.{name}", lines.get(f"solverParams.{name}"))
            valid = SOLVERS[name]().get_params()
            for key in params:
                if key not in valid or key in ("zeta", "random_state"):
                    path = f"solverParams.{name}.{key}"
                    raise ConfigError("unknown solver parameter", path, lines.get(path))
        return self


def spec_from_config(data: Mapping[str, Any], lines: Mapping[str, int] | None = None) -> ExperimentSpec:
    lines = lines or {}
    unknown = set(data) - {"scenario", "experiment", "solverParams"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown top-level section", key, lines.get(key))
    exp = dict(data.get("experiment") or {})
    known = {"solvers", "solver", "zeta", "perVehicleDemand", "reps", "seed", "out"}
    for key in exp:
        if key not in known:
            raise ConfigError("unknown experiment field", f"experiment.{key}", lines.get(f"experiment.{key}"))
    solvers = exp.get("solvers", exp.get("solver", ["aco"]))
    zetas = exp.get("zeta", [0.5])
    demand = exp.get("perVehicleDemand")
    spec = ExperimentSpec(
        scenario=dict(data.get("scenario") or {}),
        solvers=[solvers] if isinstance(solvers, str) else list(solvers),
        zetas=[zetas] if isinstance(zetas, (int, float)) else list(zetas),
        demand_counts=None if demand is None else ([demand] if isinstance(demand, int) else list(demand)),
        reps=exp.get("reps", 1),
        seed=exp.get("seed", 0),
        out=exp.get("out"),
        solver_params={k: dict(v or {}) for k, v in (data.get("solverParams") or {}).items()},
    )
    return spec.validate(lines)


# --- running ----------------------------------------------------------------

@dataclass
class RunSummary:
    seed: int
    solver: str
    zeta: float
    per_vehicle_demand: int | None
    norm_aoi: float
    norm_power: float
    avg_aoi: float
    avg_power: float
    objective: float
    wall_time: float
    trajectory: str | None = None

    def row(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def make_solver(name: str, zeta: float, seed: int, params: Mapping | None = None):
    est = SOLVERS[name](zeta=zeta)
    if params:
        est.set_params(**params)
    if name in _STOCHASTIC:
        est.set_params(random_state=seed)
    return est


def _scenario_for(spec: ExperimentSpec, seed: int, demand_count: int | None):
    cfg = dict(spec.scenario)
    cfg["seed"] = seed
    if demand_count is not None:
        cfg.pop("demand", None)
        cfg["randomDemand"] = {"perVehicleCount": int(demand_count)}
    return build_scenario(cfg)


def run_experiment(spec: ExperimentSpec) -> list[RunSummary]:
    """Every (demand count, zeta, replication, solver) combination, in that nesting order.

    Solvers share the scenario and RNG seed of each replication. When
    ``spec.out`` is set, per-slot trajectories go to ``<out>/trajectories``
    and the summary to ``<out>/summary.json``.
    """
    spec.validate()
    out = Path(spec.out) if spec.out else None
    if out:
        (out / "trajectories").mkdir(parents=True, exist_ok=True)
    seeds = replication_seeds(spec.seed, spec.reps)
    rows: list[RunSummary] = []
    for dc in spec.demand_counts or [None]:
        for zeta in spec.zetas:
            for k, seed in enumerate(seeds):
                scenario = _scenario_for(spec, seed, dc)
                for name in spec.solvers:
                    t0 = time.perf_counter()
                    est = make_solver(name, zeta, seed, spec.solver_params.get(name)).fit(scenario)
                    res = est.result_
                    b = res.breakdown
                    path = None
                    if out:
                        tag = f"{name}_z{zeta:g}_rep{k}" + (f"_R{dc}" if dc is not None else "")
                        path = str(out / "trajectories" / f"{tag}.csv")
                        Path(path).write_text(res.to_csv())
                    rows.append(
                        RunSummary(
                            seed=seed,
                            solver=name,
                            zeta=float(zeta),
                            per_vehicle_demand=dc,
                            norm_aoi=b.norm_aoi,
                            norm_power=b.norm_power,
                            avg_aoi=b.avg_aoi,
                            avg_power=b.avg_power,
                            objective=b.value,
                            wall_time=time.perf_counter() - t0,
                            trajectory=path,
                        )
                    )
                    log.info("%s zeta=%g rep=%d objective=%.6g", name, zeta, k, b.value)
    if out:
        write_summary(rows, out / "summary.json", spec)
    return rows


def aggregate(rows: list[RunSummary]) -> list[dict]:
    """Mean and standard deviation per (solver, zeta, demand count)."""
    groups: dict[tuple, list[RunSummary]] = {}
    for r in rows:
        groups.setdefault((r.solver, r.zeta, r.per_vehicle_demand), []).append(r)
    out = []
    for (solver, zeta, dc), rs in sorted(groups.items(), key=lambda kv: (kv[0][2] or 0, kv[0][1], kv[0][0])):
        entry = {"solver": solver, "zeta": zeta, "perVehicleDemand": dc, "n": len(rs)}
        for key in ("objective", "norm_aoi", "norm_power", "avg_aoi", "avg_power", "wall_time"):
            vals = np.array([getattr(r, key) for r in rs])
            entry[f"{key}_mean"] = float(vals.mean())
            entry[f"{key}_std"] = float(vals.std())
        out.append(entry)
    return out


def write_summary(rows, path, spec: ExperimentSpec | None = None):
    doc = {
        "spec": None if spec is None else {k: v for k, v in spec.__dict__.items()},
        "runs": [r.row() for r in rows],
        "aggregate": aggregate(rows),
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def compare_solvers(spec: ExperimentSpec) -> list[dict]:
    """Per-zeta mean objectives, pairwise win rates and the gap to exhaustive search.

    ``win_rate[a>b]`` is the fraction of common seeds on which solver ``a``
    reached a strictly lower objective than ``b``.
    """
    if len(set(spec.solvers)) < 2:
        raise ValidationError("need >= 2 solvers")
    rows = run_experiment(spec)
    table = []
    for dc in spec.demand_counts or [None]:
        for zeta in spec.zetas:
            sel = [r for r in rows if r.zeta == float(zeta) and r.per_vehicle_demand == dc]
            by = {name: np.array([r.objective for r in sel if r.solver == name]) for name in spec.solvers}
            entry: dict[str, Any] = {"zeta": float(zeta), "perVehicleDemand": dc}
            for name, vals in by.items():
                entry[f"{name}_mean"] = float(vals.mean())
            for a, b in combinations(spec.solvers, 2):
                entry[f"win_rate[{a}>{b}]"] = float(np.mean(by[a] < by[b]))
                entry[f"win_rate[{b}>{a}]"] = float(np.mean(by[b] < by[a]))
            if "exhaustive" in by:
                ref = by["exhaustive"].mean()
                for name in spec.solvers:
                    if name != "exhaustive":
                        entry[f"{name}_gap"] = float(by[name].mean() / ref - 1.0)
            table.append(entry)
    return table


def sweep(spec: ExperimentSpec, axis: str, values) -> list[dict]:
    """Aggregated rows over a zeta or per-vehicle-demand sweep."""
    if axis == "zeta":
        spec = replace(spec, zetas=list(values))
    elif axis == "perVehicleDemand":
        spec = replace(spec, demand_counts=[int(v) for v in values])
    else:
        raise ValidationError(f"unknown sweep axis {axis!r}")
    return aggregate(run_experiment(spec))
