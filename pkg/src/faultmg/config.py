"""Experiment configuration: JSON file <-> validated dataclasses.

Example (all keys optional except ``grid`` and ``partition``)::

    {
      "grid": {"n0": 12, "L": 2},
      "partition": [4, 4, 3],
      "solver": {"pre_smooth": 3, "post_smooth": 3, "cycle": "V",
                 "stop_tol": 1e-15, "max_cycles": 50,
                 "coarse_policy": "direct", "coarse_sweeps": 10},
      "scenario": {"fault_cycles": [5, 7, 11], "victim": null},
      "strategies": ["ccr", "V:1", "W:2", "pcg:10", "smooth:10"],
      "eta_speedup": 4.0,
      "kappa_floor": 1e-14,
      "checkpoints": "memory",
      "output_dir": "out",
      "seed": null
    }

``victim: null`` picks the lowest-id rank whose box does not touch the
domain boundary (or rank 0 if there is none).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .resilience import RecoveryStrategy
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


class ConfigFileError(OSError):
    pass


@dataclass
class GridConfig:
    n0: int = 12
    L: int = 2


@dataclass
class ScenarioConfig:
    fault_cycles: list[int] = field(default_factory=lambda: [5])
    victim: int | None = None


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    partition: tuple[int, int, int] = (4, 4, 3)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    strategies: list[RecoveryStrategy] = field(default_factory=list)
    eta_speedup: float = 1.0
    kappa_floor: float = 1e-14
    checkpoints: str = "memory"
    output_dir: str = "out"
    seed: int | None = None  # reserved; every run is deterministic

    @property
    def rank_count(self) -> int:
        Px, Py, Pz = self.partition
        return Px * Py * Pz

    def default_victim(self) -> int:
        if self.scenario.victim is not None:
            return self.scenario.victim
        Px, Py, Pz = self.partition
        for pz in range(Pz):
            for py in range(Py):
                for px in range(Px):
                    if 0 < px < Px - 1 and 0 < py < Py - 1 and 0 < pz < Pz - 1:
                        return px + Px * (py + Py * pz)
        return 0

    def to_dict(self) -> dict:
        s = self.solver
        return {
            "grid": {"n0": self.grid.n0, "L": self.grid.L},
            "partition": list(self.partition),
            "solver": {"pre_smooth": s.pre_smooth, "post_smooth": s.post_smooth,
                       "cycle": s.cycle.value, "stop_tol": s.stop_tol, "max_cycles": s.max_cycles,
                       "coarse_policy": s.coarse_policy, "coarse_sweeps": s.coarse_sweeps},
            "scenario": {"fault_cycles": list(self.scenario.fault_cycles), "victim": self.scenario.victim},
            "strategies": [st.to_dict() for st in self.strategies],
            "eta_speedup": self.eta_speedup,
            "kappa_floor": self.kappa_floor,
            "checkpoints": self.checkpoints,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def _keys(cls):
    return {f.name for f in fields(cls)}


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed JSON object; raises :class:`ConfigError` listing every violation."""
    errs: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    top = _keys(ExperimentConfig)
    errs += [f"unknown key {k!r}" for k in raw if k not in top]
    for req in ("grid", "partition"):
        if req not in raw:
            errs.append(f"missing required key {req!r}")

    def section(name, cls):
        d = raw.get(name, {})
        if not isinstance(d, dict):
            errs.append(f"{name} must be an object")
            return {}
        bad = [k for k in d if k not in _keys(cls)]
        errs.extend(f"unknown key {name}.{k}" for k in bad)
        return {k: v for k, v in d.items() if k not in bad}

    g = section("grid", GridConfig)
    grid = GridConfig(**g)
    if not _int(grid.n0) or grid.n0 < 2:
        errs.append(f"grid.n0 must be an integer >= 2, got {grid.n0!r}")
    if not _int(grid.L) or grid.L < 1:
        errs.append(f"grid.L must be an integer >= 1, got {grid.L!r}")

    part = raw.get("partition", [4, 4, 3])
    if not (isinstance(part, (list, tuple)) and len(part) == 3 and all(_int(p) and p >= 1 for p in part)):
        errs.append(f"partition must be three positive integers, got {part!r}")
        part = (1, 1, 1)
    part = tuple(part)
    if _int(grid.n0):
        for name, P in zip(("Px", "Py", "Pz"), part):
            if grid.n0 % P:
                errs.append(f"n0={grid.n0} is not divisible by {name}={P} (partition {list(part)})")
    if part[0] * part[1] * part[2] < 2:
        errs.append(f"partition {list(part)} has a single rank; a fault needs >= 2")

    s = section("solver", SolverConfig)
    try:
        solver = SolverConfig(**s)
    except (ValueError, TypeError) as exc:
        errs.append(f"solver: {exc}")
        solver = SolverConfig()

    sc = section("scenario", ScenarioConfig)
    fc = sc.get("fault_cycles", [5])
    if _int(fc):
        fc = [fc]
    if not (isinstance(fc, list) and fc and all(_int(k) and k >= 1 for k in fc)):
        errs.append(f"scenario.fault_cycles must be a non-empty list of integers >= 1, got {fc!r}")
        fc = [5]
    victim = sc.get("victim")
    R = part[0] * part[1] * part[2]
    if victim is not None and not (_int(victim) and 0 <= victim < R):
        errs.append(f"scenario.victim={victim!r} is not a rank id in 0..{R - 1}")
    if max(fc) >= solver.max_cycles:
        errs.append(f"fault after cycle {max(fc)} never happens with max_cycles={solver.max_cycles}")
    scenario = ScenarioConfig(sorted(set(fc)), victim)

    strategies = []
    raw_st = raw.get("strategies", [])
    if not isinstance(raw_st, list):
        errs.append("strategies must be a list")
        raw_st = []
    for item in raw_st:
        try:
            st = RecoveryStrategy.parse(item)
        except (ValueError, TypeError, KeyError) as exc:
            errs.append(f"strategy {item!r}: {exc}")
            continue
        if st.kind.value == "none":
            continue  # the no-recovery run is always part of the suite
        strategies.append(st)
    labels = [st.label for st in strategies]
    dups = sorted({l for l in labels if labels.count(l) > 1})
    if dups:
        errs.append(f"duplicate strategies {dups}")

    eta = raw.get("eta_speedup", 1.0)
    if not _num(eta) or eta < 1:
        errs.append(f"eta_speedup must be a number >= 1, got {eta!r}")
        eta = 1.0
    floor = raw.get("kappa_floor", 1e-14)
    if not _num(floor) or not 0 < floor < 1:
        errs.append(f"kappa_floor must lie in (0, 1), got {floor!r}")
    ck = raw.get("checkpoints", "memory")
    if ck not in ("memory", "file"):
        errs.append(f"checkpoints must be 'memory' or 'file', got {ck!r}")
    out = raw.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        errs.append("output_dir must be a non-empty string")
    seed = raw.get("seed")
    if seed is not None and not _int(seed):
        errs.append(f"seed must be an integer or null, got {seed!r}")

    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(grid, part, solver, scenario, strategies, float(eta), float(floor),
                            ck, out, seed)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
