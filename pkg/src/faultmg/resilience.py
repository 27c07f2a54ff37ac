"""Single-rank crash and local recovery of the lost subdomain.

After a crash the solver stops, a substitute rank takes over with a zero
interior, the interface values come back from the neighbours' replicas,
and the Laplace problem on the lost box is solved with those values as
Dirichlet data before global cycling resumes.  Local solvers: Gauss-Seidel
sweeps, Jacobi-preconditioned CG, local V/W/F multigrid cycles, and a
sparse direct solve as the exact ceiling.  Complete checkpoint recovery
(CCR) restores the lost block from a per-cycle snapshot instead.
"""

from __future__ import annotations

import enum
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import splu

from .grid import boundary_coupling, gauss_seidel, interior_values, laplacian_matrix, norm, residual, set_interior
from .partition import DistributedState, assign_substitute, erase_rank, ghost_exchange
from .solver import BoxMultigrid, CycleType, SolverConfig


class RecoveryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FaultScenario:
    after_cycle: int
    victim: int

    def __post_init__(self):
        if self.after_cycle < 1:
            raise ValueError(f"fault must strike after cycle >= 1, got {self.after_cycle}")
        if self.victim < 0:
            raise ValueError(f"victim rank must be >= 0, got {self.victim}")


class StrategyKind(str, enum.Enum):
    NONE = "none"
    CCR = "ccr"
    SMOOTH = "smooth"
    PCG = "pcg"
    CYCLE = "cycle"
    DIRECT = "direct"


_STRATEGY_RE = re.compile(r"^\s*(?:(\d+)\s*[x:*]\s*)?([a-z]+)\s*(?:[x:*]\s*(\d+))?\s*$", re.I)


@dataclass(frozen=True)
class RecoveryStrategy:
    kind: StrategyKind
    iterations: int = 0
    cycle: CycleType = CycleType.V
    local_tol: float = 0.0
    eta_speedup: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "cycle", CycleType(self.cycle))
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.kind is StrategyKind.NONE and self.iterations:
            raise ValueError("strategy 'none' takes no local iterations")
        if self.eta_speedup < 1.0:
            raise ValueError(f"speedup factor must be >= 1, got {self.eta_speedup}")
        if self.local_tol < 0:
            raise ValueError("local_tol must be >= 0")

    @classmethod
    def none(cls):
        return cls(StrategyKind.NONE)

    @classmethod
    def ccr(cls):
        return cls(StrategyKind.CCR)

    @property
    def label(self) -> str:
        k, n = self.kind, self.iterations
        if k is StrategyKind.NONE:
            return "none"
        if k is StrategyKind.CCR:
            return "CCR"
        if k is StrategyKind.DIRECT:
            return "direct"
        name = {StrategyKind.SMOOTH: "Smth", StrategyKind.PCG: "PCG"}.get(k, f"{self.cycle.value}cycle")
        if self.local_tol:
            return f"{name}<{self.local_tol:g}"
        return f"{n}x{name}"

    @classmethod
    def parse(cls, item) -> "RecoveryStrategy":
        """From a dict or a short string: ``none``, ``ccr``, ``direct``,
        ``V:3`` / ``3xV``, ``W:2``, ``F:1``, ``pcg:10``, ``smooth:20``."""
        if isinstance(item, RecoveryStrategy):
            return item
        if isinstance(item, dict):
            d = dict(item)
            kind = str(d.pop("kind")).lower()
            if kind in ("v", "w", "f"):
                d["cycle"], kind = kind.upper(), "cycle"
            if "cycle" in d:
                d["cycle"] = str(d["cycle"]).upper()
            return cls(StrategyKind(kind), **d)
        m = _STRATEGY_RE.match(str(item))
        if not m:
            raise ValueError(f"cannot parse recovery strategy {item!r}")
        n = int(m.group(1) or m.group(3) or 0)
        word = m.group(2).lower()
        if word in ("v", "w", "f", "vcycle", "wcycle", "fcycle"):
            return cls(StrategyKind.CYCLE, n, CycleType(word[0].upper()))
        aliases = {"smth": "smooth", "gs": "smooth", "none": "none", "ccr": "ccr",
                   "pcg": "pcg", "smooth": "smooth", "direct": "direct"}
        if word not in aliases:
            raise ValueError(f"unknown recovery strategy {item!r}")
        return cls(StrategyKind(aliases[word]), n)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "iterations": self.iterations}
        if self.kind is StrategyKind.CYCLE:
            d["cycle"] = self.cycle.value
        if self.local_tol:
            d["local_tol"] = self.local_tol
        if self.eta_speedup != 1.0:
            d["eta_speedup"] = self.eta_speedup
        return d


class CheckpointStore:
    """In-memory per-cycle snapshots of every rank's finest-level iterate."""

    def __init__(self):
        self._snaps: dict[int, np.ndarray] = {}

    def write(self, states: DistributedState, cycle: int) -> None:
        self._snaps[cycle] = states.fields["u"][-1].copy()

    def has(self, cycle: int) -> bool:
        return cycle in self._snaps

    def load(self, states: DistributedState, cycle: int) -> np.ndarray:
        if cycle not in self._snaps:
            raise KeyError(f"no checkpoint for cycle {cycle}")
        return self._snaps[cycle]

    def restore(self, states: DistributedState, cycle: int, ranks=None) -> None:
        snap = self.load(states, cycle)
        buf = states.fields["u"][-1]
        lay = states.layout(len(states.fields["u"]) - 1)
        for r in range(states.partition.rank_count) if ranks is None else ranks:
            sl = lay.span(r)
            buf[sl] = snap[sl]

    @property
    def nbytes(self) -> int:
        return sum(s.nbytes for s in self._snaps.values())


_MAGIC = b"FMGCKPT\x00"
_VERSION = 1
_HEADER = struct.Struct("<8s7I")


class FileCheckpointStore(CheckpointStore):
    """Checkpoints as one binary file per cycle.

    Layout: header ``<8s7I`` (magic, version, n0, L, Px, Py, Pz, cycle),
    then for each rank in id order a little-endian uint64 count followed by
    that many little-endian float64 values of the rank's finest-level block
    (closed box plus ghost layer) in lexicographic order, x fastest.
    """

    def __init__(self, directory):
        super().__init__()
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, cycle: int) -> Path:
        return self.directory / f"ckpt_{cycle:06d}.bin"

    def write(self, states, cycle):
        part = states.partition
        lay = part.layouts[-1]
        buf = states.fields["u"][-1]
        with open(self.path(cycle), "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, part.hierarchy.n0, part.hierarchy.L,
                                  *part.counts, cycle))
            for r in range(part.rank_count):
                blk = lay.block(buf, r).ravel(order="F").astype("<f8")
                fh.write(struct.pack("<Q", blk.size))
                fh.write(blk.tobytes())

    def has(self, cycle):
        return self.path(cycle).exists()

    def load(self, states, cycle):
        path = self.path(cycle)
        if not path.exists():
            raise KeyError(f"no checkpoint for cycle {cycle} in {self.directory}")
        part = states.partition
        lay = part.layouts[-1]
        out = np.empty(lay.size)
        with open(path, "rb") as fh:
            magic, version, n0, L, px, py, pz, cyc = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != _MAGIC or version != _VERSION:
                raise ValueError(f"{path} is not a version-{_VERSION} checkpoint")
            if (n0, L, (px, py, pz), cyc) != (part.hierarchy.n0, part.hierarchy.L, part.counts, cycle):
                raise ValueError(f"{path} was written for n0={n0}, L={L}, partition {(px, py, pz)}, cycle {cyc}")
            for r in range(part.rank_count):
                (count,) = struct.unpack("<Q", fh.read(8))
                shp = tuple(lay.shapes[r])
                if count != int(np.prod(shp)):
                    raise ValueError(f"{path}: rank {r} block has {count} values, expected {np.prod(shp)}")
                vals = np.frombuffer(fh.read(8 * count), dtype="<f8")
                out[lay.span(r)] = vals.reshape(shp, order="F").reshape(-1)
        return out

    @property
    def nbytes(self):
        return sum(p.stat().st_size for p in self.directory.glob("ckpt_*.bin"))


@dataclass
class LocalProblem:
    """Laplace problem on the lost box: Dirichlet data on the box surface
    (surviving interface values, and ``g`` where the box touches the domain
    boundary), zero initial interior."""

    data: np.ndarray
    rhs: np.ndarray
    h: float
    cells0: tuple[int, int, int]
    levels: int  # local multigrid depth (number of coarsenings)
    unit: int = 0  # interior nodes of the global finest grid, for work units
    lo: tuple[int, int, int] = (0, 0, 0)

    @classmethod
    def from_state(cls, states: DistributedState, rank: int) -> "LocalProblem":
        part = states.partition
        L = part.hierarchy.L
        lay = part.layouts[-1]
        lo, hi = part.subdomains[rank].box(L)
        org = lay.origins[rank]
        sel = tuple(slice(a - o, b - o + 1) for a, b, o in zip(lo, hi, org))
        data = lay.block(states.fields["u"][-1], rank)[sel].copy()
        rhs = lay.block(states.fields["f"][-1], rank)[sel].copy()
        data[1:-1, 1:-1, 1:-1] = 0.0
        box0 = part.subdomains[rank].cells(0)
        lmin = next(l for l in range(L + 1) if min(c * 2**l for c in box0) >= 2)
        cells0 = tuple(c * 2**lmin for c in box0)
        unit = int(np.prod([s - 2 for s in part.hierarchy.finest.shape]))
        return cls(data, rhs, part.hierarchy.finest.h, cells0, L - lmin, unit, tuple(lo))

    @property
    def shape(self):
        return self.data.shape

    @property
    def unknowns(self) -> int:
        return int(np.prod([s - 2 for s in self.shape]))

    def sweep_work(self) -> float:
        return self.unknowns / (self.unit or self.unknowns)

    def initial(self) -> np.ndarray:
        return self.data.copy()

    def residual_norm(self, u: np.ndarray) -> float:
        return norm(residual(self.rhs, u, self.h), self.h)

    def dense_solve(self) -> np.ndarray:
        A = laplacian_matrix(self.shape, self.h)
        b = interior_values(self.rhs) + boundary_coupling(self.data, self.h)
        u = self.initial()
        set_interior(u, splu(A).solve(b))
        return u

    def store(self, states: DistributedState, rank: int, u: np.ndarray) -> None:
        """Write the local solution into the rank's strict interior."""
        lay = states.partition.layouts[-1]
        org = lay.origins[rank]
        sel = tuple(slice(a - o + 1, a - o + s - 1) for a, o, s in zip(self.lo, org, self.shape))
        lay.block(states.fields["u"][-1], rank)[sel] = u[1:-1, 1:-1, 1:-1]


@dataclass
class LocalResult:
    values: np.ndarray
    iterations: int
    work: float
    residuals: list[float] = field(default_factory=list)  # local residual norm per iteration, [0] initial


def local_smooth(problem: LocalProblem, k_F: int) -> LocalResult:
    u = problem.initial()
    hist = [problem.residual_norm(u)]
    for _ in range(k_F):
        gauss_seidel(u, problem.rhs, problem.h, 1)
        hist.append(problem.residual_norm(u))
    return LocalResult(u, k_F, k_F * problem.sweep_work(), hist)


def local_pcg(problem: LocalProblem, k_F: int, tol: float = 0.0, callback=None) -> LocalResult:
    """Jacobi-preconditioned conjugate gradients from a zero interior.

    Stops early on breakdown (vanishing ``p.Ap`` or preconditioned residual)
    or when ``|r| <= tol |b|``.  ``callback(r)`` sees every residual vector
    including the initial one.  One iteration costs one local sweep.
    """
    A = laplacian_matrix(problem.shape, problem.h)
    b = interior_values(problem.rhs) + boundary_coupling(problem.data, problem.h)
    d = A.diagonal()
    x = np.zeros_like(b)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = float(r @ z)
    bnorm = math.sqrt(float(b @ b))
    tiny = np.finfo(float).tiny
    u = problem.initial()
    hist = [problem.residual_norm(u)]
    if callback:
        callback(r.copy())
    done = 0
    for _ in range(k_F):
        if rz <= tiny or (tol and math.sqrt(float(r @ r)) <= tol * bnorm):
            break
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= tiny:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        done += 1
        if callback:
            callback(r.copy())
        z = r / d
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        set_interior(u, x)
        hist.append(problem.residual_norm(u))
    set_interior(u, x)
    return LocalResult(u, done, done * problem.sweep_work(), hist)


def local_mg_cycle(problem: LocalProblem, kind: CycleType | str, k_F: int,
                   tol: float = 0.0, config: SolverConfig | None = None,
                   max_cycles: int = 200) -> LocalResult:
    """``k_F`` multigrid cycles on the box hierarchy with the Dirichlet data fixed.

    With ``tol > 0`` cycles run until the local residual has dropped by
    ``tol`` (``k_F = 0`` then means "no cap" up to ``max_cycles``).  The
    coarsest box level is solved directly.
    """
    cfg = SolverConfig(**{**(config.__dict__ if config else {}), "coarse_policy": "direct"})
    h0 = problem.h * 2**problem.levels
    mg = BoxMultigrid(problem.cells0, problem.levels, h0, cfg, unit=problem.unit or None)
    mg.u[-1][:] = problem.initial()
    mg.f[-1][:] = problem.rhs
    r0 = mg.residual_norm(charge=False)
    hist = [r0]
    cap = k_F if (k_F or not tol) else max_cycles
    done = 0
    while done < cap:
        if tol and hist[-1] <= tol * r0:
            break
        if r0 == 0.0:
            break
        mg.cycle(kind)
        done += 1
        hist.append(mg.residual_norm(charge=False))
    return LocalResult(mg.u[-1].copy(), done, mg.work, hist)


def local_direct(problem: LocalProblem) -> LocalResult:
    u = problem.dense_solve()
    return LocalResult(u, 1, 0.0, [problem.residual_norm(problem.initial()), problem.residual_norm(u)])


def recovery_cost(measured_work: float, eta_speedup: float = 1.0) -> float:
    """Modelled wall time (in WU) of a local recovery run with ``eta_speedup`` extra resources."""
    if eta_speedup < 1.0:
        raise ValueError(f"speedup factor must be >= 1, got {eta_speedup}")
    if measured_work < 0:
        raise ValueError("measured work must be >= 0")
    return measured_work / eta_speedup


def time_to_solution(global_work: float, recovery_work: float, eta_speedup: float = 1.0) -> float:
    """Healthy ranks idle during recovery, so the stall adds to the global work."""
    return global_work + recovery_cost(recovery_work, eta_speedup)


@dataclass
class RecoveryReport:
    strategy: str
    victim: int
    cycle: int
    iterations: int
    work_units: float
    modeled_time: float
    fault_residual: float  # global residual norm right after re-initialisation
    recovered_residual: float  # global residual norm after the local solve
    local_residuals: list[float] = field(default_factory=list)


def inject_fault(mg, scenario: FaultScenario) -> None:
    if scenario.victim >= mg.partition.rank_count:
        raise ValueError(f"victim rank {scenario.victim} out of range (0..{mg.partition.rank_count - 1})")
    erase_rank(mg.states, scenario.victim)


def run_recovery(mg, scenario: FaultScenario, strategy: RecoveryStrategy,
                 checkpoints: CheckpointStore | None = None) -> RecoveryReport:
    """Local recovery after ``scenario.victim`` crashed.

    Global cycling is halted for the duration.  The substitute rank gets its
    interface values back from the neighbours and a zero interior, then the
    chosen local solver runs on the lost box.  The residual norms in the
    report are diagnostics and are not charged as work.
    """
    states = mg.states
    v = scenario.victim
    if states.alive[v]:
        raise ValueError(f"rank {v} has not crashed")
    kind = strategy.kind
    if kind is StrategyKind.CCR and (checkpoints is None or not checkpoints.has(scenario.after_cycle)):
        raise RecoveryConfigError(f"CCR needs a checkpoint of cycle {scenario.after_cycle}")
    L = mg.L

    assign_substitute(states, v)
    ghost_exchange(states, L, "u")
    fault_res = mg.residual_norm(charge=False)

    result = None
    if kind is StrategyKind.CCR:
        checkpoints.restore(states, scenario.after_cycle, ranks=[v])
    elif kind is not StrategyKind.NONE:
        problem = LocalProblem.from_state(states, v)
        if kind is StrategyKind.SMOOTH:
            result = local_smooth(problem, strategy.iterations)
        elif kind is StrategyKind.PCG:
            result = local_pcg(problem, strategy.iterations, strategy.local_tol)
        elif kind is StrategyKind.CYCLE:
            result = local_mg_cycle(problem, strategy.cycle, strategy.iterations, strategy.local_tol,
                                    SolverConfig(mg.config.pre_smooth, mg.config.post_smooth))
        else:
            result = local_direct(problem)
        problem.store(states, v, result.values)
    ghost_exchange(states, L, "u")
    rec_res = mg.residual_norm(charge=False)

    work = result.work if result else 0.0
    return RecoveryReport(strategy.label, v, scenario.after_cycle,
                          result.iterations if result else 0, work,
                          recovery_cost(work, strategy.eta_speedup), fault_res, rec_res,
                          result.residuals if result else [])
