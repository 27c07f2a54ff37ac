"""Multigrid correction-scheme cycles.

Two engines share the cycle recursion in :func:`run_cycle`:

* :class:`BoxMultigrid` -- serial multigrid on one box (any cell counts,
  equal spacing), used for local recovery problems and as a reference.
* :class:`ParallelMultigrid` -- the global solver on a partition.  Its
  smoother is hybrid Gauss-Seidel: lexicographic inside every rank, with
  ghost values frozen during a sweep and exchanged after it.

Work is counted in work units (WU): one smoothing sweep over the interior
of the global finest grid.  Residuals, restrictions and prolongations cost
the interior node count of the fine level they touch, relative to that.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import splu

from . import _kernels as K
from .grid import interior_mask, laplacian_matrix
from .metrics import ConvergenceLog
from .partition import DistributedState, Partition, ghost_exchange


class CycleType(str, enum.Enum):
    V = "V"
    W = "W"
    F = "F"


@dataclass
class SolverConfig:
    pre_smooth: int = 3
    post_smooth: int = 3
    cycle: CycleType = CycleType.V
    max_cycles: int = 50
    stop_tol: float = 1e-15
    coarse_policy: str = "direct"  # or "sweeps"
    coarse_sweeps: int = 10

    def __post_init__(self):
        self.cycle = CycleType(self.cycle)
        if self.pre_smooth < 1 or self.post_smooth < 1:
            raise ValueError("pre_smooth and post_smooth must be >= 1")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")
        if self.coarse_policy not in ("direct", "sweeps"):
            raise ValueError(f"unknown coarse_policy {self.coarse_policy!r}")
        if self.coarse_policy == "sweeps" and self.coarse_sweeps < 1:
            raise ValueError("coarse_sweeps must be >= 1")


def run_cycle(mg, level: int, kind: CycleType) -> None:
    """One multigrid cycle of the given type starting at ``level``.

    F(l) visits the coarser level with an F-cycle followed by a V-cycle,
    W(l) with two W-cycles.
    """
    if level == 0:
        mg.coarse_solve()
        return
    mg.smooth(level, mg.config.pre_smooth)
    mg.descend(level)
    if kind is CycleType.V:
        run_cycle(mg, level - 1, CycleType.V)
    elif kind is CycleType.W:
        run_cycle(mg, level - 1, CycleType.W)
        run_cycle(mg, level - 1, CycleType.W)
    else:
        run_cycle(mg, level - 1, CycleType.F)
        run_cycle(mg, level - 1, CycleType.V)
    mg.ascend(level)
    mg.smooth(level, mg.config.post_smooth)


@lru_cache(maxsize=16)
def _direct_factor(shape, h):
    return splu(laplacian_matrix(shape, h))


def _interior_count(shape) -> int:
    return int(np.prod([s - 2 for s in shape]))


class BoxMultigrid:
    """Serial multigrid on a box of ``cells0 * 2**L`` cells with spacing ``h0 / 2**L``."""

    def __init__(self, cells0, L: int, h0: float, config: SolverConfig | None = None,
                 unit: int | None = None):
        cells0 = tuple(int(c) for c in cells0)
        if min(cells0) < 2:
            raise ValueError(f"coarsest box {cells0} has no interior unknowns")
        self.config = config or SolverConfig()
        self.L = L
        self.shapes = [tuple(c * 2**l + 1 for c in cells0) for l in range(L + 1)]
        self.h = [h0 / 2**l for l in range(L + 1)]
        self.u = [np.zeros(s) for s in self.shapes]
        self.f = [np.zeros(s) for s in self.shapes]
        self.r = [np.zeros(s) for s in self.shapes]
        self.masks = [interior_mask(s).reshape(-1) for s in self.shapes]
        self.blocks = [K.single_block(s) for s in self.shapes]
        self.counts = [_interior_count(s) for s in self.shapes]
        self.unit = unit or self.counts[-1]
        self.work = 0.0

    def _charge(self, level, times=1):
        self.work += times * self.counts[level] / self.unit

    def smooth(self, level, sweeps):
        offs, shapes, _ = self.blocks[level]
        h2 = self.h[level] ** 2
        for _ in range(sweeps):
            K.gs_sweep(self.u[level].reshape(-1), self.f[level].reshape(-1), h2,
                       self.masks[level], offs, shapes)
        self._charge(level, sweeps)

    def compute_residual(self, level):
        offs, shapes, _ = self.blocks[level]
        K.residual(self.u[level].reshape(-1), self.f[level].reshape(-1), 1.0 / self.h[level] ** 2,
                   self.masks[level], offs, shapes, self.r[level].reshape(-1))
        self._charge(level)

    def descend(self, level):
        self.compute_residual(level)
        K.restrict_full_weighting(self.r[level].reshape(-1), self.f[level - 1].reshape(-1),
                                  self.masks[level - 1], *self.blocks[level], *self.blocks[level - 1])
        self.u[level - 1][:] = 0.0
        self._charge(level)

    def ascend(self, level):
        K.prolongate_add(self.u[level - 1].reshape(-1), self.u[level].reshape(-1), self.masks[level],
                         *self.blocks[level - 1], *self.blocks[level])
        self._charge(level)

    def coarse_solve(self):
        if self.config.coarse_policy == "sweeps":
            self.smooth(0, self.config.coarse_sweeps)
            return
        lu = _direct_factor(self.shapes[0], self.h[0])
        x = lu.solve(self.f[0][1:-1, 1:-1, 1:-1].ravel(order="F"))
        self.u[0][1:-1, 1:-1, 1:-1] = x.reshape([s - 2 for s in self.shapes[0]], order="F")
        self._charge(0)

    def cycle(self, kind: CycleType | str | None = None):
        run_cycle(self, self.L, CycleType(kind or self.config.cycle))

    def residual_norm(self, charge: bool = True) -> float:
        work = self.work
        self.compute_residual(self.L)
        if not charge:
            self.work = work
        r = self.r[self.L][1:-1, 1:-1, 1:-1]
        return math.sqrt(self.h[self.L] ** 3 * float(np.sum(r * r)))


class ParallelMultigrid:
    """Global multigrid over the ranks of a partition (bulk-synchronous supersteps)."""

    def __init__(self, partition: Partition, config: SolverConfig | None = None,
                 rhs: np.ndarray | None = None):
        self.partition = partition
        self.config = config or SolverConfig()
        self.states = DistributedState(partition, rhs)
        hier = partition.hierarchy
        self.L = hier.L
        self.h = [lv.h for lv in hier.levels]
        self.layouts = partition.layouts
        self.counts = [_interior_count(lv.shape) for lv in hier.levels]
        self.unit = self.counts[-1]
        self.work = 0.0
        self.rank_order = None  # per-rank processing order of compute/exchange phases

    def _charge(self, level, times=1):
        self.work += times * self.counts[level] / self.unit

    def _exchange(self, level, name):
        ghost_exchange(self.states, level, name, order=self.rank_order)

    def _f(self, name, level):
        return self.states.fields[name][level]

    def smooth(self, level, sweeps, order=None):
        self.states.require_alive("smoothing")
        lay = self.layouts[level]
        u, f = self._f("u", level), self._f("f", level)
        h2 = self.h[level] ** 2
        order = self.rank_order if order is None else order
        for _ in range(sweeps):
            if order is None:
                K.gs_sweep(u, f, h2, lay.owned, lay.offs, lay.shapes)
            else:
                # rank-by-rank compute phase; result cannot depend on the order
                for r in order:
                    K.gs_sweep(u, f, h2, lay.owned, lay.offs[r:r + 1], lay.shapes[r:r + 1])
            self._exchange(level, "u")
        self._charge(level, sweeps)

    def compute_residual(self, level):
        self.states.require_alive("residual")
        lay = self.layouts[level]
        K.residual(self._f("u", level), self._f("f", level), 1.0 / self.h[level] ** 2,
                   lay.owned, lay.offs, lay.shapes, self._f("r", level))
        self._exchange(level, "r")
        self._charge(level)

    def descend(self, level):
        self.compute_residual(level)
        fine, coarse = self.layouts[level], self.layouts[level - 1]
        # coarse right-hand sides are only read at owned nodes, no exchange needed
        K.restrict_full_weighting(self._f("r", level), self._f("f", level - 1), coarse.owned,
                                  fine.offs, fine.shapes, fine.origins,
                                  coarse.offs, coarse.shapes, coarse.origins)
        self._f("u", level - 1)[:] = 0.0
        self._charge(level)

    def ascend(self, level):
        fine, coarse = self.layouts[level], self.layouts[level - 1]
        K.prolongate_add(self._f("u", level - 1), self._f("u", level), fine.owned,
                         coarse.offs, coarse.shapes, coarse.origins,
                         fine.offs, fine.shapes, fine.origins)
        self._exchange(level, "u")
        self._charge(level)

    def coarse_solve(self):
        """Level-0 solve: gathered on a root rank and solved directly, or plain sweeps."""
        if self.config.coarse_policy == "sweeps":
            self.smooth(0, self.config.coarse_sweeps)
            return
        self.states.require_alive("coarse solve")
        lay = self.layouts[0]
        f0 = lay.assemble(self._f("f", 0))
        lu = _direct_factor(lay.shape, self.h[0])
        u0 = np.zeros(lay.shape)
        u0[1:-1, 1:-1, 1:-1] = lu.solve(f0[1:-1, 1:-1, 1:-1].ravel(order="F")).reshape(
            [s - 2 for s in lay.shape], order="F")
        self._f("u", 0)[:] = lay.distribute(u0)
        self._charge(0)

    def cycle(self, kind: CycleType | str | None = None):
        run_cycle(self, self.L, CycleType(kind or self.config.cycle))

    def residual_norm(self, charge: bool = True) -> float:
        work = self.work
        self.compute_residual(self.L)
        if not charge:
            self.work = work
        lay = self.layouts[self.L]
        r = self._f("r", self.L)[lay.owned_idx]
        return math.sqrt(self.h[self.L] ** 3 * float(np.dot(r, r)))

    def cycle_work(self, kind: CycleType | str) -> float:
        """Modelled WU of one cycle, counted without touching the state."""
        probe = _WorkProbe(self.counts, self.unit, self.config)
        run_cycle(probe, self.L, CycleType(kind))
        return probe.work


class _WorkProbe:
    def __init__(self, counts, unit, config):
        self.counts, self.unit, self.config, self.work = counts, unit, config, 0.0

    def smooth(self, level, sweeps):
        self.work += sweeps * self.counts[level] / self.unit

    def descend(self, level):
        self.work += 2 * self.counts[level] / self.unit

    def ascend(self, level):
        self.work += self.counts[level] / self.unit

    def coarse_solve(self):
        if self.config.coarse_policy == "sweeps":
            self.smooth(0, self.config.coarse_sweeps)
        else:
            self.work += self.counts[0] / self.unit


def solve(mg: ParallelMultigrid, fault=None, strategy=None, checkpoints=None,
          label: str = "") -> ConvergenceLog:
    """Outer iteration: cycle, log the scaled residual, inject a fault if one is due.

    A fault scheduled after cycle ``k`` strikes once the residual of cycle
    ``k`` has been logged (and checkpointed); recovery runs before cycle
    ``k + 1``.  Stops at ``stop_tol`` or ``max_cycles``.
    """
    from .resilience import RecoveryStrategy, inject_fault, run_recovery

    cfg = mg.config
    r0 = mg.residual_norm()
    log = ConvergenceLog([1.0], r0, label=label)
    work0 = mg.work
    reason = "max_cycles"
    for k in range(1, cfg.max_cycles + 1):
        mg.cycle()
        log.residuals.append(mg.residual_norm() / r0)
        if checkpoints is not None:
            checkpoints.write(mg.states, k)
        if fault is not None and k == fault.after_cycle:
            strategy = strategy or RecoveryStrategy.none()
            inject_fault(mg, fault)
            report = run_recovery(mg, fault, strategy, checkpoints)
            log.fault_cycle = k
            log.strategy = strategy.label
            log.local_iterations = report.iterations
            log.recovery_work = report.work_units
            log.fault_residual = report.fault_residual / r0
            log.recovered_residual = report.recovered_residual / r0
            continue
        if log.residuals[-1] <= cfg.stop_tol:
            reason = "converged"
            break
    log.stop_reason = reason
    log.global_work = mg.work - work0
    return log
