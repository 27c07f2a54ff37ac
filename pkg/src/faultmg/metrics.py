"""Convergence logs, rate estimation and the Cycle Advantage.

The Cycle Advantage of a recovery strategy is the number of extra global
cycles a run without local recovery needs to reach the residual the
recovered run has at the evaluation cycle ``K``::

    kappa = log(|r_K^(kF)| / |r_K^(0)|) / log(mu)
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class InsufficientDataError(ValueError):
    pass


@dataclass
class ConvergenceLog:
    """Scaled residual ``|r_k| / |r_0|`` after every cycle; entry 0 is the initial 1.0."""

    residuals: list[float]
    initial_norm: float = 1.0
    label: str = ""
    fault_cycle: int | None = None
    strategy: str = ""
    local_iterations: int = 0
    recovery_work: float = 0.0
    fault_residual: float | None = None
    recovered_residual: float | None = None
    global_work: float = 0.0
    stop_reason: str = ""

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=float)
        if r.size and not (np.all(np.isfinite(r)) and np.all(r > 0)):
            raise ValueError("residual entries must be positive and finite")

    @property
    def cycles(self) -> int:
        return len(self.residuals) - 1

    def __getitem__(self, k: int) -> float:
        return self.residuals[k]

    def events(self) -> list[str]:
        ev = [""] * len(self.residuals)
        if ev:
            ev[0] = "initial"
        if self.fault_cycle is not None and self.fault_cycle < len(ev):
            tag = f"fault;recovery={self.strategy or 'none'}"
            ev[self.fault_cycle] = tag
        if ev and self.stop_reason:
            ev[-1] = ";".join(filter(None, [ev[-1], self.stop_reason]))
        return ev

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "scaled_residual", "event"])
            for k, (r, e) in enumerate(zip(self.residuals, self.events())):
                w.writerow([k, repr(float(r)), e])

    @classmethod
    def from_csv(cls, path, **meta) -> "ConvergenceLog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(row["scaled_residual"]) for row in rows], **meta)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("residuals")
        d["cycles"] = self.cycles
        d["final_residual"] = self.residuals[-1]
        return d


def estimate_mu(log: ConvergenceLog, start: int = 4, floor: float = 1e-13) -> float:
    """Asymptotic per-cycle rate: geometric mean of residual ratios from cycle
    ``start`` up to the last cycle whose scaled residual is above ``floor``."""
    r = np.asarray(log.residuals)
    above = np.flatnonzero(r > floor)
    last = int(above[-1]) if above.size else -1
    if last - start < 3:
        raise InsufficientDataError(
            f"rate window cycles {start}..{last} has fewer than 3 ratios")
    ratios = r[start + 1:last + 1] / r[start:last]
    return float(np.exp(np.mean(np.log(ratios))))


@dataclass(frozen=True)
class CycleAdvantage:
    kappa: float
    mu: float
    K: int
    strategy: str = ""
    fault_cycle: int | None = None


def cycle_advantage(with_recovery: ConvergenceLog, without_recovery: ConvergenceLog,
                    mu: float, K: int, strategy: str | None = None) -> CycleAdvantage:
    if not 0.0 < mu < 1.0:
        raise ValueError(f"convergence rate mu={mu} must lie in (0, 1)")
    for name, log in (("recovered", with_recovery), ("no-recovery", without_recovery)):
        if K > log.cycles:
            raise InsufficientDataError(f"{name} log has {log.cycles} cycles, cycle K={K} missing")
    if (with_recovery.fault_cycle is not None and without_recovery.fault_cycle is not None
            and with_recovery.fault_cycle != without_recovery.fault_cycle):
        raise ValueError("paired logs must share the fault cycle")
    kappa = math.log(with_recovery[K] / without_recovery[K]) / math.log(mu) + 0.0  # no -0.0
    return CycleAdvantage(kappa, mu, K, with_recovery.strategy if strategy is None else strategy,
                          with_recovery.fault_cycle)


def select_K(baseline: ConvergenceLog, no_recovery: ConvergenceLog,
             fault_cycle: int, floor: float = 1e-14) -> int:
    """Evaluation cycle: the no-fault cycle count, pulled back until neither the
    no-fault nor the no-recovery residual sits on the round-off floor.

    Must leave at least one cycle after the fault.
    """
    K = min(baseline.cycles, no_recovery.cycles)
    while K > fault_cycle and (baseline[K] <= floor or no_recovery[K] <= floor):
        K -= 1
    if K <= fault_cycle:
        raise InsufficientDataError(
            f"no evaluation cycle after the fault at {fault_cycle} stays above {floor:g}")
    return K


@dataclass
class ConsistencyReport:
    passed: bool | None  # None: skipped
    K: int
    shift: int
    observed: float | None = None
    expected: float | None = None
    discrepancy: float | None = None  # log(observed/expected)/log(mu), in cycles
    notice: str = ""


def consistency_check(no_recovery: ConvergenceLog, kappa: float, mu: float, K: int,
                      saturation: float = 1e-14, slack: float = 0.75) -> ConsistencyReport:
    """Check that the no-recovery run really reaches ``mu**kappa * |r_K^(0)|``
    after ``round(kappa)`` further cycles, up to a factor ``mu**(+-slack)``."""
    shift = int(round(kappa))
    target = K + shift
    need = K + math.ceil(kappa)
    if need > no_recovery.cycles:
        return ConsistencyReport(None, K, shift, notice=f"log ends at {no_recovery.cycles} < {need}")
    if min(no_recovery.residuals[K:need + 1]) <= saturation:
        return ConsistencyReport(None, K, shift, notice="no-recovery log saturated before K+kappa")
    observed = no_recovery[target]
    expected = mu**kappa * no_recovery[K]
    disc = math.log(observed / expected) / math.log(mu)
    return ConsistencyReport(abs(disc) <= slack, K, shift, observed, expected, disc)


@dataclass
class TableRow:
    fault_cycle: int
    strategy: str
    kappa: float
    K: int
    mu: float
    iterations: int = 0
    recovery_work: float = 0.0
    global_work: float = 0.0
    cycles: int = 0


@dataclass
class AdvantageTable:
    mu: float
    rows: list[TableRow] = field(default_factory=list)

    def get(self, fault_cycle: int, strategy: str) -> TableRow:
        for row in self.rows:
            if row.fault_cycle == fault_cycle and row.strategy == strategy:
                return row
        raise KeyError((fault_cycle, strategy))

    def kappa(self, fault_cycle: int, strategy: str) -> float:
        return self.get(fault_cycle, strategy).kappa

    def fault_cycles(self) -> list[int]:
        return sorted({r.fault_cycle for r in self.rows})

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    @classmethod
    def from_records(cls, mu: float, records) -> "AdvantageTable":
        return cls(mu, [TableRow(**r) for r in records])

    def format(self) -> str:
        """Side-by-side text blocks, one per fault time, kappa with 3 decimals."""
        blocks = []
        for k in self.fault_cycles():
            lines = [f"Fault after {k} iter.", f"{'strategy':<14}{'kappa':>8}"]
            lines += [f"{r.strategy:<14}{r.kappa:>8.3f}" for r in self.rows if r.fault_cycle == k]
            blocks.append(lines)
        height = max(len(b) for b in blocks) if blocks else 0
        width = 24
        out = []
        for i in range(height):
            out.append("  ".join((b[i] if i < len(b) else "").ljust(width) for b in blocks).rstrip())
        return "\n".join(out) + "\n"


def advantage_table(baseline: ConvergenceLog, no_recovery: dict, recovered: dict,
                    mu: float | None = None, floor: float = 1e-14) -> AdvantageTable:
    """Cycle Advantage for every (fault cycle, strategy) pair.

    ``no_recovery`` maps fault cycle -> log; ``recovered`` maps
    (fault cycle, strategy label) -> log.  A zero row (``none``) is always
    emitted per fault cycle.
    """
    mu = estimate_mu(baseline) if mu is None else mu
    table = AdvantageTable(mu)
    for k in sorted(no_recovery):
        ref = no_recovery[k]
        K = select_K(baseline, ref, k, floor)
        table.rows.append(TableRow(k, "none", cycle_advantage(ref, ref, mu, K).kappa, K, mu,
                                   global_work=ref.global_work, cycles=ref.cycles))
        for (kk, label), log in recovered.items():
            if kk != k:
                continue
            ca = cycle_advantage(log, ref, mu, K, label)
            table.rows.append(TableRow(k, label, ca.kappa, K, mu, log.local_iterations,
                                       log.recovery_work, log.global_work, log.cycles))
    return table
