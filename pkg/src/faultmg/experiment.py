"""Experiment suite: no-fault baseline, fault without recovery, fault with every
configured strategy; then rates, Cycle Advantages and the artifacts on disk.

Output directory layout::

    config.json            normalized copy of the input
    logs/<run>.csv         cycle,scaled_residual,event per run
    figures/fault<k>.csv   wide residual histories for plotting
    kappa_table.json/.txt  the Cycle Advantage table
    summary.json           mu, K, kappa grid, work units, modeled times, checks
    manifest.json          status and artifact list (written last, also on failure)
"""

from __future__ import annotations

import csv
import json
import logging
import re
import shutil
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, config_from_dict, dump_config
from .grid import build_hierarchy
from .metrics import (AdvantageTable, ConvergenceLog, advantage_table, consistency_check,
                      estimate_mu)
from .partition import build_partition
from .resilience import (CheckpointStore, FaultScenario, FileCheckpointStore, RecoveryStrategy,
                         StrategyKind, recovery_cost, time_to_solution)
from .solver import ParallelMultigrid, solve

log = logging.getLogger(__name__)


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def run_name(fault_cycle: int | None, label: str) -> str:
    return "no_fault" if fault_cycle is None else f"fault{fault_cycle}_{safe_name(label)}"


@dataclass
class RunPlan:
    fault_cycle: int | None
    strategy: dict | None  # RecoveryStrategy.to_dict(); None for baseline / no recovery


@dataclass
class SuiteResult:
    config: ExperimentConfig
    victim: int
    baseline: ConvergenceLog
    no_recovery: dict[int, ConvergenceLog]
    recovered: dict[tuple[int, str], ConvergenceLog]
    table: AdvantageTable
    summary: dict = field(default_factory=dict)
    checkpoint_bytes: int = 0


def _execute(cfg_dict: dict, job: RunPlan, ckpt_dir: str | None = None):
    """One run from scratch. Top-level so worker processes can pickle it."""
    cfg = config_from_dict(cfg_dict)
    hier = build_hierarchy(cfg.grid.n0, cfg.grid.L)
    part = build_partition(hier, *cfg.partition)
    mg = ParallelMultigrid(part, cfg.solver)
    if job.fault_cycle is None:
        return solve(mg, label="no_fault"), 0
    scenario = FaultScenario(job.fault_cycle, cfg.default_victim())
    strategy = RecoveryStrategy.parse(job.strategy) if job.strategy else RecoveryStrategy.none()
    store = None
    if strategy.kind is StrategyKind.CCR:
        store = FileCheckpointStore(ckpt_dir) if ckpt_dir else CheckpointStore()
    name = run_name(job.fault_cycle, strategy.label)
    out = solve(mg, scenario, strategy, store, label=name)
    return out, (store.nbytes if store is not None else 0)


def plan_runs(cfg: ExperimentConfig) -> list[RunPlan]:
    runs = [RunPlan(None, None)]
    for k in cfg.scenario.fault_cycles:
        runs.append(RunPlan(k, None))
        runs += [RunPlan(k, st.to_dict()) for st in cfg.strategies]
    return runs


def emit_figures_data(out_dir, baseline: ConvergenceLog, no_recovery: dict, recovered: dict) -> list[Path]:
    """One wide CSV per fault time: cycle, no_fault, fault, <strategy columns>.
    Cells past the end of a run are left empty."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in sorted(no_recovery):
        cols = [("no_fault", baseline), ("fault", no_recovery[k])]
        cols += [(label, lg) for (kk, label), lg in recovered.items() if kk == k]
        n = max(lg.cycles for _, lg in cols) + 1
        path = out_dir / f"fault{k}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle"] + [c for c, _ in cols])
            for i in range(n):
                w.writerow([i] + [repr(lg[i]) if i <= lg.cycles else "" for _, lg in cols])
        paths.append(path)
    return paths


def _summarize(cfg: ExperimentConfig, victim: int, baseline, no_rec, rec, table, ckpt_bytes) -> dict:
    mu = table.mu
    eta = cfg.eta_speedup
    per_fault = {}
    for k in cfg.scenario.fault_cycles:
        ref = no_rec[k]
        K = table.get(k, "none").K
        runs = {}
        for row in table.rows:
            if row.fault_cycle != k:
                continue
            lg = ref if row.strategy == "none" else rec[(k, row.strategy)]
            cc = consistency_check(ref, row.kappa, mu, K)
            runs[row.strategy] = {
                "kappa": row.kappa,
                "cycles": lg.cycles,
                "stop_reason": lg.stop_reason,
                "local_iterations": lg.local_iterations,
                "recovery_work": lg.recovery_work,
                "recovery_time_modeled": recovery_cost(lg.recovery_work, eta),
                "global_work": lg.global_work,
                "time_to_solution": time_to_solution(lg.global_work, lg.recovery_work, eta),
                "time_to_solution_eta1": time_to_solution(lg.global_work, lg.recovery_work, 1.0),
                "fault_residual": lg.fault_residual,
                "recovered_residual": lg.recovered_residual,
                "consistency": {"passed": cc.passed, "discrepancy_cycles": cc.discrepancy,
                                "notice": cc.notice},
            }
        per_fault[str(k)] = {
            "K": K,
            "pre_fault_residual": baseline[k],
            "fault_residual": ref.fault_residual,
            "jump": ref.fault_residual / baseline[k],
            "extra_cycles_no_recovery": ref.cycles - baseline.cycles,
            "runs": runs,
        }
    return {
        "mu": mu,
        "victim": victim,
        "eta_speedup": eta,
        "baseline": {"cycles": baseline.cycles, "global_work": baseline.global_work,
                     "stop_reason": baseline.stop_reason, "final_residual": baseline[-1]},
        "faults": per_fault,
        "checkpoint_bytes": ckpt_bytes,
    }


def run_suite(cfg: ExperimentConfig, out_dir=None, jobs: int = 1, write: bool = True) -> SuiteResult:
    """Run every planned solve and (optionally) write all artifacts.

    On failure a manifest with ``status: "error"`` is written before the
    exception propagates.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    t0 = time.perf_counter()
    artifacts: list[str] = []
    try:
        if write:
            out.mkdir(parents=True, exist_ok=True)
            dump_config(cfg, out / "config.json")
            artifacts.append("config.json")
        ckpt_dir = None
        if cfg.checkpoints == "file" and write:
            ckpt_dir = out / "checkpoints"
            shutil.rmtree(ckpt_dir, ignore_errors=True)
        cfg_dict = cfg.to_dict()
        runs = plan_runs(cfg)
        args = []
        for job in runs:
            d = None
            if ckpt_dir is not None and job.strategy and job.strategy.get("kind") == "ccr":
                d = str(ckpt_dir / f"fault{job.fault_cycle}")
            args.append((cfg_dict, job, d))
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_execute, *zip(*args)))
        else:
            results = []
            for a in args:
                results.append(_execute(*a))
                log.info("finished %s", results[-1][0].label)

        baseline = results[0][0]
        no_rec, rec = {}, {}
        ckpt_bytes = 0
        for job, (lg, nb) in zip(runs[1:], results[1:]):
            ckpt_bytes = max(ckpt_bytes, nb)
            if job.strategy is None:
                no_rec[job.fault_cycle] = lg
            else:
                rec[(job.fault_cycle, lg.strategy)] = lg
        mu = estimate_mu(baseline)
        table = advantage_table(baseline, no_rec, rec, mu=mu, floor=cfg.kappa_floor)
        victim = cfg.default_victim()
        summary = _summarize(cfg, victim, baseline, no_rec, rec, table, ckpt_bytes)
        result = SuiteResult(cfg, victim, baseline, no_rec, rec, table, summary, ckpt_bytes)

        if write:
            (out / "logs").mkdir(exist_ok=True)
            for _, (lg, _) in zip(runs, results):
                lg.to_csv(out / "logs" / f"{lg.label}.csv")
                artifacts.append(f"logs/{lg.label}.csv")
            for p in emit_figures_data(out / "figures", baseline, no_rec, rec):
                artifacts.append(str(p.relative_to(out)))
            (out / "kappa_table.json").write_text(
                json.dumps({"mu": mu, "rows": table.to_records()}, indent=2) + "\n")
            (out / "kappa_table.txt").write_text(table.format())
            (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
            artifacts += ["kappa_table.json", "kappa_table.txt", "summary.json"]
            _manifest(out, "ok", artifacts, time.perf_counter() - t0)
        return result
    except Exception as exc:
        if write:
            out.mkdir(parents=True, exist_ok=True)
            _manifest(out, "error", artifacts, time.perf_counter() - t0,
                      error=f"{type(exc).__name__}: {exc}", trace=traceback.format_exc())
        raise


def _manifest(out: Path, status: str, artifacts, seconds: float, **extra) -> None:
    # wall time lives only here so the data artifacts stay bit-reproducible
    doc = {"status": status, "artifacts": artifacts, "wall_seconds": round(seconds, 3), **extra}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def load_table(out_dir) -> AdvantageTable:
    doc = json.loads((Path(out_dir) / "kappa_table.json").read_text())
    return AdvantageTable.from_records(doc["mu"], doc["rows"])
