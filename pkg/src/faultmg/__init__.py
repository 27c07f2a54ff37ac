"""Geometric multigrid for the 3D Poisson problem with simulated rank faults
and local recovery."""

from .grid import GridHierarchy, build_hierarchy
from .metrics import ConvergenceLog, cycle_advantage, estimate_mu
from .partition import DistributedState, Partition, build_partition
from .resilience import FaultScenario, RecoveryStrategy
from .solver import CycleType, ParallelMultigrid, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "ConvergenceLog", "CycleType", "DistributedState", "FaultScenario", "GridHierarchy",
    "ParallelMultigrid", "Partition", "RecoveryStrategy", "SolverConfig", "build_hierarchy",
    "build_partition", "cycle_advantage", "estimate_mu", "solve",
]
