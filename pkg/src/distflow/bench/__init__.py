"""Experiment runner: run configs, cluster launch, sweeps, verification and CSV output."""

from .launcher import ClusterOutcome, launch_cluster
from .models import LaunchMode, ResultRow, RowStatus, RunConfig, RunSummary
from .runner import ExperimentResult, SweepResult, run_experiment, sweep
from .verify import Verdict, VerifyReport, verify

__all__ = [
    "ClusterOutcome",
    "ExperimentResult",
    "LaunchMode",
    "ResultRow",
    "RowStatus",
    "RunConfig",
    "RunSummary",
    "SweepResult",
    "Verdict",
    "VerifyReport",
    "launch_cluster",
    "run_experiment",
    "sweep",
    "verify",
]
