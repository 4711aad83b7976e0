"""Experiment runner: one launch per run, scale sweeps, CSV rows and summaries."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..console import log
from ..core.run_context import RunContext
from ..dag.planner import WorkerPlan
from ..errors import ConfigError, DistFlowError, WorkerFailure
from ..runtime.datapath import Mode
from ..runtime.metrics import RunMetrics
from ..transport.topology import parse_scale
from .analysis import ScalingAnalysis, analyze_sweep
from .launcher import ClusterOutcome, launch_cluster
from .models import ResultRow, RowStatus, RunConfig, RunSummary
from .results import summary_path, write_rows


@dataclass
class ExperimentResult:
    config: RunConfig
    plan: WorkerPlan
    outcome: ClusterOutcome
    rows: List[ResultRow]
    summary: RunSummary
    out: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.summary.status == RowStatus.OK


@dataclass
class SweepResult:
    rows: List[ResultRow] = field(default_factory=list)
    summaries: List[RunSummary] = field(default_factory=list)
    analysis: ScalingAnalysis = field(default_factory=ScalingAnalysis)
    out: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return all(summary.status == RowStatus.OK for summary in self.summaries)


def _format_stage_times(stage_times_ns: Dict[str, int]) -> str:
    return ";".join(f"{node_id}={ns / 1e6:.3f}" for node_id, ns in sorted(stage_times_ns.items()))


def _base_row(config: RunConfig, world_size: int) -> Dict[str, object]:
    return {
        "fingerprint": config.fingerprint(),
        "mode": config.mode.value,
        "backend": config.backend.value,
        "scale": config.scale,
        "world_size": world_size,
        "global_batch": config.global_batch,
    }


def metrics_row(config: RunConfig, plan: WorkerPlan, run: RunMetrics, index: int) -> ResultRow:
    """One measured iteration as a CSV row."""
    topology = plan.topology
    world_size = topology.world_size
    node_ingress = run.node_ingress
    node_egress = run.node_egress
    tokens_per_sec = run.tokens_per_sec

    controller_ingress = controller_bytes = controller_node_bytes = 0
    if config.mode == Mode.CENTRAL:
        controller = run.for_rank(topology.controller_rank)
        if controller is not None:
            controller_ingress = controller.ingress_bytes
            controller_bytes = controller.ingress_bytes + controller.egress_bytes
        node = topology.node_of(topology.controller_rank)
        controller_node_bytes = node_ingress[node] + node_egress[node]

    return ResultRow(
        **_base_row(config, world_size),
        iteration=index,
        wall_time_s=run.wall_s,
        tokens=run.tokens,
        batch_tokens=run.batch_tokens,
        tokens_per_sec=tokens_per_sec,
        tokens_per_sec_per_worker=tokens_per_sec / world_size,
        stage_times_ms=_format_stage_times(run.stage_times_ns),
        max_stage_time_ms=run.max_stage_time_ns / 1e6,
        max_node_ingress=max(node_ingress, default=0),
        max_node_egress=max(node_egress, default=0),
        controller_ingress=controller_ingress,
        controller_bytes=controller_bytes,
        controller_node_bytes=controller_node_bytes,
        dataflow_bytes=sum(run.stage_bytes.values()),
        max_node_dataflow_bytes=max(run.node_dataflow_bytes, default=0),
        suppressed_puts=run.suppressed_puts,
        reward_mean=run.reward_mean,
        reward_std=run.reward_std,
        entropy_proxy=run.entropy_proxy,
    )


def failure_row(config: RunConfig, world_size: int, index: int, error: str) -> ResultRow:
    return ResultRow(
        **_base_row(config, world_size),
        iteration=index,
        status=RowStatus.FAILED,
        error=error,
    )


def outcome_rows(config: RunConfig, plan: WorkerPlan, outcome: ClusterOutcome) -> List[ResultRow]:
    """Rows of the measured iterations; a failed launch ends with one failure row."""
    warmup = config.warmup_iterations
    rows = [
        metrics_row(config, plan, run, run.iteration - warmup)
        for run in outcome.run_metrics
        if run.iteration >= warmup
    ]
    if outcome.error is not None:
        rows.append(failure_row(config, plan.topology.world_size, len(rows), str(outcome.error)))
    return rows


def summarize(config: RunConfig, world_size: int, rows: Sequence[ResultRow]) -> RunSummary:
    """Means over the measured rows of one run."""
    ok = [row for row in rows if row.status == RowStatus.OK]
    failed = [row for row in rows if row.status == RowStatus.FAILED]
    summary = RunSummary(
        **_base_row(config, world_size),
        status=RowStatus.FAILED if failed else RowStatus.OK,
        measured_iterations=len(ok),
        error=failed[0].error if failed else "",
    )
    if ok:
        summary.mean_wall_time_s = float(np.mean([row.wall_time_s for row in ok]))
        summary.mean_tokens_per_sec = float(np.mean([row.tokens_per_sec for row in ok]))
        summary.mean_tokens_per_sec_per_worker = float(np.mean([row.tokens_per_sec_per_worker for row in ok]))
        summary.mean_controller_bytes = float(np.mean([row.controller_bytes for row in ok]))
        summary.mean_controller_node_bytes = float(np.mean([row.controller_node_bytes for row in ok]))
        summary.mean_max_node_dataflow_bytes = float(np.mean([row.max_node_dataflow_bytes for row in ok]))
        summary.mean_reward = float(np.mean([row.reward_mean for row in ok]))
    return summary


def run_experiment(
    config: RunConfig,
    out: Optional[Path] = None,
    context: Optional[RunContext] = None,
) -> ExperimentResult:
    """Plan, launch warmup plus measured iterations, and collect rows.

    Planning errors propagate before anything is launched. A failure during
    the run becomes a failed row naming the rank and stage.

    Raises:
        ConfigError, LayoutError, CoverageError: the config cannot be planned.
    """
    try:
        plan = config.build_plan()
    except DistFlowError as e:
        if context is not None:
            context.mark_failed(str(e))
        raise
    if context is not None:
        context.mark_planned(plan.to_dump())
        context.mark_running()

    log("runner", f"Running '{config.name}' {config.mode.value} at {config.scale} ({config.total_iterations} iterations)")
    try:
        outcome = launch_cluster(config, plan)
    except ConfigError:
        raise
    except DistFlowError as e:
        outcome = ClusterOutcome(error=WorkerFailure(0, None, f"{type(e).__name__}: {e}"))

    rows = outcome_rows(config, plan, outcome)
    summary = summarize(config, plan.topology.world_size, rows)
    if out is not None:
        write_rows(out, rows, ResultRow)
        write_rows(summary_path(out), [summary], RunSummary)

    if outcome.error is not None:
        log("runner", f"Run '{config.name}' failed: {outcome.error}", level="ERROR")
        if context is not None:
            context.mark_failed(str(outcome.error), summary.model_dump(mode="json"))
    elif context is not None:
        context.mark_completed(summary.model_dump(mode="json"), out)
    return ExperimentResult(config=config, plan=plan, outcome=outcome, rows=rows, summary=summary, out=out)


def _apply_speedup(rows: List[ResultRow], summaries: List[RunSummary]) -> None:
    """speedup = central mean wall time / distributed mean wall time, per scale."""
    by_scale: Dict[str, Dict[str, RunSummary]] = {}
    for summary in summaries:
        if summary.status == RowStatus.OK:
            by_scale.setdefault(summary.scale, {})[summary.mode] = summary
    for scale, modes in by_scale.items():
        central = modes.get(Mode.CENTRAL.value)
        distributed = modes.get(Mode.DISTRIBUTED.value)
        if central is None or distributed is None or distributed.mean_wall_time_s <= 0:
            continue
        speedup = central.mean_wall_time_s / distributed.mean_wall_time_s
        central.speedup = distributed.speedup = speedup
        for row in rows:
            if row.scale == scale and row.status == RowStatus.OK:
                row.speedup = speedup


def sweep(
    config: RunConfig,
    scales: Sequence[str],
    out: Optional[Path] = None,
    paired: bool = False,
    context: Optional[RunContext] = None,
) -> SweepResult:
    """One sub-run per scale (both modes when paired) into one CSV.

    The global batch and synthetic dataset grow with the node count. A
    failing sub-run is recorded as a failed row and the sweep continues.
    """
    result = SweepResult(out=out)
    modes = [Mode.DISTRIBUTED, Mode.CENTRAL] if paired else [config.mode]
    if context is not None:
        context.mark_running()

    for scale in scales:
        topology = parse_scale(scale)
        for mode in modes:
            try:
                scaled = config.scaled(topology.num_nodes, topology.workers_per_node)
                scaled = scaled.model_copy(update={"mode": mode})
                experiment = run_experiment(scaled)
            except DistFlowError as e:
                log("runner", f"Sub-run {scale} {mode.value} not launched: {e}", level="WARNING")
                failed = config.model_copy(update={"mode": mode})
                row = failure_row(failed, topology.world_size, 0, str(e))
                result.rows.append(row.model_copy(update={"scale": topology.label()}))
                summary = summarize(failed, topology.world_size, [row])
                result.summaries.append(summary.model_copy(update={"scale": topology.label()}))
                continue
            result.rows.extend(experiment.rows)
            result.summaries.append(experiment.summary)

    if paired:
        _apply_speedup(result.rows, result.summaries)
    result.analysis = analyze_sweep(result.summaries)
    for line in result.analysis.describe():
        log("runner", line)

    if out is not None:
        write_rows(out, result.rows, ResultRow)
        write_rows(summary_path(out), result.summaries, RunSummary)
    if context is not None:
        summary = {"runs": [s.model_dump(mode="json") for s in result.summaries], **result.analysis.model_dump()}
        if result.ok:
            context.mark_completed(summary, out)
        else:
            context.mark_failed("one or more sub-runs failed", summary)
    return result
