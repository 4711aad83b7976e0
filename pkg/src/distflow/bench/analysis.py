"""Scaling analysis over sweep summaries."""

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from ..runtime.datapath import Mode
from .models import RowStatus, RunSummary

# Central mode: the controller's traffic must grow at least this fast in world size.
MIN_CONTROLLER_SLOPE = 0.9
# Distributed mode: max-node redistribution traffic may grow at most this much over a sweep.
MAX_DISTRIBUTED_GROWTH = 2.0


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log2(y) against log2(x).

    Raises:
        ValueError: fewer than two points, or a non-positive value.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("Need at least two (x, y) points of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log2(x), np.log2(y), 1)
    return float(slope)


class ScalingAnalysis(BaseModel):
    """Controller traffic growth in central mode and max-node growth in distributed mode.

    `controller_linear` and `distributed_flat` are None when the sweep has
    fewer than two successful scales of that mode.
    """

    world_sizes: List[int] = []
    controller_bytes: List[float] = []
    controller_slope: Optional[float] = None
    controller_linear: Optional[bool] = None
    distributed_world_sizes: List[int] = []
    distributed_max_node_bytes: List[float] = []
    distributed_ratio: Optional[float] = None
    distributed_flat: Optional[bool] = None

    def describe(self) -> List[str]:
        lines = []
        if self.controller_slope is not None:
            verdict = "linear" if self.controller_linear else "sublinear"
            lines.append(f"central controller traffic log2-log2 slope: {self.controller_slope:.3f} ({verdict})")
        if self.distributed_flat is not None:
            first, last = self.distributed_world_sizes[0], self.distributed_world_sizes[-1]
            verdict = "flat" if self.distributed_flat else "growing"
            if self.distributed_ratio is not None:
                lines.append(
                    f"distributed max-node dataflow, {last} vs {first} workers: "
                    f"{self.distributed_ratio:.2f}x ({verdict})"
                )
            else:
                lines.append(
                    f"distributed max-node dataflow, {last} vs {first} workers: "
                    f"{self.distributed_max_node_bytes[-1]:,.0f} B from none ({verdict})"
                )
        return lines


def analyze_sweep(summaries: Sequence[RunSummary]) -> ScalingAnalysis:
    """Fit the controller slope and the distributed max-node ratio over successful runs.

    A distributed sweep whose smallest scale moves no data has no ratio; it
    counts as flat only if the largest scale moves none either.
    """
    ok = [summary for summary in summaries if summary.status == RowStatus.OK]
    central = sorted((s for s in ok if s.mode == Mode.CENTRAL.value), key=lambda s: s.world_size)
    distributed = sorted((s for s in ok if s.mode == Mode.DISTRIBUTED.value), key=lambda s: s.world_size)

    analysis = ScalingAnalysis(
        world_sizes=[s.world_size for s in central],
        controller_bytes=[s.mean_controller_bytes for s in central],
        distributed_world_sizes=[s.world_size for s in distributed],
        distributed_max_node_bytes=[s.mean_max_node_dataflow_bytes for s in distributed],
    )
    if len(central) >= 2 and all(value > 0 for value in analysis.controller_bytes):
        analysis.controller_slope = loglog_slope(analysis.world_sizes, analysis.controller_bytes)
        analysis.controller_linear = analysis.controller_slope >= MIN_CONTROLLER_SLOPE
    if len(distributed) >= 2:
        first, last = analysis.distributed_max_node_bytes[0], analysis.distributed_max_node_bytes[-1]
        if first > 0:
            analysis.distributed_ratio = last / first
            analysis.distributed_flat = analysis.distributed_ratio <= MAX_DISTRIBUTED_GROWTH
        else:
            analysis.distributed_flat = last == 0
    return analysis
