"""Per-rank iteration metrics and their all-to-one aggregation at rank 0."""

import math
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from ..errors import MetricsTimeout, RecvTimeout
from ..transport.collectives import TAG_METRICS, gather_to
from ..transport.fabric import Fabric


class IterationMetrics(BaseModel):
    """What one rank reports for one iteration; serialized as JSON with a fixed key order."""

    rank: int = Field(ge=0)
    iteration: int = Field(ge=0)
    wall_ns: int = Field(default=0, ge=0)
    node_times_ns: Dict[str, int] = Field(default_factory=dict)
    records: int = Field(default=0, ge=0, description="Records produced, summed over chain nodes")
    tokens: int = Field(default=0, ge=0, description="Tokens of every produced record")
    batch_tokens: int = Field(default=0, ge=0, description="Final-stage tokens this rank owns (TP rank 0 only)")
    suppressed_puts: int = Field(default=0, ge=0)
    stage_bytes: Dict[str, int] = Field(default_factory=dict)
    ingress_bytes: int = Field(default=0, ge=0)
    egress_bytes: int = Field(default=0, ge=0)
    reward_sum: float = 0.0
    reward_sq_sum: float = 0.0
    reward_count: int = Field(default=0, ge=0)

    def add_node_time(self, node_id: str, ns: int) -> None:
        self.node_times_ns[node_id] = self.node_times_ns.get(node_id, 0) + ns

    def add_stage_bytes(self, node_id: str, nbytes: int) -> None:
        self.stage_bytes[node_id] = self.stage_bytes.get(node_id, 0) + nbytes

    def add_rewards(self, rewards: Sequence[float]) -> None:
        self.reward_sum += float(sum(rewards))
        self.reward_sq_sum += float(sum(r * r for r in rewards))
        self.reward_count += len(rewards)

    def to_json(self) -> bytes:
        ordered = self.model_copy(
            update={
                "node_times_ns": dict(sorted(self.node_times_ns.items())),
                "stage_bytes": dict(sorted(self.stage_bytes.items())),
            }
        )
        return ordered.model_dump_json().encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes) -> "IterationMetrics":
        return cls.model_validate_json(data)


class RunMetrics(BaseModel):
    """Rank 0's view of one iteration: every rank's metrics plus reductions."""

    iteration: int
    per_rank: List[IterationMetrics]
    node_of: List[int] = Field(default_factory=list)
    tokens: int = 0
    batch_tokens: int = 0
    wall_ns: int = 0
    stage_times_ns: Dict[str, int] = Field(default_factory=dict)
    suppressed_puts: int = 0
    stage_bytes: Dict[str, int] = Field(default_factory=dict)
    reward_mean: float = 0.0
    reward_std: float = 0.0

    @property
    def wall_s(self) -> float:
        return self.wall_ns / 1e9

    @property
    def tokens_per_sec(self) -> float:
        """Global-batch tokens divided by iteration wall time."""
        return self.batch_tokens / self.wall_s if self.wall_ns > 0 else 0.0

    @property
    def max_stage_time_ns(self) -> int:
        return max(self.stage_times_ns.values(), default=0)

    @property
    def entropy_proxy(self) -> float:
        """Reward variance over the global batch; a stand-in, not a policy entropy."""
        return self.reward_std ** 2

    def _node_totals(self, attribute: str) -> List[int]:
        count = max(self.node_of, default=-1) + 1
        totals = [0] * count
        for metrics in self.per_rank:
            totals[self.node_of[metrics.rank]] += getattr(metrics, attribute)
        return totals

    @property
    def node_ingress(self) -> List[int]:
        return self._node_totals("ingress_bytes")

    @property
    def node_egress(self) -> List[int]:
        return self._node_totals("egress_bytes")

    @property
    def node_dataflow_bytes(self) -> List[int]:
        """Inter-stage data bytes attributed to each node (resharding or controller relays)."""
        count = max(self.node_of, default=-1) + 1
        totals = [0] * count
        for metrics in self.per_rank:
            totals[self.node_of[metrics.rank]] += sum(metrics.stage_bytes.values())
        return totals

    def for_rank(self, rank: int) -> Optional[IterationMetrics]:
        return next((metrics for metrics in self.per_rank if metrics.rank == rank), None)


def reduce_metrics(per_rank: Sequence[IterationMetrics], node_of: Optional[Sequence[int]] = None) -> RunMetrics:
    """Sum tokens, take the max time per stage and pool reward moments."""
    per_rank = sorted(per_rank, key=lambda metrics: metrics.rank)
    if not per_rank:
        raise ValueError("No metrics to reduce")
    stage_times: Dict[str, int] = {}
    stage_bytes: Dict[str, int] = {}
    for metrics in per_rank:
        for node_id, ns in metrics.node_times_ns.items():
            stage_times[node_id] = max(stage_times.get(node_id, 0), ns)
        for node_id, nbytes in metrics.stage_bytes.items():
            stage_bytes[node_id] = stage_bytes.get(node_id, 0) + nbytes

    count = sum(metrics.reward_count for metrics in per_rank)
    mean = std = 0.0
    if count:
        mean = sum(metrics.reward_sum for metrics in per_rank) / count
        second = sum(metrics.reward_sq_sum for metrics in per_rank) / count
        std = math.sqrt(max(0.0, second - mean * mean))

    return RunMetrics(
        iteration=per_rank[0].iteration,
        per_rank=list(per_rank),
        node_of=list(node_of) if node_of is not None else [0] * (per_rank[-1].rank + 1),
        tokens=sum(metrics.tokens for metrics in per_rank),
        batch_tokens=sum(metrics.batch_tokens for metrics in per_rank),
        wall_ns=max(metrics.wall_ns for metrics in per_rank),
        stage_times_ns=dict(sorted(stage_times.items())),
        suppressed_puts=sum(metrics.suppressed_puts for metrics in per_rank),
        stage_bytes=dict(sorted(stage_bytes.items())),
        reward_mean=mean,
        reward_std=std,
    )


def aggregate_metrics(
    fabric: Fabric,
    rank: int,
    metrics: IterationMetrics,
    root: int = 0,
    timeout: Optional[float] = None,
) -> Optional[RunMetrics]:
    """All-to-one metrics gather; rank 0 returns RunMetrics, other ranks None.

    Every endpoint reports, including a dedicated controller.

    Raises:
        MetricsTimeout: at the root, naming every rank that did not report.
    """
    topology = fabric.topology
    try:
        gathered = gather_to(
            fabric,
            rank,
            root,
            metrics.to_json(),
            TAG_METRICS,
            metrics.iteration,
            participants=range(topology.endpoint_count),
            timeout=timeout,
        )
    except RecvTimeout as e:
        raise MetricsTimeout(getattr(e, "missing_ranks", [])) from e
    if gathered is None:
        return None
    return reduce_metrics(
        [IterationMetrics.from_json(payload) for payload in gathered],
        node_of=[topology.node_of(r) for r in range(topology.endpoint_count)],
    )
