"""Pydantic models for records, batches and parallel layouts."""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import LayoutError
from ..transport.topology import ClusterTopology


class Rollout(BaseModel):
    """One generated response with its scalar channels."""

    payload: bytes
    token_count: int = Field(ge=0)
    channels: Dict[str, float] = Field(default_factory=dict)


class SampleRecord(BaseModel):
    """A prompt and its rollout group; records are never split across destinations.

    Records straight from the loader carry no rollouts yet; generation gives
    every record a group of at least one.
    """

    sample_id: int = Field(ge=0)
    prompt: bytes = b""
    prompt_tokens: int = Field(default=0, ge=0)
    group: List[Rollout] = Field(default_factory=list)
    meta: Dict[str, str] = Field(default_factory=dict)

    @property
    def token_count(self) -> int:
        return sum(rollout.token_count for rollout in self.group)

    @property
    def payload_bytes(self) -> int:
        return len(self.prompt) + sum(len(rollout.payload) for rollout in self.group)


class SampleBatch(BaseModel):
    """Ordered records produced by one stage for one iteration."""

    records: List[SampleRecord] = Field(default_factory=list)
    stage_id: str = ""
    iteration: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_unique_ids(self) -> "SampleBatch":
        ids = [record.sample_id for record in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Duplicate sample ids in batch for stage '{self.stage_id}'")
        return self

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sample_ids(self) -> List[int]:
        return [record.sample_id for record in self.records]

    @property
    def token_count(self) -> int:
        return sum(record.token_count for record in self.records)


class ParallelLayout(BaseModel):
    """DP and TP sizes of one stage; rank r has dp_rank r // tp and tp_rank r % tp."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dp_size: int = Field(gt=0)
    tp_size: int = Field(default=1, gt=0)

    def dp_rank(self, rank: int) -> int:
        return rank // self.tp_size

    def tp_rank(self, rank: int) -> int:
        return rank % self.tp_size

    def group_ranks(self, dp_rank: int) -> List[int]:
        start = dp_rank * self.tp_size
        return list(range(start, start + self.tp_size))

    def groups_per_node(self, topology: ClusterTopology) -> int:
        return topology.workers_per_node // self.tp_size

    def local_dp_ranks(self, topology: ClusterTopology, node: int) -> List[int]:
        """DP ranks whose groups live on the node, in dp order."""
        per_node = self.groups_per_node(topology)
        return list(range(node * per_node, (node + 1) * per_node))

    def check(self, topology: ClusterTopology, stage_id: str = "") -> None:
        """Raise LayoutError unless dp*tp equals the world size and tp divides workers per node."""
        label = f" for stage '{stage_id}'" if stage_id else ""
        if self.dp_size * self.tp_size != topology.world_size:
            raise LayoutError(
                f"Layout dp={self.dp_size}, tp={self.tp_size}{label}: "
                f"{self.dp_size}x{self.tp_size} != world size {topology.world_size}"
            )
        if topology.workers_per_node % self.tp_size != 0:
            raise LayoutError(
                f"Layout tp={self.tp_size}{label} does not divide "
                f"{topology.workers_per_node} workers per node"
            )


class StageLayoutSpec(BaseModel):
    """Layout as written in a run file; dp_size may be left for derivation."""

    model_config = ConfigDict(extra="forbid")

    dp_size: Optional[int] = Field(default=None, gt=0)
    tp_size: int = Field(default=1, gt=0)

    def resolve(self, topology: ClusterTopology) -> ParallelLayout:
        if self.dp_size is not None:
            return ParallelLayout(dp_size=self.dp_size, tp_size=self.tp_size)
        if topology.world_size % self.tp_size != 0:
            raise LayoutError(f"tp={self.tp_size} does not divide world size {topology.world_size}")
        return ParallelLayout(dp_size=topology.world_size // self.tp_size, tp_size=self.tp_size)
