"""Cluster topology: nodes, workers per node, and the rank grid."""

from typing import List

from pydantic import BaseModel, ConfigDict, Field


class ClusterTopology(BaseModel):
    """B nodes of W workers each; rank r lives on node r // W as local rank r % W.

    With a dedicated controller, one extra endpoint (rank world_size) lives
    alone on node index B. It never runs a worker.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_nodes: int = Field(gt=0)
    workers_per_node: int = Field(gt=0)
    dedicated_controller: bool = False

    @property
    def world_size(self) -> int:
        return self.num_nodes * self.workers_per_node

    @property
    def endpoint_count(self) -> int:
        return self.world_size + (1 if self.dedicated_controller else 0)

    @property
    def node_count(self) -> int:
        """Number of node indices including the dedicated controller node."""
        return self.num_nodes + (1 if self.dedicated_controller else 0)

    @property
    def controller_rank(self) -> int:
        return self.world_size if self.dedicated_controller else 0

    def node_of(self, rank: int) -> int:
        self._check_rank(rank)
        if rank >= self.world_size:
            return self.num_nodes
        return rank // self.workers_per_node

    def local_rank(self, rank: int) -> int:
        self._check_rank(rank)
        if rank >= self.world_size:
            return 0
        return rank % self.workers_per_node

    def node_leader(self, node: int) -> int:
        """Rank whose endpoint a node's databuffer uses."""
        if node == self.num_nodes and self.dedicated_controller:
            return self.world_size
        if not 0 <= node < self.num_nodes:
            raise ValueError(f"Node {node} outside topology with {self.num_nodes} nodes")
        return node * self.workers_per_node

    def ranks_on_node(self, node: int) -> List[int]:
        if node == self.num_nodes and self.dedicated_controller:
            return [self.world_size]
        if not 0 <= node < self.num_nodes:
            raise ValueError(f"Node {node} outside topology with {self.num_nodes} nodes")
        start = node * self.workers_per_node
        return list(range(start, start + self.workers_per_node))

    def label(self) -> str:
        return f"{self.num_nodes}x{self.workers_per_node}"

    def _check_rank(self, rank: int) -> None:
        if not 0 <= rank < self.endpoint_count:
            raise ValueError(f"Rank {rank} outside [0, {self.endpoint_count})")


def parse_scale(text: str) -> ClusterTopology:
    """Parse a 'BxW' scale label such as '2x4'."""
    try:
        nodes, workers = text.lower().strip().split("x")
        return ClusterTopology(num_nodes=int(nodes), workers_per_node=int(workers))
    except ValueError as e:
        raise ValueError(f"Invalid scale '{text}', expected <nodes>x<workers>") from e
