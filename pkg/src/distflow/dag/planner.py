"""DAG Planner: linearize a graph into a task chain and assign chains to workers."""

import json
from typing import Dict, List, Mapping, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..console import log
from ..data.models import ParallelLayout
from ..errors import CoverageError, CycleError, LayoutError
from ..transport.topology import ClusterTopology
from .models import DagGraph, NodeSpec
from .validator import find_cycles


class TaskChain(BaseModel):
    """Serialized execution program: at most one node of it is active at a time."""

    model_config = ConfigDict(frozen=True)

    graph_name: str
    nodes: List[NodeSpec]

    @property
    def node_ids(self) -> List[str]:
        return [node.node_id for node in self.nodes]

    @property
    def func_keys(self) -> List[str]:
        return [node.func_key for node in self.nodes]

    def __len__(self) -> int:
        return len(self.nodes)


class ChainGroup(BaseModel):
    """Inclusive rank range running its own chain (group mode)."""

    model_config = ConfigDict(frozen=True)

    first_rank: int = Field(ge=0)
    last_rank: int = Field(ge=0)
    chain: TaskChain

    @model_validator(mode="after")
    def check_range(self) -> "ChainGroup":
        if self.last_rank < self.first_rank:
            raise ValueError(f"Rank range {self.first_rank}-{self.last_rank} is empty")
        return self


class WorkerPlan(BaseModel):
    """Per-rank chain assignment plus the layout of every stage."""

    model_config = ConfigDict(frozen=True)

    topology: ClusterTopology
    chains: Dict[int, TaskChain]
    layouts: Dict[str, ParallelLayout]

    @property
    def is_replicated(self) -> bool:
        """True when every rank runs the same chain."""
        unique = {tuple(chain.node_ids) for chain in self.chains.values()}
        return len(unique) == 1

    def chain_for(self, rank: int) -> TaskChain:
        return self.chains[rank]

    def to_dump(self) -> Dict[str, object]:
        """Diagnostic dump: rank -> node ids, stage -> layout."""
        return {
            "ranks": {str(rank): self.chains[rank].node_ids for rank in sorted(self.chains)},
            "layouts": {
                stage: {"dp_size": layout.dp_size, "tp_size": layout.tp_size}
                for stage, layout in self.layouts.items()
            },
        }

    def dump_json(self) -> str:
        return json.dumps(self.to_dump(), indent=2)


def compute_depths(graph: DagGraph) -> Dict[str, int]:
    """Longest-path depth of each node: 0 for roots, else 1 + max over deps.

    Raises:
        CycleError: the graph has a cycle.
    """
    cycles = find_cycles(graph)
    if cycles:
        raise CycleError(cycles[0])

    node_map = graph.node_map()
    depths: Dict[str, int] = {}
    for start in graph.node_ids:
        if start in depths:
            continue
        # Iterative post-order so deep chains do not hit the recursion limit
        stack = [start]
        while stack:
            current = stack[-1]
            pending = [dep for dep in node_map[current].deps if dep in node_map and dep not in depths]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            deps = [dep for dep in node_map[current].deps if dep in node_map]
            depths[current] = 1 + max(depths[dep] for dep in deps) if deps else 0
    return depths


def serialize_graph(graph: DagGraph) -> TaskChain:
    """Order nodes by (depth, declaration order) into one sequential chain.

    Equal-depth nodes have no edge between them, so any order among them is
    topological; declaration order makes the result deterministic.
    """
    depths = compute_depths(graph)
    declaration = {node_id: index for index, node_id in reversed(list(enumerate(graph.node_ids)))}
    node_map = graph.node_map()
    ordered = sorted(node_map, key=lambda node_id: (depths[node_id], declaration[node_id]))
    log("planner", f"Serialized '{graph.name}' into chain {ordered}", level="DEBUG")
    return TaskChain(graph_name=graph.name, nodes=[node_map[node_id] for node_id in ordered])


def check_layouts(
    chain_nodes: Sequence[str],
    topology: ClusterTopology,
    layouts: Mapping[str, ParallelLayout],
) -> None:
    """Every chain stage needs a layout with dp*tp = world size and tp | workers per node."""
    for node_id in chain_nodes:
        layout = layouts.get(node_id)
        if layout is None:
            raise LayoutError(f"No parallel layout given for stage '{node_id}'")
        layout.check(topology, node_id)


def assign_chains(
    chains: Union[TaskChain, Sequence[ChainGroup]],
    topology: ClusterTopology,
    layouts: Mapping[str, ParallelLayout],
) -> WorkerPlan:
    """Build a WorkerPlan.

    A single chain is replicated to every rank. A sequence of ChainGroups maps
    each declared rank range to its own chain; the ranges must partition
    [0, world_size).

    Raises:
        LayoutError: a stage layout does not fit the topology.
        CoverageError: group ranges leave ranks unassigned or assign them twice.
    """
    world = topology.world_size
    assignment: Dict[int, TaskChain] = {}

    if isinstance(chains, TaskChain):
        check_layouts(chains.node_ids, topology, layouts)
        for rank in range(world):
            assignment[rank] = chains
    else:
        groups = list(chains)
        if not groups:
            raise CoverageError("Group mode needs at least one chain group")
        doubly: List[int] = []
        for group in groups:
            check_layouts(group.chain.node_ids, topology, layouts)
            for rank in range(group.first_rank, group.last_rank + 1):
                if rank >= world:
                    raise CoverageError(f"Rank {rank} is outside world size {world}")
                if rank in assignment:
                    doubly.append(rank)
                assignment[rank] = group.chain
        if doubly:
            raise CoverageError(f"Ranks assigned more than once: {sorted(set(doubly))}")
        missing = [rank for rank in range(world) if rank not in assignment]
        if missing:
            raise CoverageError(f"Ranks left without a chain: {missing}")

    stages = {node_id for chain in assignment.values() for node_id in chain.node_ids}
    plan = WorkerPlan(
        topology=topology,
        chains=dict(sorted(assignment.items())),
        layouts={stage: layouts[stage] for stage in layouts if stage in stages},
    )
    log("planner", f"Planned {len(stages)} stages over {world} workers ({topology.label()})", level="DEBUG")
    return plan


def resolve_layouts(
    chain_nodes: Sequence[str],
    topology: ClusterTopology,
    layouts: Mapping[str, ParallelLayout],
    default: Optional[ParallelLayout] = None,
) -> Dict[str, ParallelLayout]:
    """Fill stages without an explicit layout with the default (pure DP if none given)."""
    fallback = default or ParallelLayout(dp_size=topology.world_size, tp_size=1)
    return {node_id: layouts.get(node_id, fallback) for node_id in chain_nodes}
