"""The DAG Worker: binds chain nodes to functions and runs iterations."""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from ..console import log
from ..dag.planner import TaskChain
from ..data.models import ParallelLayout, SampleBatch
from ..errors import FunctionError, LayoutError
from ..transport.fabric import Fabric
from ..transport.topology import ClusterTopology
from .activity import ActivityLog
from .datapath import DataPath
from .functions import CostModel, GenerationParams, NodeContext
from .hashing import keyed_generator
from .metrics import IterationMetrics, RunMetrics, aggregate_metrics
from .registry import BoundNode, FunctionRegistry
from .trace import RecordTrace


@dataclass
class ExecutableChain:
    """Chain nodes with their functions and resolved layouts."""

    chain: TaskChain
    bound: List[BoundNode]
    layouts: Dict[str, ParallelLayout]

    @property
    def node_ids(self) -> List[str]:
        return [item.node.node_id for item in self.bound]

    def layout_of(self, node_id: str) -> ParallelLayout:
        return self.layouts[node_id]

    def __len__(self) -> int:
        return len(self.bound)


def registry_bind(
    chain: TaskChain,
    registry: FunctionRegistry,
    layouts: Optional[Mapping[str, ParallelLayout]] = None,
) -> ExecutableChain:
    """Resolve every chain node to exactly one registered function.

    Raises:
        UnboundNode: a node's key is not registered.
        LayoutError: a layout mapping was given but misses a chain node.
    """
    bound = [BoundNode(node=node, key=node.func_key, function=registry.resolve(node)) for node in chain.nodes]
    resolved: Dict[str, ParallelLayout] = {}
    if layouts is not None:
        for node in chain.nodes:
            if node.node_id not in layouts:
                raise LayoutError(f"No parallel layout for stage '{node.node_id}'")
            resolved[node.node_id] = layouts[node.node_id]
    return ExecutableChain(chain=chain, bound=bound, layouts=resolved)


@dataclass
class RunSettings:
    """Per-run knobs every worker shares."""

    seed: int = 0
    generation: GenerationParams = field(default_factory=GenerationParams)
    cost: CostModel = field(default_factory=CostModel)
    advantage_eps: float = 1e-6
    record_trace: bool = False


@dataclass
class WorkerState:
    """Everything one worker owns between iterations."""

    rank: int
    topology: ClusterTopology
    chain: ExecutableChain
    datapath: DataPath
    settings: RunSettings = field(default_factory=RunSettings)
    model_versions: Dict[str, int] = field(default_factory=dict)
    rng: Optional[np.random.Generator] = None

    def __post_init__(self) -> None:
        if not 0 <= self.rank < self.topology.world_size:
            raise ValueError(f"Rank {self.rank} outside world size {self.topology.world_size}")
        if self.rng is None:
            self.rng = keyed_generator(self.settings.seed, "worker", self.rank)


class DagWorker:
    """Runs its chain strictly in order, one active node at a time.

    The first node reads from the loader; every later node consumes the
    previous node's output through the datapath. The last node's output is
    not handed off.
    """

    def __init__(self, state: WorkerState, fabric: Optional[Fabric] = None):
        self.state = state
        self.fabric = fabric
        self.activity = ActivityLog(state.rank)
        self.trace: Optional[RecordTrace] = RecordTrace() if state.settings.record_trace else None
        self.current_stage: Optional[str] = None

    @property
    def rank(self) -> int:
        return self.state.rank

    def _context(self, bound: BoundNode) -> NodeContext:
        settings = self.state.settings
        return NodeContext(
            node=bound.node,
            seed=settings.seed,
            params=settings.generation,
            cost=settings.cost,
            advantage_eps=settings.advantage_eps,
            model_versions=self.state.model_versions,
        )

    def run_iteration(self, iteration: int) -> IterationMetrics:
        """Execute the whole chain once.

        Raises:
            FunctionError: a bound function raised.
        """
        state = self.state
        chain = state.chain
        metrics = IterationMetrics(rank=self.rank, iteration=iteration)
        started = time.perf_counter_ns()
        previous: Optional[str] = None
        last = len(chain) - 1

        for index, bound in enumerate(chain.bound):
            node_id = bound.node.node_id
            layout = chain.layout_of(node_id)
            self.current_stage = node_id
            with self.activity.active(node_id, iteration):
                entered = time.perf_counter_ns()
                if previous is None:
                    batch = state.datapath.load_batch(node_id, iteration)
                else:
                    batch, nbytes = state.datapath.fetch(previous, iteration, layout)
                    if nbytes:
                        metrics.add_stage_bytes(previous, nbytes)

                try:
                    output = bound.function(batch, self._context(bound))
                except Exception as e:
                    raise FunctionError(node_id, e) from e

                metrics.records += len(output)
                metrics.tokens += output.token_count
                owner = layout.tp_rank(self.rank) == 0
                if self.trace is not None and owner:
                    self.trace.record(iteration, node_id, output)

                if index < last:
                    handoff = state.datapath.publish(node_id, iteration, layout, output)
                    metrics.suppressed_puts += int(handoff.suppressed)
                    if handoff.nbytes:
                        metrics.add_stage_bytes(node_id, handoff.nbytes)
                elif owner:
                    self._record_final(metrics, output)
                metrics.add_node_time(node_id, time.perf_counter_ns() - entered)
            previous = node_id

        state.datapath.finish_iteration(iteration)
        self.current_stage = None
        metrics.wall_ns = time.perf_counter_ns() - started
        if self.fabric is not None:
            metrics.ingress_bytes, metrics.egress_bytes = self.fabric.counters.take_iteration(self.rank, iteration)
        log("worker", f"rank {self.rank} finished iteration {iteration}", level="DEBUG")
        return metrics

    @staticmethod
    def _record_final(metrics: IterationMetrics, output: SampleBatch) -> None:
        metrics.batch_tokens += output.token_count
        rewards = [
            rollout.channels["reward"]
            for record in output.records
            for rollout in record.group
            if "reward" in rollout.channels
        ]
        metrics.add_rewards(rewards)

    def report(self, metrics: IterationMetrics, timeout: Optional[float] = None) -> Optional[RunMetrics]:
        """All-to-one metrics; returns RunMetrics on rank 0 only."""
        if self.fabric is None:
            raise RuntimeError(f"Rank {self.rank} has no fabric to report metrics over")
        return aggregate_metrics(self.fabric, self.rank, metrics, timeout=timeout)
