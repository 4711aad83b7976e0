"""Run configuration and result rows for experiments."""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..dag.models import DagGraph
from ..dag.parser import load_dag_file
from ..dag.planner import ChainGroup, WorkerPlan, assign_chains, resolve_layouts, serialize_graph
from ..dag.presets import Algorithm, preset_dag
from ..dag.validator import validate_dag
from ..data.loader import DatasetConfig, dataset_size
from ..data.models import ParallelLayout, StageLayoutSpec
from ..errors import ConfigError, DistFlowError
from ..runtime.datapath import Mode
from ..runtime.functions import CostModel, GenerationParams
from ..runtime.worker import RunSettings
from ..transport.fabric import Backend
from ..transport.topology import ClusterTopology


class LaunchMode(str, Enum):
    """How ranks are hosted: threads of this process, or one process per node."""
    AUTO = "auto"
    THREADS = "threads"
    PROCESSES = "processes"


class TopologyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_nodes: int = Field(gt=0)
    workers_per_node: int = Field(gt=0)

    def label(self) -> str:
        return f"{self.num_nodes}x{self.workers_per_node}"


class ChainGroupSpec(BaseModel):
    """Inclusive rank range running its own graph (group mode)."""

    model_config = ConfigDict(extra="forbid")

    first_rank: int = Field(ge=0)
    last_rank: int = Field(ge=0)
    algorithm: Optional[Algorithm] = None
    dag_path: Optional[Path] = None


class RunConfig(BaseModel):
    """One experiment, as written in a run file."""

    model_config = ConfigDict(extra="forbid")

    name: str = "run"
    topology: TopologyConfig = Field(default_factory=lambda: TopologyConfig(num_nodes=1, workers_per_node=4))
    backend: Backend = Backend.INPROC
    mode: Mode = Mode.DISTRIBUTED
    launch: LaunchMode = LaunchMode.AUTO

    # Workflow
    algorithm: Optional[Algorithm] = None
    dag_path: Optional[Path] = None
    layouts: Dict[str, StageLayoutSpec] = Field(default_factory=dict)
    default_layout: StageLayoutSpec = Field(default_factory=StageLayoutSpec)
    chain_groups: List[ChainGroupSpec] = Field(default_factory=list)

    # Iterations
    global_batch: int = Field(default=16, gt=0)
    iterations: int = Field(default=5, ge=1)
    warmup_iterations: int = Field(default=2, ge=0)
    seed: int = Field(default=0, ge=0)

    # Workload
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    generation: GenerationParams = Field(default_factory=GenerationParams)
    cost_model: CostModel = Field(default_factory=CostModel)
    advantage_eps: float = Field(default=1e-6, ge=0)

    # Central baseline
    controller_capacity_bytes: Optional[int] = Field(default=None, gt=0)
    dedicated_controller: bool = False

    record_trace: bool = False

    @model_validator(mode="after")
    def check_workflow(self) -> "RunConfig":
        if self.algorithm is not None and self.dag_path is not None:
            raise ValueError("Give either 'algorithm' or 'dag_path', not both")
        if self.algorithm is None and self.dag_path is None:
            self.algorithm = Algorithm.GRPO
        return self

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        """Read a JSON run file.

        Raises:
            ConfigError: the file is missing, not JSON, or does not match the schema.
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read run file {path}: {e}") from e
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(f"Invalid run file {path}: {e}") from e

    @property
    def total_iterations(self) -> int:
        return self.warmup_iterations + self.iterations

    @property
    def scale(self) -> str:
        return self.topology.label()

    def cluster_topology(self) -> ClusterTopology:
        return ClusterTopology(
            num_nodes=self.topology.num_nodes,
            workers_per_node=self.topology.workers_per_node,
            dedicated_controller=self.dedicated_controller and self.mode == Mode.CENTRAL,
        )

    def run_settings(self) -> RunSettings:
        return RunSettings(
            seed=self.seed,
            generation=self.generation,
            cost=self.cost_model,
            advantage_eps=self.advantage_eps,
            record_trace=self.record_trace,
        )

    def fingerprint(self) -> str:
        """Short digest of everything that determines results, independent of backend and launch."""
        data = self.model_dump(mode="json", exclude={"backend", "launch"})
        encoded = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(encoded).hexdigest()[:12]

    # Planning

    def load_graph(self, algorithm: Optional[Algorithm] = None, dag_path: Optional[Path] = None) -> DagGraph:
        if dag_path is None and algorithm is None:
            algorithm, dag_path = self.algorithm, self.dag_path
        graph = load_dag_file(dag_path) if dag_path is not None else preset_dag(algorithm)
        report = validate_dag(graph)
        if not report.ok:
            raise ConfigError(f"Graph '{graph.name}' is invalid: {report.issues[0].message}")
        return graph

    def build_plan(self) -> WorkerPlan:
        """Plan chains and layouts, then check every divisibility precondition.

        Raises:
            ConfigError, LayoutError, CoverageError: the run cannot be launched.
        """
        topology = self.cluster_topology()
        default = self.default_layout.resolve(topology)
        if self.chain_groups:
            groups = []
            stages: List[str] = []
            for spec in self.chain_groups:
                chain = serialize_graph(self.load_graph(spec.algorithm, spec.dag_path))
                groups.append(ChainGroup(first_rank=spec.first_rank, last_rank=spec.last_rank, chain=chain))
                stages.extend(node_id for node_id in chain.node_ids if node_id not in stages)
            layouts = resolve_layouts(stages, topology, self._explicit_layouts(topology), default)
            plan = assign_chains(groups, topology, layouts)
        else:
            chain = serialize_graph(self.load_graph())
            layouts = resolve_layouts(chain.node_ids, topology, self._explicit_layouts(topology), default)
            plan = assign_chains(chain, topology, layouts)
        self.check_preconditions(plan)
        return plan

    def _explicit_layouts(self, topology: ClusterTopology) -> Dict[str, ParallelLayout]:
        return {stage: spec.resolve(topology) for stage, spec in self.layouts.items()}

    def check_preconditions(self, plan: WorkerPlan) -> None:
        """d | G per stage, B | G/B at every resharding transition, d | N and enough samples per shard."""
        topology = plan.topology
        num_nodes = topology.num_nodes
        g = self.global_batch
        for stage, layout in plan.layouts.items():
            if g % layout.dp_size != 0:
                raise ConfigError(f"Global batch {g} is not divisible by dp_size {layout.dp_size} of '{stage}'")

        for chain in {tuple(c.node_ids): c for c in plan.chains.values()}.values():
            ids = chain.node_ids
            for producer, consumer in zip(ids, ids[1:]):
                a, b = plan.layouts[producer], plan.layouts[consumer]
                reshards = self.mode == Mode.DISTRIBUTED and a.dp_size != b.dp_size
                if reshards and (g % num_nodes != 0 or (g // num_nodes) % num_nodes != 0):
                    raise ConfigError(
                        f"Resharding '{producer}' -> '{consumer}' needs {num_nodes} to divide "
                        f"the per-store count of global batch {g}"
                    )
            root = plan.layouts[ids[0]]
            try:
                total = dataset_size(self.dataset)
            except DistFlowError as e:
                raise ConfigError(str(e)) from e
            if total % root.dp_size != 0:
                raise ConfigError(f"Dataset size {total} is not divisible by dp_size {root.dp_size} of '{ids[0]}'")
            if total // root.dp_size < g // root.dp_size:
                raise ConfigError(
                    f"Shards of {total // root.dp_size} samples cannot supply {g // root.dp_size} per iteration"
                )

    def scaled(self, num_nodes: int, workers_per_node: int) -> "RunConfig":
        """This config at another scale: G and the synthetic dataset grow with the node count.

        Explicit dp sizes are dropped so every stage re-derives dp from the new world size.
        """
        base_nodes = self.topology.num_nodes
        if (self.global_batch * num_nodes) % base_nodes != 0:
            raise ConfigError(f"Global batch {self.global_batch} cannot scale from {base_nodes} to {num_nodes} nodes")
        dataset = self.dataset
        if dataset.path is None:
            dataset = dataset.model_copy(update={"size": max(1, dataset.size * num_nodes // base_nodes)})
        return self.model_copy(
            update={
                "topology": TopologyConfig(num_nodes=num_nodes, workers_per_node=workers_per_node),
                "global_batch": self.global_batch * num_nodes // base_nodes,
                "dataset": dataset,
                "layouts": {stage: StageLayoutSpec(tp_size=spec.tp_size) for stage, spec in self.layouts.items()},
                "default_layout": StageLayoutSpec(tp_size=self.default_layout.tp_size),
            }
        )


class RowStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


class ResultRow(BaseModel):
    """One CSV row; field order is the column order."""

    fingerprint: str
    mode: str
    backend: str
    scale: str
    world_size: int
    global_batch: int
    iteration: int
    status: RowStatus = RowStatus.OK
    wall_time_s: float = 0.0
    tokens: int = 0
    batch_tokens: int = 0
    tokens_per_sec: float = 0.0
    tokens_per_sec_per_worker: float = 0.0
    stage_times_ms: str = ""
    max_stage_time_ms: float = 0.0
    max_node_ingress: int = 0
    max_node_egress: int = 0
    controller_ingress: int = 0
    controller_bytes: int = 0
    controller_node_bytes: int = 0
    dataflow_bytes: int = 0
    max_node_dataflow_bytes: int = 0
    suppressed_puts: int = 0
    reward_mean: float = 0.0
    reward_std: float = 0.0
    entropy_proxy: float = 0.0
    speedup: Optional[float] = None
    error: str = ""

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields)


# Columns whose values depend on timing; everything else is reproducible.
WALL_TIME_COLUMNS = (
    "wall_time_s",
    "tokens_per_sec",
    "tokens_per_sec_per_worker",
    "stage_times_ms",
    "max_stage_time_ms",
    "speedup",
)


class RunSummary(BaseModel):
    """Averages over the measured iterations of one run."""

    fingerprint: str
    mode: str
    backend: str
    scale: str
    world_size: int
    global_batch: int
    status: RowStatus
    measured_iterations: int = 0
    mean_wall_time_s: float = 0.0
    mean_tokens_per_sec: float = 0.0
    mean_tokens_per_sec_per_worker: float = 0.0
    mean_controller_bytes: float = 0.0
    mean_controller_node_bytes: float = 0.0
    mean_max_node_dataflow_bytes: float = 0.0
    mean_reward: float = 0.0
    speedup: Optional[float] = None
    error: str = ""

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields)
