"""Simulated cluster launch: ranks as threads of one process, or one process per node."""

import multiprocessing
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from ..baseline.controller import CentralController
from ..config import get_config
from ..console import log
from ..data.buffer import BufferStore, create_stores
from ..data.loader import DistributedDataloader
from ..errors import BindError, ConfigError, MetricsTimeout, NotReady, PeerClosed, WorkerFailure
from ..dag.planner import WorkerPlan
from ..runtime.activity import NodeInterval
from ..runtime.datapath import CentralDataPath, DataPath, DistributedDataPath, Mode
from ..runtime.functions import builtin_registry
from ..runtime.metrics import IterationMetrics, RunMetrics, aggregate_metrics
from ..runtime.trace import RecordTrace
from ..runtime.worker import DagWorker, ExecutableChain, WorkerState, registry_bind
from ..transport.counters import TrafficReport
from ..transport.fabric import Backend, Fabric, create_fabric
from .models import LaunchMode, RunConfig

# Errors that only report a teardown started elsewhere.
_SECONDARY_ERRORS = (PeerClosed, NotReady, MetricsTimeout)

# Seconds the parent waits for the other node processes after one reported a failure.
_FAILURE_GRACE_S = 5.0


@dataclass
class ClusterOutcome:
    """What a launch produced; run_metrics holds rank 0's view, one entry per finished iteration."""

    run_metrics: List[RunMetrics] = field(default_factory=list)
    traces: Dict[int, RecordTrace] = field(default_factory=dict)
    model_versions: Dict[int, Dict[str, int]] = field(default_factory=dict)
    intervals: Dict[int, List[NodeInterval]] = field(default_factory=dict)
    traffic: Optional[TrafficReport] = None
    error: Optional[WorkerFailure] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def merged_trace(self) -> RecordTrace:
        merged = RecordTrace()
        for rank in sorted(self.traces):
            merged = merged.merge(self.traces[rank])
        return merged

    def all_intervals(self) -> List[NodeInterval]:
        return [interval for rank in sorted(self.intervals) for interval in self.intervals[rank]]


class LocalCluster:
    """The ranks (and possibly the dedicated controller) hosted by one process.

    Every worker rank runs in its own thread. The first failure is recorded
    with its rank and stage, then the fabric and every local store are
    aborted so blocked peers unblock.
    """

    def __init__(
        self,
        config: RunConfig,
        plan: WorkerPlan,
        fabric: Fabric,
        ranks: Iterable[int],
        host_controller: bool = False,
    ):
        if not plan.is_replicated:
            raise ConfigError("Group-mode plans can be planned and dumped but not executed")
        self.config = config
        self.plan = plan
        self.fabric = fabric
        self.topology = fabric.topology
        self.ranks = sorted(ranks)
        self.host_controller = host_controller and self.topology.dedicated_controller
        self.settings = config.run_settings()

        chain = plan.chain_for(self.ranks[0] if self.ranks else 0)
        self.executable: ExecutableChain = registry_bind(chain, builtin_registry(), plan.layouts)
        self.root_stage = self.executable.node_ids[0]
        self.root_layout = plan.layouts[self.root_stage]

        self.stores: Dict[int, BufferStore] = {}
        if config.mode == Mode.DISTRIBUTED:
            nodes = sorted({self.topology.node_of(rank) for rank in self.ranks})
            self.stores = create_stores(self.topology, plan.layouts, fabric=fabric, nodes=nodes)

        self.controller: Optional[CentralController] = None
        hosts_inline = not self.topology.dedicated_controller and self.topology.controller_rank in self.ranks
        if config.mode == Mode.CENTRAL and (hosts_inline or self.host_controller):
            self.controller = CentralController(
                fabric, chain, plan.layouts, capacity_bytes=config.controller_capacity_bytes
            )

        self.workers: Dict[int, DagWorker] = {}
        self.results: Dict[int, RunMetrics] = {}
        self.error: Optional[WorkerFailure] = None
        self.error_is_secondary = False
        self._lock = threading.Lock()

    # Setup

    def _datapath(self, rank: int) -> DataPath:
        global_batch = self.config.global_batch
        if self.config.mode == Mode.DISTRIBUTED:
            store = self.stores[self.topology.node_of(rank)]
            return DistributedDataPath(rank, self.root_layout, global_batch, store)
        inline = self.controller if rank == self.topology.controller_rank and not self.host_controller else None
        return CentralDataPath(rank, self.root_layout, global_batch, self.fabric, controller=inline)

    def _prepare(self, rank: int) -> DagWorker:
        config = self.config
        bytes_per_token = config.generation.bytes_per_token
        datapath = self._datapath(rank)
        if isinstance(datapath, CentralDataPath):
            if datapath.controller is not None:
                datapath.controller.central_load(config.dataset, config.seed, bytes_per_token)
            datapath.receive_shard(self.root_stage, config.seed, config.dataset.shuffle)
        else:
            datapath.loader = DistributedDataloader.from_source(
                config.dataset, self.root_layout, rank, config.seed, bytes_per_token
            )
        state = WorkerState(
            rank=rank,
            topology=self.topology,
            chain=self.executable,
            datapath=datapath,
            settings=self.settings,
        )
        worker = DagWorker(state, fabric=self.fabric)
        self.workers[rank] = worker
        return worker

    # Execution

    def _run_worker(self, rank: int) -> None:
        worker: Optional[DagWorker] = None
        try:
            worker = self._prepare(rank)
            for iteration in range(self.config.total_iterations):
                if self.error is not None:
                    return
                metrics = worker.run_iteration(iteration)
                summary = worker.report(metrics)
                if summary is not None:
                    self.results[iteration] = summary
        except Exception as e:
            stage = worker.current_stage if worker is not None else self.root_stage
            self._fail(rank, stage, e)

    def _run_controller(self) -> None:
        controller = self.controller
        try:
            config = self.config
            controller.central_load(config.dataset, config.seed, config.generation.bytes_per_token)
            for iteration in range(config.total_iterations):
                if self.error is not None:
                    return
                started = time.perf_counter_ns()
                moved = controller.run_iteration(iteration)
                metrics = IterationMetrics(
                    rank=controller.rank,
                    iteration=iteration,
                    wall_ns=time.perf_counter_ns() - started,
                    stage_bytes={stage: nbytes for stage, nbytes in moved.items() if nbytes},
                )
                metrics.ingress_bytes, metrics.egress_bytes = self.fabric.counters.take_iteration(
                    controller.rank, iteration
                )
                controller.current_stage = None
                aggregate_metrics(self.fabric, controller.rank, metrics)
        except Exception as e:
            self._fail(controller.rank, controller.current_stage, e)

    def _fail(self, rank: int, stage: Optional[str], error: BaseException) -> None:
        with self._lock:
            secondary = isinstance(error, _SECONDARY_ERRORS)
            if self.error is not None and (secondary or not self.error_is_secondary):
                return
            first = self.error is None
            self.error = WorkerFailure(rank, stage, f"{type(error).__name__}: {error}")
            self.error_is_secondary = secondary
        log("launcher", str(self.error), level="DEBUG" if secondary else "ERROR")
        if first:
            reason = str(self.error)
            self.fabric.abort(reason)
            for store in self.stores.values():
                store.abort(reason)

    def run(self) -> ClusterOutcome:
        threads = [
            threading.Thread(target=self._run_worker, args=(rank,), name=f"rank-{rank}", daemon=True)
            for rank in self.ranks
        ]
        if self.host_controller and self.controller is not None:
            threads.append(threading.Thread(target=self._run_controller, name="controller", daemon=True))
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        return ClusterOutcome(
            run_metrics=[self.results[it] for it in sorted(self.results)],
            traces={rank: w.trace for rank, w in self.workers.items() if w.trace is not None},
            model_versions={rank: dict(w.state.model_versions) for rank, w in self.workers.items()},
            intervals={rank: list(w.activity.intervals) for rank, w in self.workers.items()},
            traffic=self.fabric.traffic(),
            error=self.error,
        )


# Launch strategies


def launch_threads(config: RunConfig, plan: WorkerPlan) -> ClusterOutcome:
    """Every endpoint in this process on one fabric; TCP uses ephemeral loopback ports."""
    topology = plan.topology
    with create_fabric(topology, config.backend, seed=config.seed) as fabric:
        cluster = LocalCluster(
            config,
            plan,
            fabric,
            ranks=range(topology.world_size),
            host_controller=topology.dedicated_controller,
        )
        return cluster.run()


def _free_port_block(host: str, count: int, attempts: int = 20) -> int:
    """A base port such that base .. base+count-1 are all bindable right now."""
    for _ in range(attempts):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
            probe.bind((host, 0))
            base = probe.getsockname()[1]
        if base + count > 65535:
            continue
        held: List[socket.socket] = []
        try:
            for port in range(base, base + count):
                sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                held.append(sock)
                sock.bind((host, port))
            return base
        except OSError:
            continue
        finally:
            for sock in held:
                sock.close()
    raise BindError(f"No block of {count} free ports on {host}")


def _node_main(config_json: str, plan_json: str, node: int, base_port: int, results: Any) -> None:
    """Entry point of one node process; posts a picklable dict on the results queue."""
    config = RunConfig.model_validate_json(config_json)
    plan = WorkerPlan.model_validate_json(plan_json)
    topology = plan.topology
    ranks = topology.ranks_on_node(node)
    host_controller = node == 0 and topology.dedicated_controller
    local = ranks + ([topology.controller_rank] if host_controller else [])
    posted: Dict[str, Any] = {"node": node, "error": None}
    try:
        with create_fabric(topology, Backend.TCP, seed=config.seed, local_ranks=local, base_port=base_port) as fabric:
            cluster = LocalCluster(config, plan, fabric, ranks=ranks, host_controller=host_controller)
            outcome = cluster.run()
        posted.update(
            run_metrics=outcome.run_metrics,
            traces=outcome.traces,
            model_versions=outcome.model_versions,
            intervals=outcome.intervals,
            traffic=outcome.traffic,
        )
        if outcome.error is not None:
            error = outcome.error
            posted["error"] = (error.rank, error.stage, error.cause, cluster.error_is_secondary)
    except Exception as e:
        posted["error"] = (ranks[0], None, f"{type(e).__name__}: {e}", isinstance(e, _SECONDARY_ERRORS))
    results.put(posted)


def launch_processes(config: RunConfig, plan: WorkerPlan) -> ClusterOutcome:
    """One spawned process per node over loopback TCP; node 0 also hosts a dedicated controller."""
    if config.backend != Backend.TCP:
        raise ConfigError("Process launch needs the TCP backend")
    topology = plan.topology
    settings = get_config()
    base_port = settings.tcp_base_port or _free_port_block(settings.tcp_host, topology.endpoint_count)

    context = multiprocessing.get_context("spawn")
    results = context.Queue()
    config_json = config.model_dump_json()
    plan_json = plan.model_dump_json()
    processes = [
        context.Process(
            target=_node_main,
            args=(config_json, plan_json, node, base_port, results),
            name=f"distflow-node-{node}",
            daemon=True,
        )
        for node in range(topology.num_nodes)
    ]
    for process in processes:
        process.start()
    log("launcher", f"Started {len(processes)} node processes on base port {base_port}", level="DEBUG")

    posted: Dict[int, Dict[str, Any]] = {}
    failed_at: Optional[float] = None
    crashed: List[Tuple[int, Optional[int]]] = []
    while len(posted) < len(processes):
        if failed_at is not None and time.monotonic() - failed_at > _FAILURE_GRACE_S:
            break
        try:
            item = results.get(timeout=0.2)
        except queue.Empty:
            dead = [
                (index, process.exitcode)
                for index, process in enumerate(processes)
                if index not in posted and process.exitcode not in (None, 0)
            ]
            if dead and results.empty():
                crashed = dead
                break
            continue
        posted[item["node"]] = item
        if item["error"] is not None and failed_at is None:
            failed_at = time.monotonic()

    for process in processes:
        if process.is_alive():
            process.join(timeout=0.5 if failed_at is None and not crashed else 0.0)
        if process.is_alive():
            process.terminate()
        process.join()

    return _merge_posted(topology, posted, crashed)


def _merge_posted(topology, posted: Dict[int, Dict[str, Any]], crashed: List[Tuple[int, Optional[int]]]) -> ClusterOutcome:
    outcome = ClusterOutcome()
    errors: List[Tuple[int, Optional[str], str, bool]] = []
    for node in sorted(posted):
        item = posted[node]
        if item["error"] is not None:
            errors.append(item["error"])
        if "traffic" not in item:
            continue
        if item["run_metrics"]:
            outcome.run_metrics = item["run_metrics"]
        outcome.traces.update(item["traces"])
        outcome.model_versions.update(item["model_versions"])
        outcome.intervals.update(item["intervals"])
        traffic = item["traffic"]
        outcome.traffic = traffic if outcome.traffic is None else outcome.traffic.merged(traffic)

    for node, exitcode in crashed:
        errors.append((topology.ranks_on_node(node)[0], None, f"node process exited with code {exitcode}", False))
    missing = [node for node in range(topology.num_nodes) if node not in posted and node not in dict(crashed)]
    if missing and not errors:
        errors.append((topology.ranks_on_node(missing[0])[0], None, "node process did not report", False))

    if errors:
        primary = [error for error in errors if not error[3]] or errors
        rank, stage, cause, _ = primary[0]
        outcome.error = WorkerFailure(rank, stage, cause)
    return outcome


def launch_cluster(config: RunConfig, plan: WorkerPlan) -> ClusterOutcome:
    """Launch a replicated plan; AUTO hosts INPROC in threads and TCP one process per node.

    Raises:
        ConfigError: a group-mode plan, or processes requested with the INPROC backend.
    """
    if not plan.is_replicated:
        raise ConfigError("Group-mode plans can be planned and dumped but not executed")
    launch = config.launch
    if launch == LaunchMode.AUTO:
        launch = LaunchMode.THREADS if config.backend == Backend.INPROC else LaunchMode.PROCESSES
    log(
        "launcher",
        f"Launching {plan.topology.label()} {config.mode.value} on {config.backend.value} ({launch.value})",
        level="DEBUG",
    )
    if launch == LaunchMode.THREADS:
        return launch_threads(config, plan)
    return launch_processes(config, plan)
