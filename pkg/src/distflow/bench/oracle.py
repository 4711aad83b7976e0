"""Single-process reference run: the whole global batch through the chain, no dataflow."""

from dataclasses import dataclass, field
from typing import Dict, Optional

from ..dag.planner import WorkerPlan
from ..data.loader import DistributedDataloader, dataset_size, load_shard, shard_dataset
from ..data.models import SampleBatch
from ..runtime.functions import CostModel, NodeContext, builtin_registry
from ..runtime.registry import FunctionRegistry
from ..runtime.trace import RecordTrace
from ..runtime.worker import registry_bind
from .models import RunConfig


@dataclass
class OracleResult:
    trace: RecordTrace
    model_versions: Dict[str, int] = field(default_factory=dict)


def run_oracle(
    config: RunConfig,
    plan: Optional[WorkerPlan] = None,
    iterations: Optional[int] = None,
    registry: Optional[FunctionRegistry] = None,
) -> OracleResult:
    """Run every iteration on the union of all DP groups' loader batches, with zero cost.

    Each group's loader is built exactly as a worker of that group builds it,
    so the records and their order per group match the cluster runs.
    """
    plan = plan or config.build_plan()
    chain = plan.chain_for(0)
    executable = registry_bind(chain, registry or builtin_registry(), plan.layouts)
    root = executable.node_ids[0]
    layout = plan.layouts[root]
    bytes_per_token = config.generation.bytes_per_token

    shards = shard_dataset(dataset_size(config.dataset), layout)
    loaders = [
        DistributedDataloader(
            load_shard(config.dataset, shards[dp_rank], dp_rank, 0, config.seed, bytes_per_token),
            layout,
            dp_rank,
            seed=config.seed,
            shuffle=config.dataset.shuffle,
        )
        for dp_rank in range(layout.dp_size)
    ]

    free = CostModel(terms={})
    model_versions: Dict[str, int] = {}
    trace = RecordTrace()
    total = config.total_iterations if iterations is None else iterations
    for iteration in range(total):
        records = [
            record
            for loader in loaders
            for record in loader.next_batch(iteration, config.global_batch, stage_id=root).records
        ]
        batch = SampleBatch(records=records, stage_id=root, iteration=iteration)
        for bound in executable.bound:
            context = NodeContext(
                node=bound.node,
                seed=config.seed,
                params=config.generation,
                cost=free,
                advantage_eps=config.advantage_eps,
                model_versions=model_versions,
            )
            batch = bound.function(batch, context)
            trace.record(iteration, bound.node.node_id, batch)
    return OracleResult(trace=trace, model_versions=model_versions)
