"""How a worker obtains stage inputs and hands off stage outputs, per dataflow mode."""

from abc import ABC, abstractmethod
from enum import Enum
from typing import NamedTuple, Optional, Tuple

from ..baseline.controller import LOAD_ITERATION, CentralController, collect_tag, dispatch_tag, load_tag
from ..data.buffer import BufferStore
from ..data.codec import decode_batch, decode_records, encode_batch
from ..data.loader import DistributedDataloader
from ..data.models import ParallelLayout, SampleBatch
from ..transport.fabric import Fabric
from ..transport.framing import Envelope


class Mode(str, Enum):
    """Dataflow architecture."""
    DISTRIBUTED = "distributed"
    CENTRAL = "central"


class Handoff(NamedTuple):
    suppressed: bool
    nbytes: int


class DataPath(ABC):
    """Inputs and outputs of chain nodes for one worker rank."""

    mode: Mode

    def __init__(self, rank: int, layout: ParallelLayout, global_batch: int):
        self.rank = rank
        self.root_layout = layout
        self.global_batch = global_batch
        self.loader: Optional[DistributedDataloader] = None

    def load_batch(self, stage_id: str, iteration: int) -> SampleBatch:
        """The next loader batch for this rank's DP group."""
        if self.loader is None:
            raise RuntimeError(f"Rank {self.rank} has no dataloader")
        return self.loader.next_batch(iteration, self.global_batch, stage_id=stage_id)

    @abstractmethod
    def publish(self, stage_id: str, iteration: int, layout: ParallelLayout, batch: SampleBatch) -> Handoff:
        """Hand a stage output to the dataflow."""

    @abstractmethod
    def fetch(self, stage_id: str, iteration: int, to_layout: ParallelLayout) -> Tuple[SampleBatch, int]:
        """This rank's input for the consumer of a stage, plus bytes attributed to this rank."""

    def finish_iteration(self, iteration: int) -> None:
        pass


class DistributedDataPath(DataPath):
    """Node-local databuffer with all-to-all resharding between stores."""

    mode = Mode.DISTRIBUTED

    def __init__(self, rank: int, layout: ParallelLayout, global_batch: int, store: BufferStore):
        super().__init__(rank, layout, global_batch)
        self.store = store

    def publish(self, stage_id: str, iteration: int, layout: ParallelLayout, batch: SampleBatch) -> Handoff:
        ack = self.store.put(stage_id, iteration, layout.dp_rank(self.rank), layout.tp_rank(self.rank), batch)
        return Handoff(suppressed=not ack.accepted, nbytes=0)

    def fetch(self, stage_id: str, iteration: int, to_layout: ParallelLayout) -> Tuple[SampleBatch, int]:
        batch = self.store.get(stage_id, iteration, to_layout.dp_rank(self.rank), to_layout)
        nbytes = 0
        if self.rank == self.store.leader_rank:
            nbytes = self.store.redistribution_bytes.get((stage_id, iteration), 0)
        return batch, nbytes

    def finish_iteration(self, iteration: int) -> None:
        self.store.complete_iteration(self.rank, iteration)


class CentralDataPath(DataPath):
    """Every stage output goes to the controller rank, which sends each group its slice.

    When this rank also hosts the controller, it relays a transition between
    publishing its own output and fetching its next input.
    """

    mode = Mode.CENTRAL

    def __init__(
        self,
        rank: int,
        layout: ParallelLayout,
        global_batch: int,
        fabric: Fabric,
        controller: Optional[CentralController] = None,
    ):
        super().__init__(rank, layout, global_batch)
        self.fabric = fabric
        self.controller = controller
        self.controller_rank = fabric.topology.controller_rank

    def receive_shard(self, stage_id: str, seed: int, shuffle: bool) -> DistributedDataloader:
        """Wait for this rank's shard from the controller's initial load."""
        envelope = self.fabric.recv(self.rank, load_tag(stage_id), LOAD_ITERATION, src=self.controller_rank)
        layout = self.root_layout
        self.loader = DistributedDataloader(
            decode_records(envelope.payload), layout, layout.dp_rank(self.rank), seed=seed, shuffle=shuffle
        )
        return self.loader

    def publish(self, stage_id: str, iteration: int, layout: ParallelLayout, batch: SampleBatch) -> Handoff:
        if layout.tp_rank(self.rank) != 0:
            return Handoff(suppressed=True, nbytes=0)
        envelope = Envelope(self.rank, self.controller_rank, collect_tag(stage_id), iteration, encode_batch(batch))
        return Handoff(suppressed=False, nbytes=self.fabric.send(envelope))

    def fetch(self, stage_id: str, iteration: int, to_layout: ParallelLayout) -> Tuple[SampleBatch, int]:
        nbytes = 0
        if self.controller is not None:
            nbytes = self.controller.relay(stage_id, iteration, to_layout)
        envelope = self.fabric.recv(
            self.rank, dispatch_tag(stage_id, to_layout.dp_size), iteration, src=self.controller_rank
        )
        return decode_batch(envelope.payload), nbytes
