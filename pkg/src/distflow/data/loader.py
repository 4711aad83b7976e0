"""Distributed Dataloader: static, DP-sharded ingest."""

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from ..console import log
from ..errors import ConfigError, DataIoError, DataParseError, IndivisibleError
from ..runtime.hashing import keyed_bytes, keyed_permutation
from .models import ParallelLayout, SampleBatch, SampleRecord

ShardRange = Tuple[int, int]

LOADER_STAGE = "__loader__"


class DatasetConfig(BaseModel):
    """Where prompts come from: a JSONL file or N synthetic prompts."""

    path: Optional[Path] = None
    size: int = Field(default=512, gt=0, description="Synthetic dataset size N")
    prompt_tokens: int = Field(default=32, ge=0)
    shuffle: bool = False


def dataset_size(source: DatasetConfig) -> int:
    """Number of samples N; for JSONL, the number of non-blank lines."""
    if source.path is None:
        return source.size
    try:
        with open(source.path, "r", encoding="utf-8") as f:
            return sum(1 for line in f if line.strip())
    except OSError as e:
        raise DataIoError(f"Cannot read dataset {source.path}: {e}") from e


def shard_dataset(dataset_size: int, layout: ParallelLayout) -> List[ShardRange]:
    """Split [0, N) into dp_size contiguous, equal, half-open ranges.

    Raises:
        IndivisibleError: dp_size does not divide N.
    """
    d = layout.dp_size
    if dataset_size % d != 0:
        raise IndivisibleError(dataset_size, d, what="dataset size")
    width = dataset_size // d
    return [(g * width, (g + 1) * width) for g in range(d)]


def load_shard(
    source: DatasetConfig,
    shard: ShardRange,
    dp_rank: int,
    tp_rank: int,
    seed: int,
    bytes_per_token: int,
) -> List[SampleRecord]:
    """Load only the samples of one shard; every TP rank of a group loads identical content.

    Raises:
        DataIoError: the JSONL file cannot be read.
        DataParseError: a line in the shard is not a valid sample (carries the line number).
    """
    start, stop = shard
    if source.path is None:
        records = [
            SampleRecord(
                sample_id=index,
                prompt=keyed_bytes(seed, source.prompt_tokens * bytes_per_token, "prompt", index),
                prompt_tokens=source.prompt_tokens,
                meta={"source": "synthetic"},
            )
            for index in range(start, stop)
        ]
    else:
        records = _load_jsonl(source.path, start, stop, bytes_per_token)
    log("loader", f"dp {dp_rank}/tp {tp_rank} loaded samples [{start}, {stop})", level="DEBUG")
    return records


def _load_jsonl(path: Path, start: int, stop: int, bytes_per_token: int) -> List[SampleRecord]:
    records: List[SampleRecord] = []
    index = 0
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                if start <= index < stop:
                    records.append(_parse_line(path, line_number, line, bytes_per_token))
                index += 1
                if index >= stop:
                    break
    except OSError as e:
        raise DataIoError(f"Cannot read dataset {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataIoError(f"Dataset {path} is not UTF-8: {e}") from e
    if len(records) != stop - start:
        raise DataIoError(f"Dataset {path} has fewer than {stop} samples")
    return records


def _parse_line(path: Path, line_number: int, line: str, bytes_per_token: int) -> SampleRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataParseError(str(path), line_number, f"invalid JSON: {e.msg}") from e
    if not isinstance(obj, dict) or set(obj) != {"id", "prompt"}:
        raise DataParseError(str(path), line_number, "expected exactly the keys 'id' and 'prompt'")
    sample_id, prompt = obj["id"], obj["prompt"]
    if isinstance(sample_id, bool) or not isinstance(sample_id, int) or not 0 <= sample_id < 2**64:
        raise DataParseError(str(path), line_number, "'id' must be an unsigned 64-bit integer")
    if not isinstance(prompt, str):
        raise DataParseError(str(path), line_number, "'prompt' must be a string")
    data = prompt.encode("utf-8")
    return SampleRecord(
        sample_id=sample_id,
        prompt=data,
        prompt_tokens=len(data) // bytes_per_token,
        meta={"source": path.name},
    )


class DistributedDataloader:
    """Serves one DP group's batches from its shard, wrapping at the end of the shard."""

    def __init__(
        self,
        records: List[SampleRecord],
        layout: ParallelLayout,
        dp_rank: int,
        seed: int = 0,
        shuffle: bool = False,
    ):
        self.records = records
        self.layout = layout
        self.dp_rank = dp_rank
        self.seed = seed
        self.shuffle = shuffle
        self._epoch_orders: Dict[int, List[int]] = {}

    @classmethod
    def from_source(
        cls,
        source: DatasetConfig,
        layout: ParallelLayout,
        rank: int,
        seed: int,
        bytes_per_token: int,
    ) -> "DistributedDataloader":
        dp_rank, tp_rank = layout.dp_rank(rank), layout.tp_rank(rank)
        shard = shard_dataset(dataset_size(source), layout)[dp_rank]
        records = load_shard(source, shard, dp_rank, tp_rank, seed, bytes_per_token)
        return cls(records, layout, dp_rank, seed=seed, shuffle=source.shuffle)

    def _order(self, epoch: int) -> List[int]:
        if not self.shuffle:
            return list(range(len(self.records)))
        if epoch not in self._epoch_orders:
            # A batch spans at most two consecutive epochs.
            self._epoch_orders = {e: order for e, order in self._epoch_orders.items() if e == epoch - 1}
            self._epoch_orders[epoch] = keyed_permutation(self.seed, len(self.records), "shuffle", self.dp_rank, epoch)
        return self._epoch_orders[epoch]

    def next_batch(self, iteration: int, global_batch: int, stage_id: str = LOADER_STAGE) -> SampleBatch:
        """This group's G/d records for an iteration; a pure function of (seed, iteration).

        Raises:
            IndivisibleError: dp_size does not divide the global batch.
        """
        d = self.layout.dp_size
        if global_batch % d != 0:
            raise IndivisibleError(global_batch, d, what="global batch")
        per_group = global_batch // d
        shard_len = len(self.records)
        if per_group > shard_len:
            raise ConfigError(f"Shard of {shard_len} samples cannot supply batches of {per_group}")

        picked: List[SampleRecord] = []
        for k in range(per_group):
            position = iteration * per_group + k
            epoch, offset = divmod(position, shard_len)
            picked.append(self.records[self._order(epoch)[offset]])
        return SampleBatch(records=picked, stage_id=stage_id, iteration=iteration)
