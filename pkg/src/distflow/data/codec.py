"""msgpack serialization of records and batches for the wire."""

from typing import Any, Dict, List, Sequence

import msgpack

from .models import Rollout, SampleBatch, SampleRecord


def _record_to_obj(record: SampleRecord) -> Dict[str, Any]:
    return {
        "id": record.sample_id,
        "prompt": record.prompt,
        "prompt_tokens": record.prompt_tokens,
        "group": [
            {"payload": rollout.payload, "tokens": rollout.token_count, "channels": dict(sorted(rollout.channels.items()))}
            for rollout in record.group
        ],
        "meta": dict(sorted(record.meta.items())),
    }


def _record_from_obj(obj: Dict[str, Any]) -> SampleRecord:
    return SampleRecord(
        sample_id=obj["id"],
        prompt=obj["prompt"],
        prompt_tokens=obj["prompt_tokens"],
        group=[
            Rollout(payload=item["payload"], token_count=item["tokens"], channels=item["channels"])
            for item in obj["group"]
        ],
        meta=obj["meta"],
    )


def encode_records(records: Sequence[SampleRecord]) -> bytes:
    return msgpack.packb([_record_to_obj(record) for record in records], use_bin_type=True)


def decode_records(data: bytes) -> List[SampleRecord]:
    return [_record_from_obj(obj) for obj in msgpack.unpackb(data, raw=False)]


def encode_batch(batch: SampleBatch) -> bytes:
    return msgpack.packb(
        {
            "stage": batch.stage_id,
            "iteration": batch.iteration,
            "records": [_record_to_obj(record) for record in batch.records],
        },
        use_bin_type=True,
    )


def decode_batch(data: bytes) -> SampleBatch:
    obj = msgpack.unpackb(data, raw=False)
    return SampleBatch(
        stage_id=obj["stage"],
        iteration=obj["iteration"],
        records=[_record_from_obj(item) for item in obj["records"]],
    )
