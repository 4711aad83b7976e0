"""Per-record digests of node outputs, compared across modes and against the oracle."""

import hashlib
from typing import Dict, List, Optional, Tuple

from ..data.models import Rollout, SampleBatch

RolloutDigest = Tuple[int, str, Tuple[Tuple[str, float], ...]]
TraceKey = Tuple[int, str]  # (iteration, node_id)


def digest_rollout(rollout: Rollout) -> RolloutDigest:
    payload = hashlib.blake2b(rollout.payload, digest_size=8).hexdigest()
    return rollout.token_count, payload, tuple(sorted(rollout.channels.items()))


class RecordTrace:
    """sample_id -> rollout digests for every (iteration, node) a rank recorded."""

    def __init__(self) -> None:
        self.entries: Dict[TraceKey, Dict[int, List[RolloutDigest]]] = {}
        self.duplicates: List[Tuple[int, str, int]] = []

    def record(self, iteration: int, node_id: str, batch: SampleBatch) -> None:
        slot = self.entries.setdefault((iteration, node_id), {})
        for record in batch.records:
            if record.sample_id in slot:
                self.duplicates.append((iteration, node_id, record.sample_id))
            slot[record.sample_id] = [digest_rollout(rollout) for rollout in record.group]

    def merge(self, other: "RecordTrace") -> "RecordTrace":
        """Union of two traces; a sample seen by both is kept once and flagged as a duplicate."""
        merged = RecordTrace()
        for trace in (self, other):
            merged.duplicates.extend(trace.duplicates)
            for key, samples in trace.entries.items():
                slot = merged.entries.setdefault(key, {})
                for sample_id, digests in samples.items():
                    if sample_id in slot:
                        merged.duplicates.append((key[0], key[1], sample_id))
                    slot[sample_id] = digests
        return merged

    def keys(self) -> List[TraceKey]:
        return sorted(self.entries)

    def samples(self, iteration: int, node_id: str) -> Dict[int, List[RolloutDigest]]:
        return self.entries.get((iteration, node_id), {})


class TraceDiff:
    """Differences between two traces, keyed by (iteration, node, sample_id)."""

    def __init__(self, left: RecordTrace, right: RecordTrace, limit: int = 10):
        self.missing_keys: List[TraceKey] = sorted(set(left.entries) ^ set(right.entries))
        self.mismatches: List[Tuple[int, str, int]] = []
        self.compared = 0
        for key in sorted(set(left.entries) & set(right.entries)):
            a, b = left.entries[key], right.entries[key]
            for sample_id in sorted(set(a) | set(b)):
                self.compared += 1
                if a.get(sample_id) != b.get(sample_id):
                    self.mismatches.append((key[0], key[1], sample_id))
        self.duplicates = left.duplicates + right.duplicates
        self.examples = self.mismatches[:limit]

    @property
    def equal(self) -> bool:
        return not (self.missing_keys or self.mismatches or self.duplicates)

    def describe(self) -> Optional[str]:
        if self.equal:
            return None
        parts = []
        if self.missing_keys:
            parts.append(f"{len(self.missing_keys)} (iteration, node) keys on one side only")
        if self.mismatches:
            iteration, node_id, sample_id = self.mismatches[0]
            parts.append(
                f"{len(self.mismatches)} differing records, first: sample {sample_id} "
                f"at '{node_id}' iteration {iteration}"
            )
        if self.duplicates:
            parts.append(f"{len(self.duplicates)} records seen more than once")
        return "; ".join(parts)
