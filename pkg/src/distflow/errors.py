"""Exception hierarchy for DistFlow-Sim."""

from typing import Iterable, List, Optional


class DistFlowError(Exception):
    """Base class for every error raised by DistFlow-Sim."""


class ConfigError(DistFlowError, ValueError):
    """Invalid run configuration detected before launch."""


# DAG description and planning


class DagSyntaxError(DistFlowError, ValueError):
    """The DAG document is not well-formed JSON."""


class SchemaError(DistFlowError, ValueError):
    """The DAG document does not match the expected schema."""


class CycleError(DistFlowError, ValueError):
    """The graph contains a cycle."""

    def __init__(self, node_ids: Iterable[str]):
        self.node_ids: List[str] = list(node_ids)
        super().__init__(f"Graph contains a cycle through: {', '.join(self.node_ids)}")


class LayoutError(DistFlowError, ValueError):
    """A stage's parallel layout does not fit the cluster topology."""


class CoverageError(DistFlowError, ValueError):
    """Chain groups do not cover every worker rank exactly once."""


# Transport


class TransportError(DistFlowError, RuntimeError):
    """Base class for message fabric failures."""


class BindError(TransportError):
    """A listening socket could not be bound."""


class HandshakeError(TransportError):
    """A peer sent an invalid or mismatching handshake."""


class HandshakeTimeout(HandshakeError):
    """Not every peer connected before the handshake deadline."""


class PeerClosed(TransportError):
    """The peer endpoint (or the whole fabric) was closed."""


class FrameTooLarge(TransportError):
    """A payload needs more chunks than the frame header can express."""


class RecvTimeout(TransportError, TimeoutError):
    """No matching envelope arrived within the timeout."""


# Data plane


class IndivisibleError(DistFlowError, ValueError):
    """A size is not divisible by the requested number of parts."""

    def __init__(self, total: int, parts: int, what: str = "size"):
        self.total = total
        self.parts = parts
        super().__init__(f"{what} {total} is not divisible by {parts}")


class DataIoError(DistFlowError, OSError):
    """The dataset source could not be read."""


class DataParseError(DistFlowError, ValueError):
    """A dataset line could not be parsed."""

    def __init__(self, path: str, line_number: int, reason: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {reason}")


class StaleIteration(DistFlowError, ValueError):
    """A put targeted an iteration the store has already retired."""


class NotReady(DistFlowError, RuntimeError):
    """Collection or redistribution for a stage has not completed."""


class UnknownStage(DistFlowError, KeyError):
    """The stage id has no layout registered with the store."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown stage"


# Worker runtime


class UnboundNode(DistFlowError, LookupError):
    """A chain node has no registered function."""

    def __init__(self, node_id: str, key: str):
        self.node_id = node_id
        self.key = key
        super().__init__(f"Node '{node_id}' has no function registered under '{key}'")


class DuplicateRegistration(DistFlowError, ValueError):
    """A function key is registered twice."""


class FunctionError(DistFlowError, RuntimeError):
    """A bound node function raised."""

    def __init__(self, node_id: str, cause: BaseException):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f"Node '{node_id}' failed: {cause}")


class MissingRollouts(DistFlowError, ValueError):
    """A record reached a scoring node before generation ran."""


class MissingChannel(DistFlowError, ValueError):
    """A rollout lacks a scalar channel the node needs."""

    def __init__(self, channel: str, sample_id: Optional[int] = None):
        self.channel = channel
        self.sample_id = sample_id
        where = f" on sample {sample_id}" if sample_id is not None else ""
        super().__init__(f"Missing channel '{channel}'{where}")


class FrozenRoleError(DistFlowError, ValueError):
    """Training was requested for a role whose weights stay frozen."""


class MetricsTimeout(DistFlowError, TimeoutError):
    """Some ranks did not report metrics in time."""

    def __init__(self, missing_ranks: Iterable[int]):
        self.missing_ranks = sorted(missing_ranks)
        super().__init__(f"Metrics missing from ranks {self.missing_ranks}")


class WorkerFailure(DistFlowError, RuntimeError):
    """A worker (or the controller) failed; names the rank and stage."""

    def __init__(self, rank: int, stage: Optional[str], cause: str):
        self.rank = rank
        self.stage = stage
        self.cause = cause
        where = f" in stage '{stage}'" if stage else ""
        super().__init__(f"rank {rank} failed{where}: {cause}")


# Central baseline


class CapacityExceeded(DistFlowError, RuntimeError):
    """The controller staging area exceeded its byte limit."""

    def __init__(self, held_bytes: int, limit: int):
        self.held_bytes = held_bytes
        self.limit = limit
        super().__init__(f"Controller staging area holds {held_bytes} bytes, limit is {limit}")


class CollectTimeout(DistFlowError, TimeoutError):
    """The controller did not receive every stage output in time."""

    def __init__(self, missing_ranks: Iterable[int]):
        self.missing_ranks = sorted(missing_ranks)
        super().__init__(f"Controller collect missing ranks {self.missing_ranks}")
