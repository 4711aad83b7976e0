"""Function registry: dispatch keys to node functions."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional

from ..dag.models import NodeSpec
from ..errors import DuplicateRegistration, UnboundNode

NodeFunction = Callable[["SampleBatch", "NodeContext"], "SampleBatch"]  # noqa: F821


class FunctionRegistry:
    """Maps a func tag, or a 'ROLE:TYPE' default key, to exactly one function."""

    def __init__(self, functions: Optional[Dict[str, NodeFunction]] = None):
        self._functions: Dict[str, NodeFunction] = {}
        for key, function in (functions or {}).items():
            self.register(key, function)

    def register(self, key: str, function: NodeFunction) -> None:
        """Register a function; a second registration of the same key is rejected."""
        if key in self._functions:
            raise DuplicateRegistration(f"Function key '{key}' is already registered")
        self._functions[key] = function

    def resolve(self, node: NodeSpec) -> NodeFunction:
        key = node.func_key
        try:
            return self._functions[key]
        except KeyError:
            raise UnboundNode(node.node_id, key) from None

    def copy(self) -> "FunctionRegistry":
        return FunctionRegistry(dict(self._functions))

    def keys(self) -> List[str]:
        return sorted(self._functions)

    def __contains__(self, key: str) -> bool:
        return key in self._functions

    def __iter__(self) -> Iterator[str]:
        return iter(self.keys())

    def __len__(self) -> int:
        return len(self._functions)


@dataclass
class BoundNode:
    """A chain node with its resolved function."""

    node: NodeSpec
    key: str
    function: NodeFunction = field(repr=False)
