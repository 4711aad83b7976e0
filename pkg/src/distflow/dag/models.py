"""Pydantic models for the DAG workflow description."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class NodeRole(str, Enum):
    """Model role a node belongs to."""
    ACTOR = "ACTOR"
    CRITIC = "CRITIC"
    REWARD = "REWARD"
    REFERENCE = "REFERENCE"
    NONE = "NONE"


class NodeType(str, Enum):
    """Kind of computation a node performs."""
    MODEL_INFERENCE = "MODEL_INFERENCE"
    MODEL_TRAIN = "MODEL_TRAIN"
    COMPUTE = "COMPUTE"


class NodeSpec(BaseModel):
    """One node of the workflow graph."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    node_id: str = Field(alias="id", min_length=1)
    role: NodeRole
    node_type: NodeType = Field(alias="type")
    func_tag: Optional[str] = Field(default=None, alias="func")
    deps: Tuple[str, ...] = Field(default=())

    @property
    def func_key(self) -> str:
        """Dispatch key: the func tag if present, else the (role, type) pair."""
        return self.func_tag or default_func_key(self.role, self.node_type)

    @property
    def is_root(self) -> bool:
        return not self.deps


def default_func_key(role: NodeRole, node_type: NodeType) -> str:
    """Registry key used when a node has no func tag."""
    return f"{role.value}:{node_type.value}"


class DagGraph(BaseModel):
    """A named workflow graph; node order is the declaration order."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    nodes: Tuple[NodeSpec, ...]

    @property
    def node_ids(self) -> List[str]:
        return [node.node_id for node in self.nodes]

    def node_map(self) -> Dict[str, NodeSpec]:
        """Map node id to node; later duplicates do not overwrite the first declaration."""
        result: Dict[str, NodeSpec] = {}
        for node in self.nodes:
            result.setdefault(node.node_id, node)
        return result

    def roots(self) -> List[str]:
        return [node.node_id for node in self.nodes if node.is_root]

    def sinks(self) -> List[str]:
        consumed = {dep for node in self.nodes for dep in node.deps}
        return [node.node_id for node in self.nodes if node.node_id not in consumed]


class IssueCode(str, Enum):
    """Validation issue categories."""
    EMPTY = "EMPTY"
    DUP_ID = "DUP_ID"
    DANGLING_DEP = "DANGLING_DEP"
    CYCLE = "CYCLE"
    NO_ROOT = "NO_ROOT"
    NONE_ROLE = "NONE_ROLE"


class ValidationIssue(BaseModel):
    """A single problem found in a graph."""

    node_id: Optional[str] = None
    code: IssueCode
    message: str
    node_ids: List[str] = Field(default_factory=list)


class ValidationReport(BaseModel):
    """Result of validating a graph; ok exactly when there are no issues."""

    issues: List[ValidationIssue] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> List[IssueCode]:
        return [issue.code for issue in self.issues]
