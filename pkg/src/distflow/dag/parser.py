"""Parsing and emitting DAG config documents."""

import json
from pathlib import Path
from typing import Any, Dict, List, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import DagSyntaxError, SchemaError
from .models import DagGraph, NodeSpec


class _DagDocument(BaseModel):
    """Top-level shape of the JSON document; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    name: str
    nodes: List[NodeSpec] = Field(default_factory=list)


def parse_dag_config(document: Union[str, bytes]) -> DagGraph:
    """Parse a JSON DAG document into a DagGraph, keeping declaration order.

    Raises:
        DagSyntaxError: the document is not valid JSON.
        SchemaError: missing or unknown fields, bad enum values, no nodes,
            or a dependency on an undeclared node.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DagSyntaxError(f"DAG document is not UTF-8: {e}") from e

    try:
        raw = json.loads(document)
    except json.JSONDecodeError as e:
        raise DagSyntaxError(f"Malformed DAG document at line {e.lineno} column {e.colno}: {e.msg}") from e

    if not isinstance(raw, dict):
        raise SchemaError("DAG document must be a JSON object")

    try:
        parsed = _DagDocument.model_validate(raw)
    except ValidationError as e:
        raise SchemaError(_describe_validation_error(e)) from e

    if not parsed.nodes:
        raise SchemaError("DAG document declares no nodes")

    declared = {node.node_id for node in parsed.nodes}
    for node in parsed.nodes:
        for dep in node.deps:
            if dep not in declared:
                raise SchemaError(f"Node '{node.node_id}' depends on undeclared node '{dep}'")

    return DagGraph(name=parsed.name, nodes=tuple(parsed.nodes))


def load_dag_file(path: Path) -> DagGraph:
    """Read and parse a DAG document from disk."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise SchemaError(f"Cannot read DAG file {path}: {e}") from e
    return parse_dag_config(data)


def dag_to_document(graph: DagGraph) -> Dict[str, Any]:
    """Convert a graph back to the document structure."""
    nodes = []
    for node in graph.nodes:
        entry: Dict[str, Any] = {
            "id": node.node_id,
            "role": node.role.value,
            "type": node.node_type.value,
        }
        if node.func_tag is not None:
            entry["func"] = node.func_tag
        entry["deps"] = list(node.deps)
        nodes.append(entry)
    return {"name": graph.name, "nodes": nodes}


def dump_dag_config(graph: DagGraph) -> str:
    """Emit the graph as a JSON document that parse_dag_config accepts."""
    return json.dumps(dag_to_document(graph), indent=2)


def _describe_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        parts.append(f"{location}: {item['msg']}")
    return "Invalid DAG document: " + "; ".join(parts)
