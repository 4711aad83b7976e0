"""Workflow graph description, validation, presets and planning."""

from .models import DagGraph, IssueCode, NodeRole, NodeSpec, NodeType, ValidationIssue, ValidationReport
from .parser import dump_dag_config, load_dag_file, parse_dag_config
from .planner import (
    ChainGroup,
    TaskChain,
    WorkerPlan,
    assign_chains,
    compute_depths,
    resolve_layouts,
    serialize_graph,
)
from .presets import Algorithm, preset_dag
from .validator import validate_dag

__all__ = [
    "Algorithm",
    "ChainGroup",
    "DagGraph",
    "IssueCode",
    "NodeRole",
    "NodeSpec",
    "NodeType",
    "TaskChain",
    "ValidationIssue",
    "ValidationReport",
    "WorkerPlan",
    "assign_chains",
    "compute_depths",
    "dump_dag_config",
    "load_dag_file",
    "parse_dag_config",
    "preset_dag",
    "resolve_layouts",
    "serialize_graph",
    "validate_dag",
]
