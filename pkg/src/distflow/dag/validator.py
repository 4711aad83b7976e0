"""Structural validation of workflow graphs."""

from typing import Dict, List, Set

from .models import DagGraph, IssueCode, NodeRole, NodeType, ValidationIssue, ValidationReport


def validate_dag(graph: DagGraph) -> ValidationReport:
    """Report every structural issue in the graph without raising or mutating it."""
    issues: List[ValidationIssue] = []

    if not graph.nodes:
        issues.append(ValidationIssue(code=IssueCode.EMPTY, message="Graph has no nodes"))
        return ValidationReport(issues=issues)

    seen: Set[str] = set()
    for node in graph.nodes:
        if node.node_id in seen:
            issues.append(ValidationIssue(
                node_id=node.node_id,
                code=IssueCode.DUP_ID,
                message=f"Node id '{node.node_id}' is declared more than once",
            ))
        seen.add(node.node_id)

    for node in graph.nodes:
        for dep in node.deps:
            if dep not in seen:
                issues.append(ValidationIssue(
                    node_id=node.node_id,
                    code=IssueCode.DANGLING_DEP,
                    message=f"Node '{node.node_id}' depends on undeclared node '{dep}'",
                    node_ids=[dep],
                ))

    for node in graph.nodes:
        if node.role == NodeRole.NONE and node.node_type != NodeType.COMPUTE:
            issues.append(ValidationIssue(
                node_id=node.node_id,
                code=IssueCode.NONE_ROLE,
                message=f"Node '{node.node_id}' has role NONE but type {node.node_type.value}",
            ))

    for cycle in find_cycles(graph):
        issues.append(ValidationIssue(
            node_id=cycle[0],
            code=IssueCode.CYCLE,
            message="Cycle through " + " -> ".join(cycle + [cycle[0]]),
            node_ids=cycle,
        ))

    if not graph.roots():
        issues.append(ValidationIssue(code=IssueCode.NO_ROOT, message="Graph has no root node"))

    return ValidationReport(issues=issues)


def find_cycles(graph: DagGraph) -> List[List[str]]:
    """Find cycles with an iterative three-colour DFS; each cycle is reported once."""
    adjacency: Dict[str, List[str]] = {}
    for node in graph.nodes:
        adjacency.setdefault(node.node_id, [])
        adjacency[node.node_id].extend(dep for dep in node.deps)

    white, grey, black = 0, 1, 2
    colour = {node_id: white for node_id in adjacency}
    cycles: List[List[str]] = []
    reported: Set[frozenset] = set()

    for start in adjacency:
        if colour[start] != white:
            continue
        path: List[str] = [start]
        iterators = [iter(adjacency[start])]
        colour[start] = grey
        while iterators:
            advanced = False
            for dep in iterators[-1]:
                if dep not in colour:
                    continue
                if colour[dep] == grey:
                    cycle = path[path.index(dep):]
                    key = frozenset(cycle)
                    if key not in reported:
                        reported.add(key)
                        cycles.append(list(reversed(cycle)))
                elif colour[dep] == white:
                    colour[dep] = grey
                    path.append(dep)
                    iterators.append(iter(adjacency[dep]))
                    advanced = True
                    break
            if not advanced:
                colour[path.pop()] = black
                iterators.pop()

    return cycles
