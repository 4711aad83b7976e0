"""Built-in PPO and GRPO workflow graphs."""

from enum import Enum

from .models import DagGraph, NodeRole, NodeSpec, NodeType


class Algorithm(str, Enum):
    """Preset algorithms."""
    PPO = "PPO"
    GRPO = "GRPO"


def _node(node_id: str, role: NodeRole, node_type: NodeType, func: str, *deps: str) -> NodeSpec:
    return NodeSpec(node_id=node_id, role=role, node_type=node_type, func_tag=func, deps=tuple(deps))


def preset_dag(algorithm: Algorithm) -> DagGraph:
    """Return the preset graph for an algorithm; every node carries a built-in func tag."""
    algorithm = Algorithm(algorithm)
    if algorithm == Algorithm.PPO:
        nodes = (
            _node("actor_generate", NodeRole.ACTOR, NodeType.MODEL_INFERENCE, "generate"),
            _node("ref_inference", NodeRole.REFERENCE, NodeType.MODEL_INFERENCE, "ref_logprob", "actor_generate"),
            _node("critic_inference", NodeRole.CRITIC, NodeType.MODEL_INFERENCE, "value", "actor_generate"),
            _node("reward_compute", NodeRole.REWARD, NodeType.COMPUTE, "reward", "actor_generate"),
            _node(
                "advantage_compute", NodeRole.NONE, NodeType.COMPUTE, "ppo_advantage",
                "ref_inference", "critic_inference", "reward_compute",
            ),
            _node("actor_train", NodeRole.ACTOR, NodeType.MODEL_TRAIN, "actor_train", "advantage_compute"),
            _node("critic_train", NodeRole.CRITIC, NodeType.MODEL_TRAIN, "critic_train", "advantage_compute"),
        )
        return DagGraph(name="ppo", nodes=nodes)

    nodes = (
        _node("actor_generate", NodeRole.ACTOR, NodeType.MODEL_INFERENCE, "generate"),
        _node("ref_inference", NodeRole.REFERENCE, NodeType.MODEL_INFERENCE, "ref_logprob", "actor_generate"),
        _node("reward_compute", NodeRole.REWARD, NodeType.COMPUTE, "reward", "actor_generate"),
        _node(
            "group_advantage_compute", NodeRole.NONE, NodeType.COMPUTE, "group_advantage",
            "ref_inference", "reward_compute",
        ),
        _node("actor_train", NodeRole.ACTOR, NodeType.MODEL_TRAIN, "actor_train", "group_advantage_compute"),
    )
    return DagGraph(name="grpo", nodes=nodes)
