"""Deterministic synthetic stage functions standing in for inference and training engines.

Every value is derived from (run seed, sample_id, rollout index) through keyed
hashing, so a record gets identical results no matter which worker, backend
or controller mode processes it.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..dag.models import NodeRole, NodeSpec, NodeType, default_func_key
from ..data.models import Rollout, SampleBatch, SampleRecord
from ..errors import FrozenRoleError, MissingChannel, MissingRollouts
from .hashing import keyed_bytes, keyed_int, keyed_range, keyed_uniform
from .registry import FunctionRegistry

TRAINABLE_ROLES = (NodeRole.ACTOR, NodeRole.CRITIC)


class TokenDistribution(BaseModel):
    """Response length distribution: constant `low`, or uniform on [low, high]."""

    kind: Literal["constant", "uniform"] = "constant"
    low: int = Field(default=128, ge=0)
    high: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_range(self) -> "TokenDistribution":
        if self.kind == "uniform" and (self.high is None or self.high < self.low):
            raise ValueError("Uniform token distribution needs high >= low")
        return self

    def draw(self, seed: int, sample_id: int, rollout_index: int) -> int:
        if self.kind == "constant":
            return self.low
        return keyed_int(seed, self.low, self.high, "tokens", sample_id, rollout_index)


class GenerationParams(BaseModel):
    rollouts_per_prompt: int = Field(default=1, ge=1)
    response_tokens: TokenDistribution = Field(default_factory=TokenDistribution)
    bytes_per_token: int = Field(default=4, gt=0)


class CostTerm(BaseModel):
    """Busy time of a node: fixed_s + per_token_s * tokens."""

    fixed_s: float = Field(default=0.0, ge=0)
    per_token_s: float = Field(default=0.0, ge=0)

    def seconds(self, tokens: int) -> float:
        return self.fixed_s + self.per_token_s * tokens


def _default_costs() -> Dict[str, CostTerm]:
    return {
        "generate": CostTerm(per_token_s=2e-6),
        NodeType.MODEL_INFERENCE.value: CostTerm(per_token_s=5e-7),
        NodeType.MODEL_TRAIN.value: CostTerm(per_token_s=1e-6),
    }


class CostModel(BaseModel):
    """Cost terms keyed by func key first, then by node type; missing entries cost nothing."""

    terms: Dict[str, CostTerm] = Field(default_factory=_default_costs)

    def term_for(self, node: NodeSpec) -> CostTerm:
        return self.terms.get(node.func_key) or self.terms.get(node.node_type.value) or CostTerm()

    def charge(self, node: NodeSpec, tokens: int) -> float:
        seconds = self.term_for(node).seconds(tokens)
        if seconds > 0:
            time.sleep(seconds)
        return seconds


@dataclass
class NodeContext:
    """What a node function may read besides its batch."""

    node: NodeSpec
    seed: int
    params: GenerationParams = field(default_factory=GenerationParams)
    cost: CostModel = field(default_factory=CostModel)
    advantage_eps: float = 1e-6
    model_versions: Dict[str, int] = field(default_factory=dict)


def _restamp(batch: SampleBatch, records: List[SampleRecord], ctx: NodeContext) -> SampleBatch:
    return SampleBatch(records=records, stage_id=ctx.node.node_id, iteration=batch.iteration)


def _with_channel(rollout: Rollout, name: str, value: float) -> Rollout:
    return rollout.model_copy(update={"channels": {**rollout.channels, name: float(value)}})


def _channel(rollout: Rollout, name: str, sample_id: int) -> float:
    try:
        return rollout.channels[name]
    except KeyError:
        raise MissingChannel(name, sample_id) from None


def _require_rollouts(record: SampleRecord, node_id: str) -> None:
    if not record.group:
        raise MissingRollouts(f"Sample {record.sample_id} reached '{node_id}' without rollouts")


def fn_generate(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    """Give every record n rollouts whose payload size is token_count * bytes_per_token."""
    params = ctx.params
    records = []
    for record in batch.records:
        group = []
        for index in range(params.rollouts_per_prompt):
            tokens = params.response_tokens.draw(ctx.seed, record.sample_id, index)
            payload = keyed_bytes(ctx.seed, tokens * params.bytes_per_token, "response", record.sample_id, index)
            group.append(Rollout(payload=payload, token_count=tokens))
        records.append(record.model_copy(update={"group": group}))
    out = _restamp(batch, records, ctx)
    ctx.cost.charge(ctx.node, out.token_count)
    return out


def _score(channel: str, low: float, high: float):
    def score(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
        records = []
        for record in batch.records:
            _require_rollouts(record, ctx.node.node_id)
            group = [
                _with_channel(rollout, channel, keyed_range(ctx.seed, low, high, channel, record.sample_id, index))
                for index, rollout in enumerate(record.group)
            ]
            records.append(record.model_copy(update={"group": group}))
        out = _restamp(batch, records, ctx)
        ctx.cost.charge(ctx.node, out.token_count)
        return out

    score.__name__ = f"fn_{channel}"
    score.__doc__ = f"Fill the '{channel}' channel with keyed scalars in [{low}, {high})."
    return score


fn_ref_logprob = _score("ref_logprob", -1.0, 1.0)
fn_value = _score("value", -1.0, 1.0)


def fn_reward(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    """Fill the 'reward' channel with keyed scalars in [0, 1)."""
    records = []
    for record in batch.records:
        _require_rollouts(record, ctx.node.node_id)
        group = [
            _with_channel(rollout, "reward", keyed_uniform(ctx.seed, "reward", record.sample_id, index))
            for index, rollout in enumerate(record.group)
        ]
        records.append(record.model_copy(update={"group": group}))
    out = _restamp(batch, records, ctx)
    ctx.cost.charge(ctx.node, out.token_count)
    return out


def group_advantages(rewards: List[float], eps: float) -> List[float]:
    """(r - mean) / (std + eps) with population std; zero-variance groups get 0."""
    values = np.asarray(rewards, dtype=np.float64)
    centered = values - values.mean()
    std = float(values.std())
    if std == 0.0:
        return [0.0] * len(rewards)
    return [float(v) for v in centered / (std + eps)]


def fn_group_advantage(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    records = []
    for record in batch.records:
        _require_rollouts(record, ctx.node.node_id)
        rewards = [_channel(rollout, "reward", record.sample_id) for rollout in record.group]
        advantages = group_advantages(rewards, ctx.advantage_eps)
        group = [_with_channel(rollout, "advantage", adv) for rollout, adv in zip(record.group, advantages)]
        records.append(record.model_copy(update={"group": group}))
    out = _restamp(batch, records, ctx)
    ctx.cost.charge(ctx.node, out.token_count)
    return out


def fn_ppo_advantage(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    """advantage = reward - value, a one-step baseline."""
    records = []
    for record in batch.records:
        _require_rollouts(record, ctx.node.node_id)
        group = [
            _with_channel(
                rollout,
                "advantage",
                _channel(rollout, "reward", record.sample_id) - _channel(rollout, "value", record.sample_id),
            )
            for rollout in record.group
        ]
        records.append(record.model_copy(update={"group": group}))
    out = _restamp(batch, records, ctx)
    ctx.cost.charge(ctx.node, out.token_count)
    return out


_TRAIN_INPUTS = {NodeRole.ACTOR: "advantage", NodeRole.CRITIC: "reward"}


def fn_train(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    """Consume a batch and bump the role's model version; only ACTOR and CRITIC train."""
    role = ctx.node.role
    if role not in TRAINABLE_ROLES:
        raise FrozenRoleError(f"Role {role.value} is frozen; node '{ctx.node.node_id}' cannot train")
    needed = _TRAIN_INPUTS[role]
    for record in batch.records:
        _require_rollouts(record, ctx.node.node_id)
        for rollout in record.group:
            _channel(rollout, needed, record.sample_id)
    ctx.cost.charge(ctx.node, batch.token_count)
    ctx.model_versions[role.value] = ctx.model_versions.get(role.value, 0) + 1
    return _restamp(batch, list(batch.records), ctx)


def fn_identity(batch: SampleBatch, ctx: NodeContext) -> SampleBatch:
    return _restamp(batch, list(batch.records), ctx)


def builtin_registry() -> FunctionRegistry:
    """Registry with every built-in func tag plus the ROLE:TYPE defaults."""
    registry = FunctionRegistry(
        {
            "generate": fn_generate,
            "ref_logprob": fn_ref_logprob,
            "value": fn_value,
            "reward": fn_reward,
            "group_advantage": fn_group_advantage,
            "ppo_advantage": fn_ppo_advantage,
            "actor_train": fn_train,
            "critic_train": fn_train,
            "identity": fn_identity,
        }
    )
    defaults = {
        (NodeRole.ACTOR, NodeType.MODEL_INFERENCE): fn_generate,
        (NodeRole.REFERENCE, NodeType.MODEL_INFERENCE): fn_ref_logprob,
        (NodeRole.CRITIC, NodeType.MODEL_INFERENCE): fn_value,
        (NodeRole.REWARD, NodeType.MODEL_INFERENCE): fn_reward,
        (NodeRole.REWARD, NodeType.COMPUTE): fn_reward,
        (NodeRole.NONE, NodeType.COMPUTE): fn_identity,
    }
    for (role, node_type), function in defaults.items():
        registry.register(default_func_key(role, node_type), function)
    for role in NodeRole:
        if role != NodeRole.NONE:
            registry.register(default_func_key(role, NodeType.MODEL_TRAIN), fn_train)
    return registry
