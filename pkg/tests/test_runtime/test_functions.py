"""Tests for the built-in stage functions and keyed randomness."""

from unittest.mock import patch

import pytest

from distflow.dag.models import NodeRole, NodeSpec, NodeType
from distflow.data.models import Rollout, SampleBatch, SampleRecord
from distflow.errors import FrozenRoleError, MissingChannel, MissingRollouts
from distflow.runtime.functions import (
    CostModel,
    CostTerm,
    GenerationParams,
    NodeContext,
    TokenDistribution,
    builtin_registry,
    fn_generate,
    fn_group_advantage,
    fn_ppo_advantage,
    fn_ref_logprob,
    fn_reward,
    fn_train,
    fn_value,
    group_advantages,
)
from distflow.runtime.hashing import derive_key, keyed_int, keyed_permutation, keyed_uniform

FREE = CostModel(terms={})


def _ctx(node_id="n", role=NodeRole.ACTOR, node_type=NodeType.MODEL_INFERENCE, func=None, **kwargs):
    node = NodeSpec(node_id=node_id, role=role, node_type=node_type, func_tag=func)
    kwargs.setdefault("cost", FREE)
    return NodeContext(node=node, seed=kwargs.pop("seed", 11), **kwargs)


def _prompts(*ids, iteration=0):
    return SampleBatch(records=[SampleRecord(sample_id=i, prompt=b"p") for i in ids], stage_id="loader", iteration=iteration)


def _generated(*ids, rollouts=2):
    params = GenerationParams(rollouts_per_prompt=rollouts, response_tokens=TokenDistribution(kind="constant", low=5))
    return fn_generate(_prompts(*ids), _ctx("gen", params=params))


class TestHashing:
    """Test keyed randomness helpers."""

    def test_keys_are_stable(self):
        """Test that keys depend only on their inputs."""
        assert derive_key(1, "reward", 5, 0) == derive_key(1, "reward", 5, 0)
        assert derive_key(1, "reward", 5, 0) != derive_key(1, "reward", 5, 1)
        assert derive_key(1, "ab", "c") != derive_key(1, "a", "bc")

    def test_ranges(self):
        """Test the bounds of keyed scalars."""
        values = [keyed_uniform(3, "u", i) for i in range(200)]
        assert all(0.0 <= v < 1.0 for v in values)
        ints = {keyed_int(3, 2, 4, "i", i) for i in range(200)}
        assert ints == {2, 3, 4}

    def test_permutation(self):
        """Test that a keyed permutation is a permutation."""
        assert sorted(keyed_permutation(3, 50, "p")) == list(range(50))


class TestGenerate:
    """Test fn_generate functionality."""

    def test_group_size_and_payloads(self):
        """Test that every record gets n rollouts of token_count * bytes_per_token bytes."""
        params = GenerationParams(
            rollouts_per_prompt=3,
            response_tokens=TokenDistribution(kind="uniform", low=2, high=9),
            bytes_per_token=4,
        )
        out = fn_generate(_prompts(1, 2, 3), _ctx("gen", params=params))
        assert out.stage_id == "gen"
        for record in out.records:
            assert len(record.group) == 3
            for rollout in record.group:
                assert 2 <= rollout.token_count <= 9
                assert len(rollout.payload) == rollout.token_count * 4

    def test_keyed_on_sample_not_position(self):
        """Test that a record's rollouts do not depend on its batch neighbours."""
        alone = _generated(7)
        together = _generated(3, 7, 9)
        assert alone.records[0] == together.records[1]

    def test_charges_cost_per_token(self):
        """Test that generation sleeps fixed + per-token seconds."""
        cost = CostModel(terms={"generate": CostTerm(fixed_s=0.5, per_token_s=0.01)})
        params = GenerationParams(rollouts_per_prompt=2, response_tokens=TokenDistribution(low=10))
        with patch("distflow.runtime.functions.time.sleep") as sleep:
            fn_generate(_prompts(1), _ctx("gen", func="generate", params=params, cost=cost))
        sleep.assert_called_once()
        assert sleep.call_args[0][0] == pytest.approx(0.5 + 0.01 * 20)

    def test_cost_falls_back_to_node_type(self):
        """Test that cost terms are looked up by func key, then node type."""
        model = CostModel(terms={"MODEL_TRAIN": CostTerm(per_token_s=1.0)})
        train = NodeSpec(node_id="t", role=NodeRole.ACTOR, node_type=NodeType.MODEL_TRAIN, func_tag="actor_train")
        assert model.term_for(train).per_token_s == 1.0
        compute = NodeSpec(node_id="c", role=NodeRole.NONE, node_type=NodeType.COMPUTE)
        assert model.term_for(compute).seconds(100) == 0.0


class TestScoring:
    """Test the channel-filling functions."""

    def test_reward_in_unit_interval(self):
        """Test that rewards are in [0, 1) and keyed per rollout."""
        out = fn_reward(_generated(1, 2, rollouts=4), _ctx("reward", role=NodeRole.REWARD, node_type=NodeType.COMPUTE))
        rewards = [r.channels["reward"] for record in out.records for r in record.group]
        assert all(0.0 <= value < 1.0 for value in rewards)
        assert len(set(rewards)) == len(rewards)

    def test_ref_logprob_and_value(self):
        """Test that inference scores fill their channels in [-1, 1)."""
        batch = fn_ref_logprob(_generated(1), _ctx("ref", role=NodeRole.REFERENCE))
        batch = fn_value(batch, _ctx("critic", role=NodeRole.CRITIC))
        for rollout in batch.records[0].group:
            assert -1.0 <= rollout.channels["ref_logprob"] < 1.0
            assert -1.0 <= rollout.channels["value"] < 1.0

    def test_scoring_needs_rollouts(self):
        """Test that scoring raw prompts raises MissingRollouts."""
        with pytest.raises(MissingRollouts):
            fn_reward(_prompts(1), _ctx("reward", role=NodeRole.REWARD))


class TestAdvantages:
    """Test advantage computation."""

    def test_group_advantages(self):
        """Test the normalized advantages of a two-rollout group."""
        advantages = group_advantages([0.0, 1.0], eps=1e-6)
        assert advantages[0] == pytest.approx(-1.0, abs=1e-5)
        assert advantages[1] == pytest.approx(1.0, abs=1e-5)

    def test_zero_variance_group(self):
        """Test that a group with equal rewards gets zero advantages."""
        assert group_advantages([0.4, 0.4, 0.4], eps=1e-6) == [0.0, 0.0, 0.0]

    def test_advantages_sum_to_zero(self):
        """Test that normalized advantages are centered."""
        assert sum(group_advantages([0.1, 0.5, 0.2, 0.9], eps=1e-6)) == pytest.approx(0.0, abs=1e-9)

    def test_group_advantage_node(self):
        """Test that the group advantage node fills 'advantage' from 'reward'."""
        ctx = _ctx("adv", role=NodeRole.NONE, node_type=NodeType.COMPUTE)
        scored = fn_reward(_generated(1, rollouts=4), _ctx("reward", role=NodeRole.REWARD))
        out = fn_group_advantage(scored, ctx)
        group = out.records[0].group
        rewards = [r.channels["reward"] for r in group]
        assert [r.channels["advantage"] for r in group] == pytest.approx(group_advantages(rewards, 1e-6))

    def test_group_advantage_missing_reward(self):
        """Test that a missing reward channel is named in the error."""
        with pytest.raises(MissingChannel) as info:
            fn_group_advantage(_generated(4), _ctx("adv", role=NodeRole.NONE, node_type=NodeType.COMPUTE))
        assert info.value.channel == "reward"
        assert info.value.sample_id == 4

    def test_ppo_advantage(self):
        """Test that the PPO advantage is reward minus value."""
        record = SampleRecord(
            sample_id=1,
            group=[Rollout(payload=b"", token_count=1, channels={"reward": 0.75, "value": 0.25})],
        )
        out = fn_ppo_advantage(SampleBatch(records=[record]), _ctx("adv", role=NodeRole.NONE, node_type=NodeType.COMPUTE))
        assert out.records[0].group[0].channels["advantage"] == pytest.approx(0.5)

    def test_advantage_nodes_charge_cost(self):
        """Test that both advantage functions charge their node's cost term."""
        cost = CostModel(terms={"COMPUTE": CostTerm(fixed_s=0.25, per_token_s=0.5)})
        scored = fn_value(
            fn_reward(_generated(2, rollouts=2), _ctx("reward", role=NodeRole.REWARD)),
            _ctx("value", role=NodeRole.CRITIC),
        )
        for function in (fn_group_advantage, fn_ppo_advantage):
            ctx = _ctx("adv", role=NodeRole.NONE, node_type=NodeType.COMPUTE, cost=cost)
            with patch("distflow.runtime.functions.time.sleep") as sleep:
                out = function(scored, ctx)
            sleep.assert_called_once()
            assert sleep.call_args[0][0] == pytest.approx(0.25 + 0.5 * out.token_count)


class TestTrain:
    """Test fn_train functionality."""

    def test_bumps_model_version(self):
        """Test that each training step bumps the role's version."""
        versions = {}
        batch = fn_group_advantage(
            fn_reward(_generated(1), _ctx("reward", role=NodeRole.REWARD)),
            _ctx("adv", role=NodeRole.NONE, node_type=NodeType.COMPUTE),
        )
        ctx = _ctx("train", role=NodeRole.ACTOR, node_type=NodeType.MODEL_TRAIN, model_versions=versions)
        fn_train(batch, ctx)
        fn_train(batch, ctx)
        assert versions == {"ACTOR": 2}

    @pytest.mark.parametrize("role", [NodeRole.REFERENCE, NodeRole.REWARD])
    def test_frozen_roles(self, role):
        """Test that reference and reward models never train."""
        with pytest.raises(FrozenRoleError):
            fn_train(_generated(1), _ctx("train", role=role, node_type=NodeType.MODEL_TRAIN))

    def test_actor_needs_advantages(self):
        """Test that actor training without advantages raises MissingChannel."""
        with pytest.raises(MissingChannel):
            fn_train(_generated(1), _ctx("train", role=NodeRole.ACTOR, node_type=NodeType.MODEL_TRAIN))


class TestBuiltinRegistry:
    """Test builtin_registry functionality."""

    def test_func_tags_and_defaults(self):
        """Test that func tags and ROLE:TYPE defaults resolve."""
        registry = builtin_registry()
        assert "generate" in registry
        assert "ACTOR:MODEL_INFERENCE" in registry
        assert "CRITIC:MODEL_TRAIN" in registry
        node = NodeSpec(node_id="r", role=NodeRole.REWARD, node_type=NodeType.COMPUTE)
        assert registry.resolve(node) is fn_reward
