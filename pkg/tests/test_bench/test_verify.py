"""Tests for cross-mode verification and the single-process oracle."""

import pytest

from distflow.bench.oracle import run_oracle
from distflow.bench.verify import Verdict, verify
from distflow.dag.presets import Algorithm
from distflow.data.models import StageLayoutSpec


class TestOracle:
    """Test run_oracle functionality."""

    def test_whole_batch_per_iteration(self, make_config):
        """Test that the oracle runs every stage on the union of every group's loader batch."""
        result = run_oracle(make_config(), iterations=2)
        assert sorted(result.trace.samples(0, "actor_train")) == [16 * g + k for g in range(4) for k in range(4)]
        assert sorted(result.trace.samples(1, "actor_generate")) == [16 * g + k for g in range(4) for k in range(4, 8)]
        assert result.model_versions == {"ACTOR": 2}

    def test_ppo_trains_actor_and_critic(self, make_config):
        """Test that PPO bumps both trainable roles."""
        result = run_oracle(make_config(algorithm=Algorithm.PPO), iterations=3)
        assert result.model_versions == {"ACTOR": 3, "CRITIC": 3}


class TestVerify:
    """Test verify functionality."""

    def test_grpo_with_resharding_is_equal(self, make_config):
        """Test that both modes match the oracle on 2x2 with a TP generation stage."""
        config = make_config(
            num_nodes=2,
            workers_per_node=2,
            layouts={"actor_generate": StageLayoutSpec(tp_size=2)},
        )
        report = verify(config, iterations=2)
        assert report.verdict == Verdict.EQUAL, report.failures + [c.detail for c in report.checks]
        assert [(c.left, c.right) for c in report.checks] == [
            ("distributed", "oracle"),
            ("central", "oracle"),
            ("distributed", "central"),
        ]
        assert all(check.compared == 2 * 5 * 16 for check in report.checks)

    def test_ppo_is_equal(self, make_config):
        """Test PPO equivalence on 2x2."""
        report = verify(make_config(num_nodes=2, workers_per_node=2, algorithm=Algorithm.PPO), iterations=2)
        assert report.ok, report.failures + [c.detail for c in report.checks]

    @pytest.mark.parametrize("algorithm,stages", [(Algorithm.GRPO, 5), (Algorithm.PPO, 7)])
    def test_1x8_over_20_iterations(self, make_config, algorithm, stages):
        """Test that both modes match the oracle for 20 iterations on one node of eight workers."""
        config = make_config(
            num_nodes=1,
            workers_per_node=8,
            algorithm=algorithm,
            layouts={"actor_generate": StageLayoutSpec(tp_size=2)},
        )
        report = verify(config, iterations=20)
        assert report.verdict == Verdict.EQUAL, report.failures + [c.detail for c in report.checks]
        assert len(report.checks) == 3
        assert all(check.compared == 20 * stages * 16 for check in report.checks)

    def test_seed_override_is_a_mismatch(self, make_config):
        """Test that changing the central run's seed is detected."""
        report = verify(make_config(), iterations=1, seed_override=99)
        assert report.verdict == Verdict.MISMATCH
        by_pair = {(c.left, c.right): c for c in report.checks}
        assert by_pair[("distributed", "oracle")].equal
        assert not by_pair[("central", "oracle")].equal
        assert by_pair[("central", "oracle")].detail

    def test_failed_run_is_a_mismatch(self, make_config):
        """Test that a mode that cannot finish makes the verdict MISMATCH."""
        report = verify(make_config(controller_capacity_bytes=64), iterations=1)
        assert not report.ok
        assert report.failures[0].startswith("central:")
        assert [(c.left, c.right) for c in report.checks] == [("distributed", "oracle")]
