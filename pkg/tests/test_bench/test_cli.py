"""Tests for the command-line interface."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from distflow.cli import cli, parse_scales
from distflow.core.run_context import RunContext, RunPhase
from distflow.runtime.datapath import Mode

REPO_ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def run_file(make_config, temp_data_dir):
    """A small GRPO run file on disk."""
    path = temp_data_dir / "run.json"
    path.write_text(make_config(iterations=1).model_dump_json(), encoding="utf-8")
    return path


class TestHelpers:
    """Test CLI helper functions."""

    def test_parse_scales(self):
        """Test comma-separated scale parsing."""
        assert parse_scales(" 1x4, 2x4,,4x4 ") == ["1x4", "2x4", "4x4"]
        assert parse_scales("") == []


class TestValidateCommand:
    """Test the validate command."""

    def test_valid_dag(self, runner):
        """Test that the bundled DAG file validates."""
        result = runner.invoke(cli, ["validate", str(REPO_ROOT / "configs" / "dags" / "grpo_no_ref.json")])
        assert result.exit_code == 0
        assert "is valid (4 nodes)" in result.output

    def test_cycle_fails(self, runner, temp_data_dir):
        """Test that a cyclic DAG exits 1 and lists the issue."""
        path = temp_data_dir / "cycle.json"
        path.write_text(
            json.dumps(
                {
                    "name": "loop",
                    "nodes": [
                        {"id": "a", "role": "ACTOR", "type": "COMPUTE", "deps": ["b"]},
                        {"id": "b", "role": "ACTOR", "type": "COMPUTE", "deps": ["a"]},
                    ],
                }
            ),
            encoding="utf-8",
        )
        result = runner.invoke(cli, ["validate", str(path)])
        assert result.exit_code == 1
        assert "CYCLE" in result.output

    def test_unparseable_fails(self, runner, temp_data_dir):
        """Test that a malformed file exits 1."""
        path = temp_data_dir / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert runner.invoke(cli, ["validate", str(path)]).exit_code == 1


class TestPlanCommand:
    """Test the plan command."""

    def test_plan_written(self, runner, run_file, temp_data_dir):
        """Test that plan prints and writes the rank/layout dump."""
        out = temp_data_dir / "plan.json"
        result = runner.invoke(cli, ["plan", "--config", str(run_file), "--out", str(out)])
        assert result.exit_code == 0
        dump = json.loads(out.read_text(encoding="utf-8"))
        assert sorted(dump["ranks"]) == ["0", "1", "2", "3"]
        assert dump["layouts"]["actor_generate"] == {"dp_size": 4, "tp_size": 1}

    def test_missing_config(self, runner, temp_data_dir):
        """Test that a missing run file exits 1."""
        result = runner.invoke(cli, ["plan", "--config", str(temp_data_dir / "nope.json")])
        assert result.exit_code == 1
        assert "Plan failed" in result.output


class TestRunCommand:
    """Test the run, list and status commands."""

    def test_run_records_context(self, runner, run_file, temp_data_dir):
        """Test that run writes results and a completed run context."""
        out = temp_data_dir / "results.csv"
        result = runner.invoke(cli, ["run", "--config", str(run_file), "--mode", "central", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.exists()

        runs = RunContext.list_runs()
        assert len(runs) == 1
        assert runs[0].status.phase == RunPhase.COMPLETED
        assert runs[0].config["mode"] == Mode.CENTRAL.value

        listed = runner.invoke(cli, ["list"])
        assert listed.exit_code == 0
        assert "Showing 1 runs" in listed.output

        shown = runner.invoke(cli, ["status", runs[0].run_id])
        assert shown.exit_code == 0
        assert "completed" in shown.output

    def test_failed_run_exits_nonzero(self, runner, make_config, temp_data_dir):
        """Test that a run with a failed row exits 1."""
        path = temp_data_dir / "cap.json"
        config = make_config(iterations=1, mode=Mode.CENTRAL, controller_capacity_bytes=64)
        path.write_text(config.model_dump_json(), encoding="utf-8")
        result = runner.invoke(cli, ["run", "--config", str(path), "--out", str(temp_data_dir / "r.csv")])
        assert result.exit_code == 1
        assert RunContext.list_runs()[0].status.phase == RunPhase.FAILED

    def test_status_unknown_run(self, runner):
        """Test that an unknown run ID exits 1."""
        assert runner.invoke(cli, ["status", "no-such-run"]).exit_code == 1

    def test_list_empty(self, runner):
        """Test the empty run list message."""
        result = runner.invoke(cli, ["list"])
        assert result.exit_code == 0
        assert "No runs found" in result.output


class TestVerifyCommand:
    """Test the verify command."""

    def test_equal(self, runner, run_file):
        """Test that verify prints EQUAL and exits 0."""
        result = runner.invoke(cli, ["verify", "--config", str(run_file), "--iterations", "1"])
        assert result.exit_code == 0, result.output
        assert "EQUAL" in result.output

    def test_seed_override_exits_nonzero(self, runner, run_file):
        """Test that the negative control exits 1 with MISMATCH."""
        result = runner.invoke(cli, ["verify", "--config", str(run_file), "-n", "1", "--seed-override", "5"])
        assert result.exit_code == 1
        assert "MISMATCH" in result.output
