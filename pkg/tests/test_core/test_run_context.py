"""Tests for RunContext."""

from datetime import datetime, timedelta

import pytest

from distflow.core.run_context import RunContext, RunKind, RunPhase


class TestRunContext:
    """Test RunContext functionality."""

    def test_create_run_context(self, temp_data_dir):
        """Test creating a new run context."""
        context = RunContext.create(
            "grpo-1x4",
            RunKind.SWEEP,
            config={"mode": "central", "topology": {"num_nodes": 2, "workers_per_node": 4}},
            fingerprint="abc123",
            base_data_dir=temp_data_dir,
        )

        assert context.name == "grpo-1x4"
        assert context.kind == RunKind.SWEEP
        assert context.status.phase == RunPhase.CREATED
        assert context.run_dir == temp_data_dir / context.run_id
        assert context.context_file.exists()

    def test_default_data_dir(self):
        """Test that runs go under the configured data directory."""
        context = RunContext.create("default")
        assert RunContext.load(context.run_id).run_id == context.run_id

    def test_save_and_load(self, temp_data_dir):
        """Test saving and loading run context."""
        original = RunContext.create("run", config={"seed": 7}, fingerprint="f", base_data_dir=temp_data_dir)
        original.mark_planned({"ranks": {"0": ["actor_generate"]}, "layouts": {}})

        loaded = RunContext.load(original.run_id, temp_data_dir)
        assert loaded.run_id == original.run_id
        assert loaded.config == {"seed": 7}
        assert loaded.fingerprint == "f"
        assert loaded.status.phase == RunPhase.PLANNED
        assert loaded.metadata["plan"]["ranks"]["0"] == ["actor_generate"]

    def test_load_missing(self, temp_data_dir):
        """Test that loading an unknown run raises ValueError."""
        with pytest.raises(ValueError, match="not found"):
            RunContext.load("missing", temp_data_dir)
        (temp_data_dir / "empty").mkdir()
        with pytest.raises(ValueError, match="context file not found"):
            RunContext.load("empty", temp_data_dir)

    def test_phase_transitions(self, temp_data_dir):
        """Test phase transition methods."""
        context = RunContext.create("run", base_data_dir=temp_data_dir)
        context.mark_planned()
        assert context.status.phase == RunPhase.PLANNED
        context.mark_running()
        assert context.status.phase == RunPhase.RUNNING
        context.mark_completed({"mean_wall_time_s": 0.5}, temp_data_dir / "results.csv")
        assert context.status.phase == RunPhase.COMPLETED
        assert context.summary == {"mean_wall_time_s": 0.5}
        assert context.results_path == str(temp_data_dir / "results.csv")

    def test_mark_failed(self, temp_data_dir):
        """Test that a failure records the error and the partial summary."""
        context = RunContext.create("run", base_data_dir=temp_data_dir)
        context.mark_failed("rank 2 failed", {"measured_iterations": 1})

        loaded = RunContext.load(context.run_id, temp_data_dir)
        assert loaded.status.phase == RunPhase.FAILED
        assert "rank 2 failed" in loaded.status.errors[0]
        assert loaded.summary == {"measured_iterations": 1}

    def test_error_tracking(self, temp_data_dir):
        """Test error tracking functionality."""
        context = RunContext.create("run", base_data_dir=temp_data_dir)
        context.add_error("Test error 1")
        context.add_error("Test error 2")

        assert len(context.status.errors) == 2
        assert "Test error 1" in context.status.errors[0]
        assert "Test error 2" in context.status.errors[1]

    def test_list_runs_newest_first(self, temp_data_dir):
        """Test that runs are listed newest first and stray directories are skipped."""
        older = RunContext.create("older", base_data_dir=temp_data_dir)
        older.status.created_at = datetime.now() - timedelta(hours=1)
        older.save()
        newer = RunContext.create("newer", base_data_dir=temp_data_dir)
        (temp_data_dir / "not-a-run").mkdir()

        assert [run.name for run in RunContext.list_runs(temp_data_dir)] == [newer.name, older.name]
        assert RunContext.list_runs(temp_data_dir / "absent") == []

    def test_clean(self, temp_data_dir):
        """Test that clean removes only runs older than the cutoff."""
        old = RunContext.create("old", base_data_dir=temp_data_dir)
        old.status.created_at = datetime.now() - timedelta(days=40)
        old.save()
        recent = RunContext.create("recent", base_data_dir=temp_data_dir)

        assert RunContext.clean(30, temp_data_dir) == [old.run_id]
        assert not old.run_dir.exists()
        assert recent.run_dir.exists()

    def test_summary_dict(self, temp_data_dir):
        """Test summary dictionary generation."""
        context = RunContext.create(
            "run",
            config={"mode": "distributed", "topology": {"num_nodes": 2, "workers_per_node": 4}},
            fingerprint="abc",
            base_data_dir=temp_data_dir,
        )
        summary = context.to_summary_dict()
        assert summary["run_id"] == context.run_id
        assert summary["kind"] == "run"
        assert summary["phase"] == RunPhase.CREATED
        assert summary["mode"] == "distributed"
        assert summary["scale"] == "2x4"
        assert summary["has_errors"] is False

        bare = RunContext.create("bare", base_data_dir=temp_data_dir).to_summary_dict()
        assert bare["scale"] == ""
        assert bare["mode"] == ""
