"""Shared fixtures: temporary run directories, isolated settings and small run configs."""

import shutil
import tempfile
from pathlib import Path

import pytest

from distflow.bench.models import RunConfig, TopologyConfig
from distflow.config import reset_config
from distflow.data.loader import DatasetConfig
from distflow.runtime.functions import CostModel, GenerationParams, TokenDistribution


@pytest.fixture
def temp_data_dir():
    """Create a temporary directory for test data."""
    temp_dir = Path(tempfile.mkdtemp())
    yield temp_dir
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, temp_data_dir):
    """Point run records at a temp dir and keep blocking waits short."""
    monkeypatch.setenv("DISTFLOW_DATA_DIR", str(temp_data_dir / "runs"))
    monkeypatch.setenv("DISTFLOW_RECV_TIMEOUT_S", "30")
    monkeypatch.setenv("DISTFLOW_LOG_LEVEL", "WARNING")
    reset_config()
    yield
    reset_config()


@pytest.fixture
def make_config():
    """Factory for small zero-cost run configs; keyword arguments override fields."""

    def factory(num_nodes: int = 1, workers_per_node: int = 4, **overrides) -> RunConfig:
        fields = {
            "name": "test",
            "topology": TopologyConfig(num_nodes=num_nodes, workers_per_node=workers_per_node),
            "global_batch": 16,
            "iterations": 3,
            "warmup_iterations": 0,
            "seed": 7,
            "dataset": DatasetConfig(size=64, prompt_tokens=8),
            "generation": GenerationParams(
                rollouts_per_prompt=4,
                response_tokens=TokenDistribution(kind="uniform", low=4, high=16),
            ),
            "cost_model": CostModel(terms={}),
        }
        fields.update(overrides)
        return RunConfig(**fields)

    return factory
