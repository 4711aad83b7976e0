"""DistFlow-Sim - multi-controller dataflow orchestration for multi-stage RL pipelines."""

__version__ = "0.1.0"
