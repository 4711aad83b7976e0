"""Core classes for DistFlow-Sim."""
