"""Tests for DistFlow-Sim."""
