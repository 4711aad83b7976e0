"""Tests for distflow.baseline."""
