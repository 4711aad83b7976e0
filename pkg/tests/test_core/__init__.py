"""Tests for distflow.core."""
