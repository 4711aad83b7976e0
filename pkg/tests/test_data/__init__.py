"""Tests for distflow.data."""
