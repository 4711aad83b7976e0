"""Tests for distflow.runtime."""
