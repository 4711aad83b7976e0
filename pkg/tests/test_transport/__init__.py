"""Tests for distflow.transport."""
