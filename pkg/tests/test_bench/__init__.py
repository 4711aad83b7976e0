"""Tests for distflow.bench."""
