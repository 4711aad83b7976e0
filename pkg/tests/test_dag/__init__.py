"""Tests for distflow.dag."""
