"""Tests for tfdiff."""
