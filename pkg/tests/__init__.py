"""Tests for fouriereg."""
