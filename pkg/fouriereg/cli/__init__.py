"""Command line interface for fouriereg."""

from .commands import cli, main, run

__all__ = ["cli", "main", "run"]
