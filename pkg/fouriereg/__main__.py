"""Main module for fouriereg."""

import sys

from .cli.commands import run

if __name__ == "__main__":
    sys.exit(run())
