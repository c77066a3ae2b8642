#!/usr/bin/env python3
"""
Main entry point for tprop.

Usage:
    python main.py train --config presets/mnist_7h_tanh.json --data-dir DATA
    python main.py eval --checkpoint runs/default/checkpoint.tprop --split test
    python main.py verify all --trials 100 --seed 7
    python main.py export-filters --checkpoint runs/ae/checkpoint.tprop --out filters.pgm

Equivalent to ``python -m tprop``.
"""

import sys


def main():
    """Main entry point - hand the arguments to the tprop CLI."""
    from tprop.cli import main as cli_main
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
