#!/usr/bin/env python3
"""Run the 'lyapunov' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["lyapunov", "--seed", "1", "--out", "results/lyapunov", *sys.argv[1:]]))
