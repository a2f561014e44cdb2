#!/usr/bin/env python3
"""Run the 'decay' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["decay", "--seed", "1", "--out", "results/decay", *sys.argv[1:]]))
