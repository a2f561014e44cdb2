#!/usr/bin/env python3
"""Run the 'wegner' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["wegner", "--seed", "1", "--out", "results/wegner", *sys.argv[1:]]))
