#!/usr/bin/env python3
"""Run the 'verify' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify", "--seed", "1", "--out", "results/verify", *sys.argv[1:]]))
