#!/usr/bin/env python3
"""Run the 'mregular' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["mregular", "--seed", "1", "--out", "results/mregular", *sys.argv[1:]]))
