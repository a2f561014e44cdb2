#!/usr/bin/env python3
"""Run the 'localize' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["localize", "--seed", "1", "--out", "results/localize", *sys.argv[1:]]))
