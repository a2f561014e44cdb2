#!/usr/bin/env python3
"""Run the 'fluctuate' experiment at its default scale; extra CLI flags pass through."""
import sys

from bandlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["fluctuate", "--seed", "1", "--out", "results/fluctuate", *sys.argv[1:]]))
