#!/usr/bin/env python3
"""Stochastic-context glm comparison, T=2^16, 20 trials (pwp vs rmlp2-modified).

Extra arguments are forwarded to `pricing-lab run`, e.g. --jobs 4 --trace.
"""
import sys

from pricing_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "stochastic-glm", *sys.argv[1:]]))
