#!/usr/bin/env python3
"""Homoscedastic-baseline comparison, T=2^14, 10 trials.

Pits the fixed-elasticity epoch baseline (rmlp2-homoscedastic) against pwp on
a heteroscedastic environment.  Extra arguments forwarded to `pricing-lab run`.
"""
import sys

from pricing_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "homoscedastic-baseline", *sys.argv[1:]]))
