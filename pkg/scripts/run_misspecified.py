#!/usr/bin/env python3
"""Misspecified valuation environment with polynomial context expansion.

T=2^14, 10 trials; pwp prices on the expanded context (x0=[0.5,0.5], a=[0,1])
against the valuation-model epoch baseline.  Extra arguments forwarded.
"""
import sys

from pricing_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "misspecified-expansion", *sys.argv[1:]]))
