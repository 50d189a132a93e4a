#!/usr/bin/env python3
"""Adversarial triangular-context comparison, T=2^16, 20 trials.

The context alternates a rare exploration direction with a fixed common one;
epoch-refit baselines lose the rare coordinate while the perturbed pricer
keeps learning it.  Extra arguments are forwarded to `pricing-lab run`.
"""
import sys

from pricing_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "adversarial-glm", *sys.argv[1:]]))
