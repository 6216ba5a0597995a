#!/usr/bin/env python3
"""Run every experiment end to end: waveform statistics, error rates,
rate model, sensing sweeps, then receiver training and evaluation.
Extra CLI flags (e.g. --threads 8) are forwarded to every run."""

import subprocess
import sys

STEPS = [
    "scripts/reproduce_papr.py",
    "scripts/reproduce_ber.py",
    "scripts/reproduce_rate.py",
    "scripts/reproduce_sensing.py",
    "scripts/train_receivers.py",
    "scripts/evaluate_receivers.py",
]

if __name__ == "__main__":
    for step in STEPS:
        print(f"== {step}")
        rc = subprocess.call([sys.executable, step, *sys.argv[1:]])
        if rc:
            sys.exit(rc)
