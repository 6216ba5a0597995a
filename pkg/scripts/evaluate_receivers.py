#!/usr/bin/env python3
"""Evaluate trained receiver checkpoints (run train_receivers.py first)."""

import sys

from isacsim.cli import main

CONFIGS = ["configs/eval_equalizer.ini", "configs/eval_pn_equalizer.ini"]

if __name__ == "__main__":
    extra = sys.argv[1:]
    for cfg in CONFIGS:
        rc = main(["eval", "--config", cfg, *extra])
        if rc:
            sys.exit(rc)
