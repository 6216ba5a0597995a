#!/usr/bin/env python3
"""Train the neural receivers and save checkpoints under results/.

Order matters only in that evaluate_receivers.py expects the checkpoints
these runs produce.  Each run takes a few minutes on one core.
"""

import sys

from isacsim.cli import main

CONFIGS = [
    "configs/train_equalizer.ini",
    "configs/train_pn_equalizer.ini",
    "configs/train_two_level.ini",
]

if __name__ == "__main__":
    extra = sys.argv[1:]
    for cfg in CONFIGS:
        rc = main(["train", "--config", cfg, *extra])
        if rc:
            sys.exit(rc)
