#!/usr/bin/env python3
"""Range- and velocity-estimation RMSE sweeps with the CRLB overlay."""

import sys

from isacsim.cli import main

CONFIGS = ["configs/sense_range_rmse.ini", "configs/sense_velocity_rmse.ini"]

if __name__ == "__main__":
    extra = sys.argv[1:]
    for cfg in CONFIGS:
        rc = main(["sense", "--config", cfg, *extra])
        if rc:
            sys.exit(rc)
