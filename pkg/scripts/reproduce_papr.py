#!/usr/bin/env python3
"""Peak-to-average power CCDF curves for both subcarrier counts."""

import sys

from isacsim.cli import main

CONFIGS = ["configs/papr_ccdf_n64.ini", "configs/papr_ccdf_n1024.ini"]

if __name__ == "__main__":
    extra = sys.argv[1:]
    for cfg in CONFIGS:
        rc = main(["papr", "--config", cfg, *extra])
        if rc:
            sys.exit(rc)
