#!/usr/bin/env python3
"""Achievable rate vs channel delay spread for both guard schemes."""

import sys

from isacsim.cli import main

if __name__ == "__main__":
    sys.exit(main(["rate", "--config", "configs/rate_vs_delay_spread.ini",
                   *sys.argv[1:]]))
