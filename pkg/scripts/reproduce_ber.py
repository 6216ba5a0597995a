#!/usr/bin/env python3
"""Bit-error-rate sweeps: waveform comparison over SNR, then degradation
over oscillator phase-noise variance."""

import sys

from isacsim.cli import main

CONFIGS = ["configs/ber_vs_snr.ini", "configs/ber_vs_phase_noise.ini"]

if __name__ == "__main__":
    extra = sys.argv[1:]
    for cfg in CONFIGS:
        rc = main(["ber", "--config", cfg, *extra])
        if rc:
            sys.exit(rc)
