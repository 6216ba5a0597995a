"""Classical receiver chain: subcarrier demapping, least-squares channel
estimation on reference blocks, linear CFR interpolation across blocks,
ZF/MMSE equalization and despreading back to bits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import qam_demap
from .waveform import FrameConfig, guard_stripped_blocks, reference_block


@dataclass
class RxFrame:
    """Received frame after demapping: (n_blocks, block_size) frequency bins."""

    cfg: FrameConfig
    freq_blocks: np.ndarray


@dataclass
class CfrEstimate:
    """Channel frequency response samples at the given block positions."""

    values: np.ndarray       # (len(positions), block_size)
    positions: np.ndarray
    source: str              # "ls" | "interpolated"


def demap_to_freq(cfg: FrameConfig, samples: np.ndarray) -> RxFrame:
    """Time samples -> occupied frequency bins per block.

    Accepts either full frame samples (guard included) or the already
    guard-stripped (n_blocks * n) samples.
    """
    samples = np.asarray(samples)
    if samples.size == cfg.frame_samples:
        blocks = guard_stripped_blocks(cfg, samples)
    elif samples.size == cfg.n_blocks * cfg.n:
        blocks = samples.reshape(cfg.n_blocks, cfg.n)
    else:
        raise ValueError(
            f"expected {cfg.frame_samples} or {cfg.n_blocks * cfg.n} samples, "
            f"got {samples.size}")
    spec = np.fft.fft(blocks, norm="ortho", axis=1)
    return RxFrame(cfg=cfg, freq_blocks=spec[:, : cfg.block_size])


def ls_estimate(rx: RxFrame) -> CfrEstimate:
    """Least-squares CFR at the reference blocks: received / transmitted."""
    cfg = rx.cfg
    ref = reference_block(cfg)
    if np.any(np.abs(ref) == 0):
        raise ValueError("reference block has a zero bin")
    values = rx.freq_blocks[cfg.ref_positions] / ref
    return CfrEstimate(values=values, positions=cfg.ref_positions.copy(), source="ls")


def interpolate_cfr(est: CfrEstimate, cfg: FrameConfig) -> CfrEstimate:
    """Per-subcarrier linear interpolation of the CFR over block index.

    Blocks before the first / after the last reference hold its value.
    """
    if est.values.shape[0] != len(est.positions):
        raise ValueError("estimate rows do not match positions")
    pos = np.asarray(est.positions)
    if len(pos) == 0:
        raise ValueError("no reference positions to interpolate from")
    m = np.arange(cfg.n_blocks)
    left = np.clip(np.searchsorted(pos, m, side="right") - 1, 0, len(pos) - 1)
    right = np.clip(left + 1, 0, len(pos) - 1)
    span = (pos[right] - pos[left]).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (m - pos[left]) / np.where(span > 0, span, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)[:, None]
    values = (1.0 - w) * est.values[left] + w * est.values[right]
    return CfrEstimate(values=values, positions=m, source="interpolated")


def equalize(
    rx: RxFrame,
    cfr: CfrEstimate,
    method: str = "zf",
    snr_db: float | None = None,
) -> np.ndarray:
    """Per-bin one-tap equalization of every block.

    zf: Y/H with exactly-zero bins flagged (output 0 plus a warning);
    mmse: conj(H) Y / (|H|^2 + 10^(-snr/10)), needs the operating SNR.
    """
    if cfr.values.shape != rx.freq_blocks.shape:
        raise ValueError("CFR shape does not match the received frame")
    h = cfr.values
    y = rx.freq_blocks
    if method == "zf":
        zero = np.abs(h) == 0
        if zero.any():
            warnings.warn(f"zf hit {int(zero.sum())} zero CFR bins; outputs zeroed",
                          stacklevel=2)
        safe = np.where(zero, 1.0, h)
        out = y / safe
        out[zero] = 0.0
        return out
    if method == "mmse":
        if snr_db is None:
            raise ValueError("mmse equalization needs snr_db")
        reg = 10.0 ** (-snr_db / 10.0)
        return np.conj(h) * y / (np.abs(h) ** 2 + reg)
    raise ValueError(f"unknown equalization method {method!r}")


def despread_and_demod(cfg: FrameConfig, equalized: np.ndarray, spread: bool = True) -> np.ndarray:
    """Equalized blocks -> payload bits (data blocks only).

    spread=True runs the inverse DFT per block and drops the fixed-tail
    symbols (fgi); spread=False demaps the subcarriers directly (OFDM).
    """
    if equalized.shape != (cfg.n_blocks, cfg.block_size):
        raise ValueError("equalized blocks do not match the config")
    data = equalized[cfg.data_positions]
    if spread:
        symbols = np.fft.ifft(data, norm="ortho", axis=1)[:, : cfg.k_data]
    else:
        symbols = data
    return qam_demap(symbols.reshape(-1))


def ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> float:
    """Bit error rate between two equal-length bit vectors."""
    tx_bits = np.asarray(tx_bits)
    rx_bits = np.asarray(rx_bits)
    if tx_bits.shape != rx_bits.shape:
        raise ValueError("bit vectors differ in length")
    if tx_bits.size == 0:
        raise ValueError("empty bit vectors")
    return float(np.mean(tx_bits != rx_bits))


def recover_bits(
    cfg: FrameConfig,
    samples: np.ndarray,
    method: str = "zf",
    snr_db: float | None = None,
    spread: bool = True,
) -> np.ndarray:
    """Full classical receiver: demap, LS + interpolation, equalize, demod."""
    rx = demap_to_freq(cfg, samples)
    cfr = interpolate_cfr(ls_estimate(rx), cfg)
    eq = equalize(rx, cfr, method=method, snr_db=snr_db)
    return despread_and_demod(cfg, eq, spread=spread)
