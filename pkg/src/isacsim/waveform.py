"""Frame construction and modulation for the DFT-spread multicarrier waveform.

A frame is M blocks of L frequency bins on an N-bin grid.  Reference blocks
(the spread image of a Zadoff-Chu sequence) appear every `ref_spacing` blocks;
the remaining blocks carry spread 4-QAM payload.  Two guard variants exist:

* ``cp``  - every time block is prefixed with a copy of its own tail;
* ``fgi`` - each data block embeds the tail of the reference sequence as
  fixed symbols, so the last k_gi time samples of every block are nearly
  identical and act as an internal guard without extending the block.

``spread=False`` produces the plain OFDM baseline: the same reference blocks
and CP handling, but QAM symbols placed directly on the subcarriers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import RngStream, dft, qam_map, zadoff_chu


@dataclass(frozen=True)
class FrameConfig:
    """Numerology of one frame.

    n: IDFT size (number of subcarriers); block_size: occupied bins L;
    n_blocks: blocks per frame M; ref_spacing: reference block period S_r;
    n_cp: cyclic prefix samples (cp mode); n_fixed: fixed tail symbols per
    data block K_p (fgi mode).
    """

    n: int
    block_size: int
    n_blocks: int
    ref_spacing: int
    guard: str = "cp"
    n_cp: int = 0
    n_fixed: int = 0
    subcarrier_spacing: float = 7.68e6
    carrier_freq: float = 0.3e12
    zc_root: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.block_size <= self.n:
            raise ValueError("block_size must satisfy 1 <= L <= n")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.ref_spacing < 1:
            raise ValueError("ref_spacing must be >= 1")
        if self.guard not in ("cp", "fgi"):
            raise ValueError(f"unknown guard kind {self.guard!r}")
        if self.guard == "cp":
            if not 1 <= self.n_cp < self.n:
                raise ValueError("n_cp must satisfy 1 <= n_cp < n")
            if self.n_fixed != 0:
                raise ValueError("n_fixed is only meaningful with the fgi guard")
        else:
            if self.n_cp != 0:
                raise ValueError("fgi frames carry no cyclic prefix")
            if not 1 <= self.n_fixed < self.block_size:
                raise ValueError("n_fixed must satisfy 1 <= K_p < L")
        if self.subcarrier_spacing <= 0 or self.carrier_freq <= 0:
            raise ValueError("subcarrier_spacing and carrier_freq must be > 0")
        if math.gcd(self.zc_root, self.block_size) != 1:
            raise ValueError("zc_root must be coprime with block_size")

    # ---- derived quantities -------------------------------------------------

    @property
    def k_data(self) -> int:
        """Payload symbols per data block."""
        return self.block_size - self.n_fixed

    @property
    def k_gi(self) -> int:
        """Guard samples produced by the fixed tail (fgi mode)."""
        return (self.n_fixed * self.n) // self.block_size

    @property
    def t_sym(self) -> float:
        """Block core duration T = 1 / subcarrier spacing."""
        return 1.0 / self.subcarrier_spacing

    @property
    def t_cp(self) -> float:
        return self.n_cp * self.t_sym / self.n

    @property
    def t_block(self) -> float:
        """Transmitted block duration T_o (core plus CP when present)."""
        return self.t_sym + self.t_cp

    @property
    def guard_duration(self) -> float:
        if self.guard == "cp":
            return self.t_cp
        return self.k_gi * self.t_sym / self.n

    @property
    def samples_per_block(self) -> int:
        return self.n + self.n_cp

    @property
    def frame_samples(self) -> int:
        return self.n_blocks * self.samples_per_block

    @cached_property
    def ref_positions(self) -> np.ndarray:
        """Block indices holding reference blocks: m = ref_spacing * q."""
        return np.arange(0, self.n_blocks, self.ref_spacing)

    @property
    def m_rb(self) -> int:
        return len(self.ref_positions)

    @property
    def m_db(self) -> int:
        return self.n_blocks - self.m_rb

    @cached_property
    def data_positions(self) -> np.ndarray:
        mask = np.ones(self.n_blocks, dtype=bool)
        mask[self.ref_positions] = False
        return np.flatnonzero(mask)

    def bits_per_frame(self, spread: bool = True) -> int:
        per_block = self.k_data if spread else self.block_size
        return 2 * per_block * self.m_db


@dataclass
class TxFrame:
    """One assembled frame: frequency blocks plus, once modulated, samples."""

    cfg: FrameConfig
    freq_blocks: np.ndarray          # (n_blocks, block_size)
    payload_bits: np.ndarray
    spread: bool = True
    time_samples: np.ndarray | None = None


def reference_sequence(cfg: FrameConfig) -> np.ndarray:
    """Time-domain (pre-spreading) reference sequence for this numerology."""
    return zadoff_chu(cfg.block_size, cfg.zc_root)


def reference_block(cfg: FrameConfig) -> np.ndarray:
    """Frequency-domain reference block: the DFT of the reference sequence."""
    return dft(reference_sequence(cfg))


def spread_blocks(blocks: np.ndarray) -> np.ndarray:
    """Row-wise unitary DFT: pre-DFT symbol blocks -> frequency blocks."""
    return np.fft.fft(blocks, norm="ortho", axis=-1)


def assemble_frame(
    cfg: FrameConfig,
    bits: np.ndarray | None = None,
    rng: RngStream | None = None,
    spread: bool = True,
) -> TxFrame:
    """Map payload bits into the frame's frequency blocks.

    With bits=None a random payload is drawn from rng.  spread=False builds
    the plain OFDM baseline (cp guard only), with identical reference blocks.
    """
    if not spread and cfg.guard != "cp":
        raise ValueError("the OFDM baseline supports only the cp guard")
    n_bits = cfg.bits_per_frame(spread)
    if bits is None:
        if rng is None:
            raise ValueError("need either bits or rng")
        bits = rng.generator.integers(0, 2, size=n_bits, dtype=np.int8)
    bits = np.asarray(bits)
    if bits.size != n_bits:
        raise ValueError(f"expected {n_bits} payload bits, got {bits.size}")

    symbols = qam_map(bits)
    per_block = cfg.k_data if spread else cfg.block_size
    sym_blocks = symbols.reshape(cfg.m_db, per_block)

    freq = np.empty((cfg.n_blocks, cfg.block_size), dtype=complex)
    freq[cfg.ref_positions] = reference_block(cfg)
    if spread:
        pre_dft = np.empty((cfg.m_db, cfg.block_size), dtype=complex)
        pre_dft[:, : cfg.k_data] = sym_blocks
        if cfg.n_fixed:
            pre_dft[:, cfg.k_data :] = reference_sequence(cfg)[cfg.k_data :]
        freq[cfg.data_positions] = spread_blocks(pre_dft)
    else:
        freq[cfg.data_positions] = sym_blocks
    return TxFrame(cfg=cfg, freq_blocks=freq, payload_bits=bits, spread=spread)


def modulate(cfg: FrameConfig, frame: TxFrame) -> np.ndarray:
    """Frequency blocks -> concatenated time samples (fills frame.time_samples).

    Each block is zero-padded to n bins, transformed by the unitary IDFT and,
    in cp mode, prefixed with its own last n_cp samples.
    """
    if frame.freq_blocks.shape != (cfg.n_blocks, cfg.block_size):
        raise ValueError("frame blocks do not match the config")
    padded = np.zeros((cfg.n_blocks, cfg.n), dtype=complex)
    padded[:, : cfg.block_size] = frame.freq_blocks
    core = np.fft.ifft(padded, norm="ortho", axis=1)
    if cfg.n_cp:
        blocks = np.hstack([core[:, cfg.n - cfg.n_cp :], core])
    else:
        blocks = core
    samples = blocks.reshape(-1)
    frame.time_samples = samples
    return samples


def transmit(
    cfg: FrameConfig,
    bits: np.ndarray | None = None,
    rng: RngStream | None = None,
    spread: bool = True,
) -> TxFrame:
    """assemble_frame + modulate in one step."""
    frame = assemble_frame(cfg, bits, rng, spread)
    modulate(cfg, frame)
    return frame


def guard_stripped_blocks(cfg: FrameConfig, samples: np.ndarray) -> np.ndarray:
    """Reshape frame samples to (n_blocks, n), dropping the CP when present."""
    samples = np.asarray(samples)
    if samples.size != cfg.frame_samples:
        raise ValueError(
            f"expected {cfg.frame_samples} samples, got {samples.size}")
    blocks = samples.reshape(cfg.n_blocks, cfg.samples_per_block)
    return blocks[:, cfg.n_cp :]


def papr(block: np.ndarray) -> float:
    """Peak-to-average power ratio (linear) of one block of time samples."""
    p = np.abs(np.asarray(block, dtype=complex)) ** 2
    if p.size == 0:
        raise ValueError("empty block")
    mean = p.mean()
    if mean == 0:
        raise ValueError("all-zero block has no PAPR")
    return float(p.max() / mean)


def papr_per_block(
    cfg: FrameConfig,
    frame: TxFrame,
    include_reference: bool = False,
    oversample: int = 1,
) -> np.ndarray:
    """PAPR (linear) of each block, guard samples excluded.

    oversample > 1 evaluates the block on a finer time grid (zero-padded
    IDFT) to approximate the continuous-time peak.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    positions = np.arange(cfg.n_blocks) if include_reference else cfg.data_positions
    n_os = oversample * cfg.n
    padded = np.zeros((len(positions), n_os), dtype=complex)
    padded[:, : cfg.block_size] = frame.freq_blocks[positions]
    core = np.fft.ifft(padded, axis=1) * (n_os / math.sqrt(cfg.n))
    p = np.abs(core) ** 2
    return p.max(axis=1) / p.mean(axis=1)
