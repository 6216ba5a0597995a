"""Baseband vector primitives shared by the waveform, channel and receiver
code: unitary DFT/IDFT, Zadoff-Chu sequences, Gray-coded 4-QAM mapping and
reproducible Gaussian sampling."""

from __future__ import annotations

import hashlib
import math

import numpy as np


class RngStream:
    """Reproducible random source keyed by (seed, stream).

    Two streams built with the same key produce bit-identical draws.  Derived
    streams are statistically independent of their parent, which lets every
    Monte Carlo trial own a private stream: ``master.derive(trial_index)``.
    """

    def __init__(self, seed: int, stream: int | tuple[int, ...] = 0):
        self.seed = int(seed)
        self.key = (int(stream),) if isinstance(stream, int) else tuple(int(s) for s in stream)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
            self._gen = np.random.default_rng(seq)
        return self._gen

    def derive(self, index: int | str) -> "RngStream":
        """Child stream with `index` appended to the key tuple.

        String labels are hashed to a stable integer so call sites can name
        their sub-streams ("channel", "noise", ...) without collisions.
        """
        if isinstance(index, str):
            digest = hashlib.sha256(index.encode("utf-8")).digest()
            index = int.from_bytes(digest[:8], "little")
        return RngStream(self.seed, self.key + (int(index),))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.key})"


def _as_vector(v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-D vector")
    if not np.isfinite(v).all():
        raise ValueError("vector contains non-finite entries")
    return v


def dft(v) -> np.ndarray:
    """Unitary DFT: entry k is (1/sqrt(L)) sum_n v[n] exp(-j 2 pi k n / L)."""
    return np.fft.fft(_as_vector(v), norm="ortho")


def idft(v) -> np.ndarray:
    """Unitary inverse DFT: entry n is (1/sqrt(L)) sum_k v[k] exp(+j 2 pi k n / L)."""
    return np.fft.ifft(_as_vector(v), norm="ortho")


def zadoff_chu(length: int, root: int) -> np.ndarray:
    """Constant-envelope Zadoff-Chu sequence.

    Even length: p_n = exp(-j pi root n^2 / length); odd length uses
    n (n + 1) in place of n^2.  The root must be coprime with the length,
    otherwise the sequence loses its flat DFT magnitude.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} is not coprime with length {length}")
    n = np.arange(length)
    if length % 2 == 0:
        phase = -np.pi * root * n * n / length
    else:
        phase = -np.pi * root * n * (n + 1) / length
    return np.exp(1j * phase)


_QAM_SCALE = 1.0 / math.sqrt(2.0)


def qam_map(bits, order: int = 4) -> np.ndarray:
    """Gray-coded QAM mapping with unit average symbol energy.

    For order 4 the bit pair (b1, b0) maps to ((1-2*b1) + j(1-2*b0))/sqrt(2).
    """
    if order != 4:
        raise ValueError(f"unsupported QAM order {order}")
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size % 2 != 0:
        raise ValueError("bit vector length must be a multiple of 2")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    pairs = bits.reshape(-1, 2).astype(np.float64)
    return ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1])) * _QAM_SCALE


def qam_demap(symbols, order: int = 4) -> np.ndarray:
    """Hard-decision demapping, inverse of qam_map on noiseless symbols."""
    if order != 4:
        raise ValueError(f"unsupported QAM order {order}")
    s = np.asarray(symbols).reshape(-1)
    bits = np.empty((s.size, 2), dtype=np.int8)
    bits[:, 0] = s.real < 0
    bits[:, 1] = s.imag < 0
    return bits.reshape(-1)


def gaussian(rng: RngStream | np.random.Generator, n: int, variance: float) -> np.ndarray:
    """n i.i.d. zero-mean real Gaussian samples with the given variance."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if n < 0:
        raise ValueError("sample count must be >= 0")
    if variance == 0:
        return np.zeros(n)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    return gen.normal(0.0, math.sqrt(variance), size=n)


def complex_gaussian(rng: RngStream | np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, variance/2 per real component."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if n < 0:
        raise ValueError("sample count must be >= 0")
    if variance == 0:
        return np.zeros(n, dtype=complex)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    std = math.sqrt(variance / 2.0)
    return gen.normal(0.0, std, size=n) + 1j * gen.normal(0.0, std, size=n)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0:
        raise ValueError("dB of a non-positive value")
    return 10.0 * math.log10(x)
