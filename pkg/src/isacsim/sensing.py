"""Range/velocity estimation from the reference-block CFR matrix.

The LS channel estimates at the M_RB reference blocks form an M_RB x L matrix
whose phase ramps encode path delays (across subcarriers) and Doppler shifts
(across blocks).  Estimators: zero-padded periodogram with quadratic peak
interpolation, and MUSIC with forward-backward spatial smoothing.  CRLB
helpers give the single-target bounds for both axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import C0
from .rxdsp import CfrEstimate
from .waveform import FrameConfig


@dataclass(frozen=True)
class SensingCfrMatrix:
    """CFR observations at reference blocks plus the grid geometry."""

    values: np.ndarray            # (m_rb, block_size)
    subcarrier_spacing: float
    block_stride: float           # seconds between consecutive reference blocks
    carrier_freq: float

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("values must be a non-empty 2-D matrix")
        if self.subcarrier_spacing <= 0 or self.block_stride <= 0 or self.carrier_freq <= 0:
            raise ValueError("grid constants must be > 0")

    @classmethod
    def from_frame(cls, est: CfrEstimate, cfg: FrameConfig) -> "SensingCfrMatrix":
        if est.source != "ls":
            raise ValueError("sensing uses the raw LS estimates at reference blocks")
        return cls(
            values=np.asarray(est.values),
            subcarrier_spacing=cfg.subcarrier_spacing,
            block_stride=cfg.ref_spacing * cfg.t_block,
            carrier_freq=cfg.carrier_freq,
        )


@dataclass(frozen=True)
class TargetEstimate:
    """One estimated target; range estimators leave velocity 0 and vice versa."""

    range_m: float
    velocity_mps: float
    peak_power: float


def correlation_function(cfr: SensingCfrMatrix, dm: int, dn: int) -> complex:
    """Average conj(H[m-dm, n]) * H[m, n+dn] over all valid (m, n)."""
    v = np.asarray(cfr.values)
    m_rb, l = v.shape
    if abs(dm) >= m_rb or abs(dn) >= l:
        raise ValueError("lag outside matrix bounds")
    rows = slice(max(0, dm), m_rb + min(0, dm))
    rows_shift = slice(max(0, -dm), m_rb + min(0, -dm))
    cols = slice(max(0, -dn), l + min(0, -dn))
    cols_shift = slice(max(0, dn), l + min(0, dn))
    a = v[rows_shift, cols]       # H[m-dm, n]
    b = v[rows, cols_shift]       # H[m, n+dn]
    return complex(np.mean(np.conj(a) * b))


def _quadratic_peak(logp: np.ndarray, k: int, circular: bool = False) -> float:
    """3-point quadratic interpolation of a peak position in bins."""
    n = len(logp)
    if circular:
        ym, y0, yp = logp[(k - 1) % n], logp[k], logp[(k + 1) % n]
    else:
        if k == 0 or k == n - 1:
            return float(k)
        ym, y0, yp = logp[k - 1], logp[k], logp[k + 1]
    denom = ym - 2.0 * y0 + yp
    if denom >= 0 or not np.isfinite(denom):
        return float(k)
    delta = 0.5 * (ym - yp) / denom
    return float(k + np.clip(delta, -0.5, 0.5))


def _peak_indices(p: np.ndarray, count: int) -> list[int]:
    """Local maxima of p, strongest first; edges count as maxima."""
    n = len(p)
    if n == 1:
        return [0]
    is_peak = np.empty(n, dtype=bool)
    is_peak[0] = p[0] >= p[1]
    is_peak[-1] = p[-1] >= p[-2]
    if n > 2:
        is_peak[1:-1] = (p[1:-1] >= p[:-2]) & (p[1:-1] >= p[2:])
    idx = np.flatnonzero(is_peak)
    order = idx[np.argsort(p[idx])[::-1]]
    return list(order[:count])


def estimate_range_periodogram(
    cfr: SensingCfrMatrix,
    zero_pad: int = 16,
    n_targets: int = 1,
    two_way: bool = True,
) -> list[TargetEstimate]:
    """Delay periodogram across subcarriers, rows averaged non-coherently.

    The search is limited to delays below half the unambiguous window so
    every returned range lies in [0, c0 / (4 * subcarrier spacing)] for
    two-way geometry (twice that one-way).
    """
    v = np.asarray(cfr.values)
    if v.shape[1] < 2:
        raise ValueError("range estimation needs at least 2 subcarriers")
    if zero_pad < 1 or n_targets < 1:
        raise ValueError("zero_pad and n_targets must be >= 1")
    nfft = zero_pad * v.shape[1]
    prof = np.fft.ifft(v, n=nfft, axis=1)
    p = np.mean(np.abs(prof) ** 2, axis=0)
    half = p[: nfft // 2]
    with np.errstate(divide="ignore"):
        logp = np.log(np.maximum(half, 1e-300))
    scale = 0.5 * C0 if two_way else C0
    out = []
    for k in _peak_indices(half, n_targets):
        kk = _quadratic_peak(logp, k)
        tau = kk / (nfft * cfr.subcarrier_spacing)
        out.append(TargetEstimate(range_m=scale * tau, velocity_mps=0.0,
                                  peak_power=float(half[k])))
    out.sort(key=lambda e: e.range_m)
    return out


def estimate_velocity_periodogram(
    cfr: SensingCfrMatrix,
    zero_pad: int = 16,
    n_targets: int = 1,
    two_way: bool = True,
) -> list[TargetEstimate]:
    """Doppler periodogram across reference blocks, columns averaged.

    Covers the full unambiguous window +-1/(2 * block stride); peaks are
    refined circularly since the Doppler spectrum is periodic.
    """
    v = np.asarray(cfr.values)
    if v.shape[0] < 2:
        raise ValueError("velocity estimation needs at least 2 reference blocks")
    if zero_pad < 1 or n_targets < 1:
        raise ValueError("zero_pad and n_targets must be >= 1")
    nfft = zero_pad * v.shape[0]
    spec = np.fft.fft(v, n=nfft, axis=0)
    p = np.mean(np.abs(spec) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        logp = np.log(np.maximum(p, 1e-300))
    scale = C0 / (2.0 * cfr.carrier_freq) if two_way else C0 / cfr.carrier_freq
    out = []
    for k in _peak_indices(p, n_targets):
        kk = _quadratic_peak(logp, k, circular=True)
        freq = kk / (nfft * cfr.block_stride)
        nyq = 0.5 / cfr.block_stride
        freq = ((freq + nyq) % (2.0 * nyq)) - nyq
        out.append(TargetEstimate(range_m=0.0, velocity_mps=scale * freq,
                                  peak_power=float(p[k])))
    out.sort(key=lambda e: e.velocity_mps)
    return out


def _music_spectrum(snapshots: np.ndarray, order: int, steering: np.ndarray) -> np.ndarray:
    """Noise-subspace pseudospectrum for snapshot rows and steering columns."""
    n, w = snapshots.shape
    if not order < w:
        raise ValueError("model order must be below the subarray length")
    r = snapshots.T @ np.conj(snapshots) / n
    j = np.eye(w)[::-1]
    r = 0.5 * (r + j @ r.conj() @ j)            # forward-backward averaging
    r += (1e-10 * np.trace(r).real / w) * np.eye(w)
    _, vec = np.linalg.eigh(r)
    noise = vec[:, : w - order]                 # eigenvectors of smallest eigenvalues
    proj = np.conj(noise.T) @ steering
    denom = np.sum(np.abs(proj) ** 2, axis=0)
    return 1.0 / np.maximum(denom, 1e-300)


def _sliding_windows(v: np.ndarray, w: int) -> np.ndarray:
    """All length-w windows of each row, stacked as snapshot rows."""
    rows, cols = v.shape
    count = cols - w + 1
    out = np.empty((rows * count, w), dtype=v.dtype)
    for s in range(count):
        out[s * rows : (s + 1) * rows] = v[:, s : s + w]
    return out


def music_range(
    cfr: SensingCfrMatrix,
    order: int = 1,
    grid: np.ndarray | None = None,
    subarray: int | None = None,
    two_way: bool = True,
) -> tuple[list[TargetEstimate], np.ndarray, np.ndarray]:
    """MUSIC over the subcarrier axis; returns (estimates, spectrum, grid).

    Smoothing subarray defaults to half the subcarrier count; the grid of
    candidate ranges defaults to the periodogram's half-window at 1/16-bin
    spacing.
    """
    v = np.asarray(cfr.values)
    m_rb, l = v.shape
    w = l // 2 if subarray is None else subarray
    if not 1 <= order < w or w > l:
        raise ValueError("need model order < subarray length <= subcarrier count")
    scale = 0.5 * C0 if two_way else C0
    if grid is None:
        tau_max = 0.5 / cfr.subcarrier_spacing
        grid = np.linspace(0.0, scale * tau_max, 16 * l, endpoint=False)
    grid = np.asarray(grid, dtype=float)
    taus = grid / scale
    steering = np.exp(-2j * np.pi * np.arange(w)[:, None]
                      * cfr.subcarrier_spacing * taus[None, :])
    snapshots = _sliding_windows(v, w)
    pm = _music_spectrum(snapshots, order, steering)
    logp = np.log(np.maximum(pm, 1e-300))
    out = []
    for k in _peak_indices(pm, order):
        kk = _quadratic_peak(logp, k)
        lo = int(math.floor(kk))
        frac = kk - lo
        r = grid[lo] if lo + 1 >= len(grid) else (1 - frac) * grid[lo] + frac * grid[lo + 1]
        out.append(TargetEstimate(range_m=float(r), velocity_mps=0.0,
                                  peak_power=float(pm[k])))
    out.sort(key=lambda e: e.range_m)
    return out, pm, grid


def music_velocity(
    cfr: SensingCfrMatrix,
    order: int = 1,
    grid: np.ndarray | None = None,
    subarray: int | None = None,
    two_way: bool = True,
) -> tuple[list[TargetEstimate], np.ndarray, np.ndarray]:
    """MUSIC over the reference-block axis (velocity); see music_range."""
    v = np.asarray(cfr.values)
    m_rb, l = v.shape
    w = m_rb // 2 if subarray is None else subarray
    if not 1 <= order < w or w > m_rb:
        raise ValueError("need model order < subarray length <= block count")
    scale = C0 / (2.0 * cfr.carrier_freq) if two_way else C0 / cfr.carrier_freq
    if grid is None:
        nu_max = 0.5 / cfr.block_stride
        grid = np.linspace(-scale * nu_max, scale * nu_max, 16 * m_rb, endpoint=False)
    grid = np.asarray(grid, dtype=float)
    nus = grid / scale
    steering = np.exp(2j * np.pi * np.arange(w)[:, None]
                      * cfr.block_stride * nus[None, :])
    snapshots = _sliding_windows(v.T, w)
    pm = _music_spectrum(snapshots, order, steering)
    logp = np.log(np.maximum(pm, 1e-300))
    out = []
    for k in _peak_indices(pm, order):
        kk = _quadratic_peak(logp, k)
        lo = int(math.floor(kk))
        frac = kk - lo
        vel = grid[lo] if lo + 1 >= len(grid) else (1 - frac) * grid[lo] + frac * grid[lo + 1]
        out.append(TargetEstimate(range_m=0.0, velocity_mps=float(vel),
                                  peak_power=float(pm[k])))
    out.sort(key=lambda e: e.velocity_mps)
    return out, pm, grid


def delay_doppler_map(cfr: SensingCfrMatrix, zero_pad: int = 4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint 2-D periodogram: power over (delay bins, Doppler bins)."""
    v = np.asarray(cfr.values)
    nf_t = zero_pad * v.shape[1]
    nf_d = zero_pad * v.shape[0]
    g = np.fft.ifft(v, n=nf_t, axis=1)
    g = np.fft.fft(g, n=nf_d, axis=0)
    power = np.abs(g) ** 2
    taus = np.arange(nf_t) / (nf_t * cfr.subcarrier_spacing)
    nus = np.fft.fftfreq(nf_d, d=cfr.block_stride)
    return power, taus, nus


def crlb_range_var(snr_linear: float, n_subcarriers: int, m_rb: int, subcarrier_spacing: float) -> float:
    """Single-target range-estimate variance bound (m^2)."""
    if snr_linear <= 0:
        raise ValueError("snr must be > 0")
    if n_subcarriers < 2 or m_rb < 1:
        raise ValueError("need at least 2 subcarriers and 1 reference block")
    k = n_subcarriers
    lead = 6.0 / (snr_linear * (k * k - 1.0) * k * m_rb)
    return lead * (C0 / (4.0 * math.pi * subcarrier_spacing)) ** 2


def crlb_velocity_var(
    snr_linear: float,
    n_subcarriers: int,
    m_rb: int,
    block_stride: float,
    carrier_freq: float,
) -> float:
    """Single-target velocity-estimate variance bound ((m/s)^2)."""
    if snr_linear <= 0:
        raise ValueError("snr must be > 0")
    if n_subcarriers < 1 or m_rb < 2:
        raise ValueError("need at least 1 subcarrier and 2 reference blocks")
    m = m_rb
    lead = 6.0 / (snr_linear * (m * m - 1.0) * m * n_subcarriers)
    return lead * (C0 / (4.0 * math.pi * block_stride * carrier_freq)) ** 2
