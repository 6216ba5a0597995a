"""Multipath channel with per-path delay/Doppler, link-budget helpers,
oscillator phase noise and AWGN.

Delays act as per-subcarrier phase ramps on each block (exact under the
block-circular model when the delay stays inside the guard); Doppler is a
per-sample complex rotation at the true sample instants.  In fgi mode the
delayed previous block spills into the head of the current one, which is what
the internal guard has to absorb.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, complex_gaussian, gaussian
from .waveform import FrameConfig

C0 = 299_792_458.0  # propagation speed, m/s


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: complex gain, delay (s), Doppler shift (Hz)."""

    gain: complex
    delay: float
    doppler: float = 0.0

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if not (np.isfinite(self.gain) and np.isfinite(self.delay) and np.isfinite(self.doppler)):
            raise ValueError("path parameters must be finite")


@dataclass(frozen=True)
class ChannelRealization:
    """A fixed set of paths plus the impairment levels applied around them."""

    paths: tuple[PathSpec, ...]
    snr_db: float | None = None
    pn_variance: float = 0.0

    def __post_init__(self):
        if len(self.paths) == 0:
            raise ValueError("a realization needs at least one path")
        if self.pn_variance < 0:
            raise ValueError("pn_variance must be >= 0")


@dataclass(frozen=True)
class LinkBudget:
    """Link constants for the free-space gain laws (linear units; kappa in 1/m)."""

    tx_power: float = 1.0
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    absorption: float = 0.0
    carrier_freq: float = 0.3e12
    reflection: float = 1.0
    rcs: float = 1.0

    def __post_init__(self):
        for name in ("tx_power", "tx_gain", "rx_gain", "absorption", "carrier_freq", "reflection", "rcs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.carrier_freq <= 0:
            raise ValueError("carrier_freq must be > 0")


def comm_path_gain(budget: LinkBudget, range_m: float, kind: str = "los") -> float:
    """Mean power gain of a one-way link path over `range_m` metres.

    NLoS paths are scaled by the squared reflection coefficient.
    """
    if range_m <= 0:
        raise ValueError("range must be > 0")
    spreading = (C0 / (4.0 * math.pi * budget.carrier_freq * range_m)) ** 2
    g = budget.tx_power * budget.tx_gain * budget.rx_gain * spreading
    g *= math.exp(-budget.absorption * range_m)
    if kind == "nlos":
        g *= budget.reflection ** 2
    elif kind != "los":
        raise ValueError(f"unknown path kind {kind!r}")
    return g


def sensing_path_gain(budget: LinkBudget, range_m: float) -> float:
    """Mean power gain of a two-way (radar) path off a target at `range_m`."""
    if range_m <= 0:
        raise ValueError("range must be > 0")
    num = budget.tx_power * budget.tx_gain * budget.rx_gain * C0 ** 2 * budget.rcs
    den = (4.0 * math.pi) ** 3 * budget.carrier_freq ** 2 * range_m ** 4
    return num / den * math.exp(-budget.absorption * range_m)


def geometry_to_path(kind: str, range_m: float, speed_mps: float, carrier_freq: float) -> tuple[float, float]:
    """(delay, doppler) for a path: one-way for comm, round-trip for sensing."""
    if range_m < 0:
        raise ValueError("range must be >= 0")
    if kind == "comm":
        return range_m / C0, carrier_freq * speed_mps / C0
    if kind == "sensing":
        return 2.0 * range_m / C0, 2.0 * carrier_freq * speed_mps / C0
    raise ValueError(f"unknown geometry kind {kind!r}")


def pn_variance_from_linewidth(linewidth_hz: float, t_sample: float) -> float:
    """Per-sample phase-increment variance of a Wiener oscillator walk."""
    if linewidth_hz < 0 or t_sample <= 0:
        raise ValueError("need linewidth >= 0 and t_sample > 0")
    return 2.0 * math.pi * linewidth_hz * t_sample


def apply_channel(
    cfg: FrameConfig,
    realization: ChannelRealization,
    samples: np.ndarray,
    block_doppler: bool = False,
) -> np.ndarray:
    """Propagate frame samples through the multipath channel (no noise).

    block_doppler=True freezes the Doppler rotation over each block at its
    first payload sample, the usual block-constant approximation; by default
    the rotation is exact per sample.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.size != cfg.frame_samples:
        raise ValueError(f"expected {cfg.frame_samples} samples, got {samples.size}")
    n, n_cp = cfg.n, cfg.n_cp
    t_sym = cfg.t_sym
    dt = t_sym / n
    m = np.arange(cfg.n_blocks)[:, None]
    bins = np.arange(n)
    blocks = samples.reshape(cfg.n_blocks, cfg.samples_per_block)

    for p in realization.paths:
        if cfg.guard == "cp" and p.delay > cfg.t_cp + 1e-18:
            warnings.warn(
                f"path delay {p.delay:.3e}s exceeds the CP ({cfg.t_cp:.3e}s); "
                "the block-circular model is inexact", stacklevel=2)

    if cfg.guard == "cp":
        useful = blocks[:, n_cp:]
        spec = np.fft.fft(useful, norm="ortho", axis=1)
        out = np.zeros_like(blocks)
        block_start = m * cfg.t_block
        t_useful = block_start + cfg.t_cp + np.arange(n) * dt
        t_prefix = block_start + np.arange(n_cp) * dt if n_cp else None
        for p in realization.paths:
            ramp = np.exp(-2j * np.pi * bins * cfg.subcarrier_spacing * p.delay)
            u = np.fft.ifft(spec * ramp, norm="ortho", axis=1)
            if block_doppler:
                rot = p.gain * np.exp(2j * np.pi * p.doppler * (block_start + cfg.t_cp))
                out[:, n_cp:] += u * rot
                if n_cp:
                    out[:, :n_cp] += u[:, n - n_cp:] * rot
            else:
                out[:, n_cp:] += u * (p.gain * np.exp(2j * np.pi * p.doppler * t_useful))
                if n_cp:
                    out[:, :n_cp] += u[:, n - n_cp:] * (
                        p.gain * np.exp(2j * np.pi * p.doppler * t_prefix))
        return out.reshape(-1)

    # fgi: the delayed tail of the previous block overlaps the current head
    spec = np.fft.fft(blocks, norm="ortho", axis=1)
    prev_spec = np.vstack([np.zeros((1, n), dtype=complex), spec[:-1]])
    out = np.zeros_like(blocks)
    t_in_block = np.arange(n) * dt
    t_abs = m * t_sym + t_in_block
    for p in realization.paths:
        ramp = np.exp(-2j * np.pi * bins * cfg.subcarrier_spacing * p.delay)
        u_cur = np.fft.ifft(spec * ramp, norm="ortho", axis=1)
        u_prev = np.fft.ifft(prev_spec * ramp, norm="ortho", axis=1)
        mix = np.where(t_in_block >= p.delay - 1e-18, u_cur, u_prev)
        if block_doppler:
            rot = p.gain * np.exp(2j * np.pi * p.doppler * m * t_sym)
        else:
            rot = p.gain * np.exp(2j * np.pi * p.doppler * t_abs)
        out += mix * rot
    return out.reshape(-1)


def frequency_response(
    cfg: FrameConfig,
    realization: ChannelRealization,
    block_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Per-block channel frequency response over the first block_size bins.

    Uses the block-constant Doppler rotation (frozen at each block's first
    payload sample), so for a cp frame whose path delays stay inside the
    guard this is exactly the multiplicative channel realized by
    apply_channel(..., block_doppler=True).
    """
    m = np.arange(cfg.n_blocks) if block_indices is None else np.asarray(block_indices)
    if cfg.guard == "cp":
        t_ref = m * cfg.t_block + cfg.t_cp
    else:
        t_ref = m * cfg.t_sym
    bins = np.arange(cfg.block_size)
    h = np.zeros((m.size, cfg.block_size), dtype=complex)
    for p in realization.paths:
        ramp = np.exp(-2j * np.pi * bins * cfg.subcarrier_spacing * p.delay)
        rot = p.gain * np.exp(2j * np.pi * p.doppler * t_ref)
        h += rot[:, None] * ramp[None, :]
    return h


def apply_phase_noise(samples: np.ndarray, variance: float, rng: RngStream) -> np.ndarray:
    """Wiener phase noise: a random-walk rotation continuous over the frame."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    samples = np.asarray(samples, dtype=complex)
    if variance == 0:
        return samples.copy()
    theta = np.cumsum(gaussian(rng, samples.size, variance))
    return samples * np.exp(1j * theta)


def add_awgn(
    samples: np.ndarray,
    snr_db: float | None,
    rng: RngStream,
    reference_power: float | None = None,
) -> np.ndarray:
    """Add complex AWGN at the requested SNR relative to the mean sample power.

    snr_db of None or +inf returns the samples unchanged.  reference_power
    overrides the measured power (needed e.g. for all-zero inputs).
    """
    samples = np.asarray(samples, dtype=complex)
    if snr_db is None or math.isinf(snr_db):
        return samples.copy()
    power = reference_power if reference_power is not None else float(np.mean(np.abs(samples) ** 2))
    if power <= 0:
        raise ValueError("signal power is zero; pass reference_power")
    var = power * 10.0 ** (-snr_db / 10.0)
    return samples + complex_gaussian(rng, samples.size, var)


@dataclass(frozen=True)
class ScenarioConfig:
    """Random-channel family used for Monte Carlo draws and training data.

    kind: awgn | single-target | multi-target | multipath-comm.  Target
    scenarios use round-trip geometry; multipath-comm is one-way with a LoS
    path and `n_nlos` reflections whose powers follow the configured
    reflection-loss distribution (dB, Gaussian).
    """

    kind: str
    n_targets: int = 1
    n_nlos: int = 4
    reflection_mean_db: float = -13.0
    reflection_std_db: float = 2.0
    with_doppler: bool = False
    max_speed: float = 100.0 / 3.6
    los_range: str = "zero"  # zero | random

    def __post_init__(self):
        if self.kind not in ("awgn", "single-target", "multi-target", "multipath-comm"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n_targets < 1 or self.n_nlos < 0:
            raise ValueError("path counts must be positive")
        if self.max_speed < 0:
            raise ValueError("max_speed must be >= 0")
        if self.los_range not in ("zero", "random"):
            raise ValueError(f"unknown los_range mode {self.los_range!r}")

    def max_range(self, cfg: FrameConfig) -> float:
        """Largest range the scenario can draw (label normalization constant)."""
        return C0 * cfg.guard_duration / 2.0


def strongest_path_geometry(
    scenario: ScenarioConfig,
    realization: ChannelRealization,
    carrier_freq: float,
) -> tuple[float, float]:
    """(range_m, velocity_mps) of the strongest path, undoing the scenario's
    one-way or round-trip delay/Doppler convention."""
    p = max(realization.paths, key=lambda q: abs(q.gain))
    if scenario.kind in ("single-target", "multi-target"):
        return p.delay * C0 / 2.0, p.doppler * C0 / (2.0 * carrier_freq)
    return p.delay * C0, p.doppler * C0 / carrier_freq


def sample_training_channel(
    cfg: FrameConfig,
    scenario: ScenarioConfig,
    rng: RngStream,
) -> ChannelRealization:
    """Draw one channel realization with unit total mean path power.

    SNR and phase noise are applied separately so they can be swept without
    re-drawing geometry.
    """
    gen = rng.generator
    guard = cfg.guard_duration
    if guard <= 0:
        raise ValueError("scenario draws need a positive guard duration")
    r_max = scenario.max_range(cfg)

    def speed() -> float:
        if not scenario.with_doppler:
            return 0.0
        return float(gen.uniform(-scenario.max_speed, scenario.max_speed))

    if scenario.kind == "awgn":
        return ChannelRealization(paths=(PathSpec(gain=1.0 + 0j, delay=0.0),))

    if scenario.kind in ("single-target", "multi-target"):
        count = 1 if scenario.kind == "single-target" else scenario.n_targets
        amp = 1.0 / math.sqrt(count)
        paths = []
        for _ in range(count):
            r = float(gen.uniform(0.0, r_max))
            r = r if r > 0 else r_max  # open interval at 0
            delay, doppler = geometry_to_path("sensing", r, speed(), cfg.carrier_freq)
            phase = float(gen.uniform(0.0, 2.0 * math.pi))
            paths.append(PathSpec(gain=amp * np.exp(1j * phase), delay=delay, doppler=doppler))
        return ChannelRealization(paths=tuple(paths))

    # multipath-comm: LoS plus reflections, one-way geometry
    if scenario.los_range == "random":
        tau_los = float(gen.uniform(0.0, guard / 2.0))
        tau_los = tau_los if tau_los > 0 else guard / 2.0
    else:
        tau_los = 0.0
    excess_span = guard - tau_los
    amps = [1.0]
    delays = [tau_los]
    for _ in range(scenario.n_nlos):
        loss_db = float(gen.normal(scenario.reflection_mean_db, scenario.reflection_std_db))
        amps.append(10.0 ** (loss_db / 20.0))
        ex = float(gen.uniform(0.0, excess_span))
        ex = ex if ex > 0 else excess_span
        delays.append(tau_los + ex)
    norm = math.sqrt(sum(a * a for a in amps))
    paths = []
    for a, d in zip(amps, delays):
        phase = float(gen.uniform(0.0, 2.0 * math.pi))
        doppler = geometry_to_path("comm", d * C0, speed(), cfg.carrier_freq)[1]
        paths.append(PathSpec(gain=(a / norm) * np.exp(1j * phase), delay=d, doppler=doppler))
    return ChannelRealization(paths=tuple(paths))
