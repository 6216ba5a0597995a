"""Training datasets for the learned receiver: feature construction from
received frames, label normalization, and a stable binary file format.

A dataset file is one JSON header line (schema, dimensions, count,
normalization constants, seed) followed by fixed-stride rows of little-endian
float32 values: features, then symbol labels, then the normalized range and
velocity labels.

Schemas
-------
- ``block``: one row per data block.  Features are the received data-block
  bins, optionally preceded by the latest received reference block (or by a
  channel-response estimate supplied by a subcarrier tracker); symbol labels
  are the transmitted pre-spreading symbol components.
- ``subcarrier``: one row per subcarrier.  Features are that subcarrier's
  received reference bins across the frame; symbol labels are the true
  channel response at the data blocks, scaled by ``cfr_scale``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import channel as ch
from ..numerics import RngStream, qam_map
from ..rxdsp import demap_to_freq
from ..waveform import FrameConfig, modulate, assemble_frame

DATASET_FORMAT = "nn-dataset-v1"


def interleave(values: np.ndarray) -> np.ndarray:
    """Complex (..., w) -> real (..., 2w) with re/im pairs adjacent."""
    values = np.asarray(values, dtype=complex)
    out = np.empty(values.shape[:-1] + (2 * values.shape[-1],), dtype=np.float64)
    out[..., 0::2] = values.real
    out[..., 1::2] = values.imag
    return out


def deinterleave(values: np.ndarray) -> np.ndarray:
    """Real (..., 2w) -> complex (..., w), inverse of interleave."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] % 2:
        raise ValueError("interleaved width must be even")
    return values[..., 0::2] + 1j * values[..., 1::2]


@dataclass
class Dataset:
    """Feature/label rows plus the constants needed to undo normalization."""

    features: np.ndarray
    comm: np.ndarray
    ranges: np.ndarray
    velocities: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if n == 0:
            raise ValueError("dataset must not be empty")
        if not (self.comm.shape[0] == self.ranges.shape[0] == self.velocities.shape[0] == n):
            raise ValueError("feature/label row counts differ")

    def __len__(self) -> int:
        return self.features.shape[0]

    def save(self, path) -> None:
        n, fdim = self.features.shape
        cdim = self.comm.shape[1]
        header = {
            "format": DATASET_FORMAT,
            "count": n,
            "feature_dim": fdim,
            "comm_dim": cdim,
            "r_max": self.meta.get("r_max", 0.0),
            "v_max": self.meta.get("v_max", 0.0),
            "seed": self.meta.get("seed"),
            "meta": self.meta,
        }
        rows = np.hstack([
            self.features.astype("<f4"),
            self.comm.astype("<f4"),
            self.ranges.astype("<f4")[:, None],
            self.velocities.astype("<f4")[:, None],
        ])
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("ascii"))
            blob = fh.read()
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"unrecognized dataset format in {path}")
        n, fdim, cdim = header["count"], header["feature_dim"], header["comm_dim"]
        stride = fdim + cdim + 2
        flat = np.frombuffer(blob, dtype="<f4")
        if flat.size != n * stride:
            raise ValueError("dataset payload does not match its header")
        rows = flat.reshape(n, stride)
        return cls(
            features=rows[:, :fdim].astype(np.float32),
            comm=rows[:, fdim:fdim + cdim].astype(np.float32),
            ranges=rows[:, fdim + cdim].astype(np.float32),
            velocities=rows[:, fdim + cdim + 1].astype(np.float32),
            meta=header.get("meta", {}),
        )

    def split(self, test_fraction: float, rng: RngStream) -> tuple["Dataset", "Dataset"]:
        """Shuffle rows and split off a held-out test set."""
        if not 0.0 < test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        n = len(self)
        perm = rng.generator.permutation(n)
        n_test = max(1, int(round(n * test_fraction)))
        if n_test >= n:
            raise ValueError("split leaves no training rows")
        test, train = perm[:n_test], perm[n_test:]

        def pick(idx):
            return Dataset(self.features[idx], self.comm[idx], self.ranges[idx],
                           self.velocities[idx], dict(self.meta))

        return pick(train), pick(test)


def block_feature_rows(cfg: FrameConfig, freq_blocks: np.ndarray,
                       reference: str = "received",
                       cfr_rows: np.ndarray | None = None) -> np.ndarray:
    """Features for the per-block model: one row per data block.

    reference: "received" prepends the latest received reference block,
    "cfr" prepends the caller-supplied channel-response row for that data
    block, "none" uses the data block alone.
    """
    data = freq_blocks[cfg.data_positions]
    if reference == "none":
        return interleave(data)
    if reference == "received":
        ref_idx = cfg.data_positions // cfg.ref_spacing
        refs = freq_blocks[cfg.ref_positions][ref_idx]
        return np.hstack([interleave(refs), interleave(data)])
    if reference == "cfr":
        if cfr_rows is None or cfr_rows.shape != data.shape:
            raise ValueError("cfr reference needs one response row per data block")
        return np.hstack([interleave(data), interleave(cfr_rows)])
    raise ValueError(f"unknown reference mode {reference!r}")


def subcarrier_feature_rows(cfg: FrameConfig, freq_blocks: np.ndarray) -> np.ndarray:
    """Features for the per-subcarrier model: one row per subcarrier, holding
    that subcarrier's received reference bins across the frame."""
    refs = freq_blocks[cfg.ref_positions]  # (m_rb, block_size)
    return interleave(refs.T)  # (block_size, 2*m_rb)


def predict_cfr_rows(tracker, cfg: FrameConfig, freq_blocks: np.ndarray) -> np.ndarray:
    """Channel-response rows (m_db, block_size) predicted by a subcarrier
    tracker from a frame's received bins, denormalized by its cfr_scale."""
    rows = subcarrier_feature_rows(cfg, freq_blocks).astype(np.float32)
    comm_out, _ = tracker.models[0].forward(rows, training=False)
    scale = tracker.norm.get("cfr_scale", 1.0)
    return (deinterleave(comm_out) * scale).T


def _frame_symbol_labels(cfg: FrameConfig, payload_bits: np.ndarray, spread: bool) -> np.ndarray:
    per = cfg.k_data if spread else cfg.block_size
    symbols = qam_map(payload_bits).reshape(cfg.m_db, per)
    return interleave(symbols)


def _draw(choice, gen) -> float | None:
    if choice is None:
        return None
    arr = np.atleast_1d(np.asarray(choice, dtype=float))
    return float(arr[gen.integers(arr.size)])


def _draw_pn(pn_range, gen) -> float:
    if pn_range is None:
        return 0.0
    lo, hi = (pn_range, pn_range) if np.isscalar(pn_range) else pn_range
    if lo < 0 or hi < lo:
        raise ValueError("phase-noise range must satisfy 0 <= lo <= hi")
    if hi == lo:
        return float(lo)
    if lo <= 0:
        raise ValueError("log-uniform phase-noise draw needs lo > 0")
    return float(np.exp(gen.uniform(np.log(lo), np.log(hi))))


def generate_dataset(
    cfg: FrameConfig,
    scenario: ch.ScenarioConfig,
    n_frames: int,
    rng: RngStream,
    *,
    schema: str = "block",
    snr_db=(10.0,),
    pn_range=None,
    spread: bool = True,
    reference: str = "received",
    tracker=None,
    block_doppler: bool = True,
) -> Dataset:
    """Run the full pipeline per frame and collect feature/label rows.

    Per frame this draws a channel, an SNR from `snr_db`, and a phase-noise
    variance from `pn_range` (log-uniform when a (lo, hi) pair).  With
    reference="cfr" the per-block features use predictions from the supplied
    subcarrier `tracker` instead of raw reference bins.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if schema not in ("block", "subcarrier"):
        raise ValueError(f"unknown dataset schema {schema!r}")
    if reference == "cfr" and tracker is None:
        raise ValueError("reference='cfr' needs a tracker model")

    r_max = scenario.max_range(cfg)
    v_max = scenario.max_speed if scenario.max_speed > 0 else 1.0
    feats, comms, rgs, vels = [], [], [], []
    for i in range(n_frames):
        frame_rng = rng.derive(i)
        gen = frame_rng.derive("draws").generator
        realization = ch.sample_training_channel(cfg, scenario, frame_rng.derive("channel"))
        frame = assemble_frame(cfg, rng=frame_rng.derive("bits"), spread=spread)
        tx = modulate(cfg, frame)
        rx = ch.apply_channel(cfg, realization, tx, block_doppler=block_doppler)
        pn_var = _draw_pn(pn_range, gen)
        if pn_var > 0:
            rx = ch.apply_phase_noise(rx, pn_var, frame_rng.derive("pn"))
        rx = ch.add_awgn(rx, _draw(snr_db, gen), frame_rng.derive("noise"))
        freq = demap_to_freq(cfg, rx).freq_blocks

        range_m, velocity = ch.strongest_path_geometry(scenario, realization, cfg.carrier_freq)
        r_norm = range_m / r_max
        v_norm = velocity / v_max

        if schema == "block":
            if reference == "cfr":
                cfr_rows = predict_cfr_rows(tracker, cfg, freq)
                rows = block_feature_rows(cfg, freq, "cfr", cfr_rows)
            else:
                rows = block_feature_rows(cfg, freq, reference)
            comm = _frame_symbol_labels(cfg, frame.payload_bits, spread)
        else:
            rows = subcarrier_feature_rows(cfg, freq)
            h = ch.frequency_response(cfg, realization, cfg.data_positions)
            comm = interleave(h.T)  # (block_size, 2*m_db), unscaled response
        feats.append(rows)
        comms.append(comm)
        rgs.append(np.full(rows.shape[0], r_norm))
        vels.append(np.full(rows.shape[0], v_norm))

    features = np.vstack(feats).astype(np.float32)
    comm = np.vstack(comms)
    meta = {
        "schema": schema,
        "scenario": scenario.kind,
        "r_max": r_max,
        "v_max": v_max,
        "seed": rng.seed,
        "snr_db": None if snr_db is None else list(np.atleast_1d(snr_db).astype(float)),
        "spread": spread,
        "reference": reference if schema == "block" else None,
        "n": cfg.n,
        "block_size": cfg.block_size,
        "n_blocks": cfg.n_blocks,
        "ref_spacing": cfg.ref_spacing,
        "guard": cfg.guard,
        "n_cp": cfg.n_cp,
        "n_fixed": cfg.n_fixed,
        "m_rb": cfg.m_rb,
        "m_db": cfg.m_db,
        "k_data": cfg.k_data if spread else cfg.block_size,
        "cfr_scale": 1.0,
    }
    if schema == "subcarrier":
        magnitudes = np.abs(deinterleave(comm))
        scale = float(np.max(magnitudes))
        meta["cfr_scale"] = scale if scale > 0 else 1.0
        comm = comm / meta["cfr_scale"]
    return Dataset(features=features, comm=comm.astype(np.float32),
                   ranges=np.concatenate(rgs).astype(np.float32),
                   velocities=np.concatenate(vels).astype(np.float32),
                   meta=meta)
