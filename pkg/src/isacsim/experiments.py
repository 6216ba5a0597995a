"""Experiment drivers: PAPR statistics, Monte Carlo BER sweeps,
achievable-rate evaluation, sensing RMSE sweeps, and receiver
training/evaluation runs.  Every driver returns (columns, rows) ready for
CSV emission and is fully determined by (config, seed); Monte Carlo trials
draw from per-trial streams derived from the master seed so results do not
depend on the worker count."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channel import (ScenarioConfig, add_awgn, apply_channel,
                      apply_phase_noise, sample_training_channel,
                      strongest_path_geometry)
from .config import ConfigError, ExperimentConfig
from .numerics import RngStream
from .nnrx.data import generate_dataset
from .nnrx.models import (build_block_receiver, build_range_receiver,
                          build_tracker_receiver, build_velocity_receiver,
                          combine_two_level, load_checkpoint, save_checkpoint)
from .nnrx.train import receiver_outputs, train
from .rxdsp import demap_to_freq, ls_estimate, recover_bits
from .sensing import (SensingCfrMatrix, crlb_range_var, crlb_velocity_var,
                      estimate_range_periodogram, estimate_velocity_periodogram,
                      music_range, music_velocity)
from .waveform import FrameConfig, papr_per_block, transmit


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    """UTF-8 CSV with a header row; missing cells are empty strings."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="raise")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


# -------------------------------------------------------------------- papr ---

def _papr_frame_cfg(frame: FrameConfig, waveform: str) -> tuple[FrameConfig, bool]:
    if waveform == "si-cp":
        n_cp = frame.n_cp if frame.guard == "cp" else max(1, frame.n // 4)
        return replace(frame, guard="cp", n_cp=n_cp, n_fixed=0), True
    if waveform == "si-fgi":
        n_fixed = frame.n_fixed if frame.guard == "fgi" else max(1, frame.block_size // 4)
        return replace(frame, guard="fgi", n_cp=0, n_fixed=n_fixed), True
    if waveform == "ofdm":
        n_cp = frame.n_cp if frame.guard == "cp" else max(1, frame.n // 4)
        return replace(frame, block_size=frame.n, guard="cp", n_cp=n_cp, n_fixed=0), False
    raise ConfigError(f"unknown papr waveform {waveform!r}")


def run_papr(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    o = cfg.papr
    thresholds = np.round(np.arange(o.threshold_min_db, o.threshold_max_db + 1e-9, 0.1), 6)
    rows: list[dict] = []
    for waveform in o.waveforms:
        fcfg, spread = _papr_frame_cfg(cfg.frame, waveform)
        stream = RngStream(cfg.seed).derive("papr").derive(waveform)
        values: list[np.ndarray] = []
        count = 0
        frame_idx = 0
        while count < o.blocks:
            frame = transmit(fcfg, rng=stream.derive(frame_idx), spread=spread)
            p = papr_per_block(fcfg, frame, include_reference=False,
                               oversample=o.oversample)
            values.append(p)
            count += p.size
            frame_idx += 1
        papr_db = 10.0 * np.log10(np.concatenate(values)[: o.blocks])
        for thr in thresholds:
            rows.append({"waveform": waveform, "n": fcfg.n,
                         "threshold_db": float(thr),
                         "ccdf": float(np.mean(papr_db > thr))})
    return ["waveform", "n", "threshold_db", "ccdf"], rows


def ccdf_crossing(rows: list[dict], waveform: str, level: float = 1e-2) -> float:
    """Threshold (dB) where a waveform's CCDF curve crosses `level`,
    interpolated linearly in log10(ccdf)."""
    pts = sorted((r for r in rows if r["waveform"] == waveform and r["ccdf"] > 0),
                 key=lambda r: r["threshold_db"])
    for a, b in zip(pts, pts[1:]):
        if a["ccdf"] >= level >= b["ccdf"]:
            la, lb = math.log10(a["ccdf"]), math.log10(b["ccdf"])
            t = 0.0 if lb == la else (math.log10(level) - la) / (lb - la)
            return a["threshold_db"] + t * (b["threshold_db"] - a["threshold_db"])
    raise ValueError(f"ccdf of {waveform!r} never crosses {level}")


# --------------------------------------------------------------------- ber ---

def _ber_frame_cfg(frame: FrameConfig, waveform: str) -> tuple[FrameConfig, bool]:
    if waveform == "si":
        return frame, True
    if waveform == "ofdm":
        if frame.guard == "cp":
            return replace(frame, block_size=frame.n), False
        n_cp = max(1, frame.k_gi)
        return replace(frame, block_size=frame.n, guard="cp", n_cp=n_cp,
                       n_fixed=0), False
    raise ConfigError(f"unknown ber waveform {waveform!r}")


def _ber_trials(fcfg: FrameConfig, spread: bool, scenario: ScenarioConfig,
                methods: tuple[str, ...], snr_db: float, pn_var: float,
                block_doppler: bool, receiver, stream_key: tuple,
                trials: range) -> dict[str, int]:
    """Bit errors per method over the given trial indices (paired channels)."""
    errors = {m: 0 for m in methods}
    root = RngStream(stream_key[0])
    for label in stream_key[1:]:
        root = root.derive(label)
    for t in trials:
        rng = root.derive(t)
        realization = sample_training_channel(fcfg, scenario, rng.derive("channel"))
        frame = transmit(fcfg, rng=rng.derive("bits"), spread=spread)
        rx = apply_channel(fcfg, realization, frame.time_samples,
                           block_doppler=block_doppler)
        if pn_var > 0:
            rx = apply_phase_noise(rx, pn_var, rng.derive("pn"))
        rx = add_awgn(rx, snr_db, rng.derive("noise"))
        freq = None
        for method in methods:
            if method.startswith("nn"):
                if freq is None:
                    freq = demap_to_freq(fcfg, rx).freq_blocks
                bits = receiver_outputs(receiver, fcfg, freq)["bits"]
            else:
                bits = recover_bits(fcfg, rx, method=method, snr_db=snr_db,
                                    spread=spread)
            errors[method] += int(np.sum(bits != frame.payload_bits))
    return errors


def _load_ber_receiver(o):
    if not any(m.startswith("nn") for m in o.methods):
        return None
    receiver, _ = load_checkpoint(o.checkpoint)
    wanted = {"nn-level2": ("block-equalizer", "range-estimator"),
              "nn-two-level": ("two-level",)}
    for m in o.methods:
        if m in wanted and receiver.kind not in wanted[m]:
            raise ConfigError(
                f"[ber] checkpoint holds a {receiver.kind!r} receiver, "
                f"method {m!r} expects one of {wanted[m]}")
    return receiver


def run_ber(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    o = cfg.ber
    receiver = _load_ber_receiver(o)
    sweep = [(s, p) for s in o.snr_db for p in o.pn_variance]
    rows: list[dict] = []
    for waveform in o.waveforms:
        fcfg, spread = _ber_frame_cfg(cfg.frame, waveform)
        methods = tuple(m for m in o.methods
                        if waveform == "si" or not m.startswith("nn"))
        bits_per_frame = fcfg.bits_per_frame(spread)
        max_frames = max(1, math.ceil(o.max_bits / bits_per_frame))
        for idx, (snr_db, pn_var) in enumerate(sweep):
            key = (cfg.seed, "ber", waveform, idx)
            errors = {m: 0 for m in methods}
            done = 0
            batch = 64
            while done < max_frames:
                todo = range(done, min(done + batch, max_frames))
                if cfg.threads > 1 and len(todo) > 1:
                    parts = np.array_split(np.asarray(todo), cfg.threads)
                    with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                        futs = [pool.submit(_ber_trials, fcfg, spread, cfg.scenario,
                                            methods, snr_db, pn_var,
                                            o.block_doppler, receiver, key,
                                            range(int(p[0]), int(p[-1]) + 1))
                                for p in parts if p.size]
                        for f in futs:
                            for m, e in f.result().items():
                                errors[m] += e
                else:
                    part = _ber_trials(fcfg, spread, cfg.scenario, methods,
                                       snr_db, pn_var, o.block_doppler,
                                       receiver, key, todo)
                    for m, e in part.items():
                        errors[m] += e
                done = todo.stop
                if all(e >= o.target_errors for e in errors.values()):
                    break
            bits = done * bits_per_frame
            for m in methods:
                p = errors[m] / bits
                rows.append({
                    "waveform": waveform, "method": m, "snr_db": snr_db,
                    "sigma_theta2": pn_var, "ber": p, "trials": done,
                    "bit_errors": errors[m], "bits": bits,
                    "ber_stderr": math.sqrt(max(p * (1 - p), 0.0) / bits),
                })
    return (["waveform", "method", "snr_db", "sigma_theta2", "ber", "trials",
             "bit_errors", "bits", "ber_stderr"], rows)


# -------------------------------------------------------------------- rate ---

def run_rate(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    """Shannon-with-overhead model over the fixed-guard staircase.

    The adaptive scheme charges ceil(ds * N / T) / N of every block for a
    delay spread ds; one row per staircase cell (cell right edges), so the
    equal-weight row mean equals the exact uniform-draw mean over (0, T/4].
    """
    o = cfg.rate
    n = cfg.frame.n
    base = o.bandwidth_hz * math.log2(1.0 + 10.0 ** (o.snr_db / 10.0))
    cp_rate = base * (1.0 - o.t_cp_s / (o.t_sym_s + o.t_cp_s))
    cells = max(1, n // 4)
    rows: list[dict] = []
    for k in range(1, cells + 1):
        ds = k * o.t_sym_s / n
        rows.append({"scheme": "fgi", "delay_spread_s": ds,
                     "rate_bps": base * (1.0 - k / n)})
        rows.append({"scheme": "cp", "delay_spread_s": ds, "rate_bps": cp_rate})
    return ["scheme", "delay_spread_s", "rate_bps"], rows


# ------------------------------------------------------------------- sense ---

def _sense_trials(fcfg: FrameConfig, scenario: ScenarioConfig, axis: str,
                  estimators: tuple[str, ...], snr_db: float, zero_pad: int,
                  receiver, stream_key: tuple, trials: range) -> dict[str, list]:
    sq = {e: [] for e in estimators}
    root = RngStream(stream_key[0])
    for label in stream_key[1:]:
        root = root.derive(label)
    for t in trials:
        rng = root.derive(t)
        realization = sample_training_channel(fcfg, scenario, rng.derive("channel"))
        truth_r, truth_v = strongest_path_geometry(scenario, realization,
                                                   fcfg.carrier_freq)
        frame = transmit(fcfg, rng=rng.derive("bits"))
        rx = apply_channel(fcfg, realization, frame.time_samples, block_doppler=True)
        rx = add_awgn(rx, snr_db, rng.derive("noise"))
        rx_frame = demap_to_freq(fcfg, rx)
        cfr = SensingCfrMatrix.from_frame(ls_estimate(rx_frame), fcfg)
        for e in estimators:
            if e == "periodogram":
                if axis == "range":
                    est = estimate_range_periodogram(cfr, zero_pad=zero_pad)[0].range_m
                else:
                    est = estimate_velocity_periodogram(cfr, zero_pad=zero_pad)[0].velocity_mps
            elif e == "music":
                if axis == "range":
                    est = music_range(cfr, order=1)[0][0].range_m
                else:
                    est = music_velocity(cfr, order=1)[0][0].velocity_mps
            else:
                out = receiver_outputs(receiver, fcfg, rx_frame.freq_blocks)
                est = out["range_m"] if axis == "range" else out["velocity_mps"]
            truth = truth_r if axis == "range" else truth_v
            sq[e].append((est - truth) ** 2)
    return sq


def run_sense(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    o = cfg.sense
    fcfg = cfg.frame
    receiver = None
    if "nn" in o.estimators:
        receiver, _ = load_checkpoint(o.checkpoint)
    m_rb = len(fcfg.ref_positions)
    rows: list[dict] = []
    for idx, snr_db in enumerate(o.snr_db):
        key = (cfg.seed, "sense", o.axis, idx)
        if cfg.threads > 1 and o.trials > 1:
            parts = np.array_split(np.arange(o.trials), cfg.threads)
            sq = {e: [] for e in o.estimators}
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                futs = [pool.submit(_sense_trials, fcfg, cfg.scenario, o.axis,
                                    o.estimators, snr_db, o.zero_pad, receiver,
                                    key, range(int(p[0]), int(p[-1]) + 1))
                        for p in parts if p.size]
                for f in futs:
                    for e, v in f.result().items():
                        sq[e].extend(v)
        else:
            sq = _sense_trials(fcfg, cfg.scenario, o.axis, o.estimators, snr_db,
                               o.zero_pad, receiver, key, range(o.trials))
        # per-bin SNR: block energy L spreads over N samples, so the sample
        # SNR maps to bin SNR times N / L
        snr_bin = 10.0 ** (snr_db / 10.0) * fcfg.n / fcfg.block_size
        if o.axis == "range":
            crlb = math.sqrt(crlb_range_var(snr_bin, fcfg.block_size, m_rb,
                                            fcfg.subcarrier_spacing))
        else:
            crlb = math.sqrt(crlb_velocity_var(snr_bin, fcfg.block_size, m_rb,
                                               fcfg.ref_spacing * fcfg.t_block,
                                               fcfg.carrier_freq))
        for e in o.estimators:
            errs = np.asarray(sq[e])
            rmse = float(np.sqrt(np.mean(errs)))
            stderr = (float(np.std(errs) / (2 * rmse * np.sqrt(errs.size)))
                      if rmse > 0 else 0.0)
            rows.append({"estimator": e, "snr_db": snr_db, "rmse": rmse,
                         "trials": int(errs.size), "crlb_rmse": crlb,
                         "rmse_stderr": stderr})
    return (["estimator", "snr_db", "rmse", "trials", "crlb_rmse",
             "rmse_stderr"], rows)


# ------------------------------------------------------------- train / eval ---

def _train_stage(receiver, dataset, o, rng) -> list[dict]:
    tr, te = dataset.split(o.test_fraction, rng.derive("split"))
    weights = (o.loss_weight_comm, o.loss_weight_sense)
    history, opt = train(receiver, tr, te, epochs=o.epochs,
                         rng=rng.derive("fit"), batch_size=o.batch_size,
                         lr=o.lr, loss_weights=weights)
    if o.decay_epochs:
        more, _ = train(receiver, tr, te, epochs=o.decay_epochs,
                        rng=rng.derive("fit2"), batch_size=o.batch_size,
                        lr=o.decay_lr, loss_weights=weights, optimizer=opt)
        offset = history[-1]["epoch"]
        history += [{**row, "epoch": row["epoch"] + offset} for row in more[1:]]
    return history


def run_train(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    o = cfg.train
    frame = cfg.frame
    rng = RngStream(cfg.seed).derive("train")
    pn_range = (o.pn_low, o.pn_high) if o.pn_high > 0 else None
    m_rb, m_db = len(frame.ref_positions), len(frame.data_positions)
    rows: list[dict] = []

    def record(stage: str, history: list[dict]):
        for row in history:
            rows.append({"stage": stage, **row})

    if o.receiver in ("block", "range"):
        ds = generate_dataset(frame, cfg.scenario, o.n_frames, rng.derive("data"),
                              schema="block", snr_db=o.snr_db, pn_range=pn_range,
                              reference=o.reference)
        norm = {"r_max": ds.meta["r_max"]}
        if o.receiver == "block":
            receiver = build_block_receiver(rng.derive("model"), frame.block_size,
                                            frame.k_data, reference=o.reference,
                                            group_symbols=o.group_symbols, norm=norm)
        else:
            receiver = build_range_receiver(rng.derive("model"), frame.block_size,
                                            norm=norm)
        record("receiver", _train_stage(receiver, ds, o, rng.derive("stage")))
    elif o.receiver in ("tracker", "velocity"):
        ds = generate_dataset(frame, cfg.scenario, o.n_frames, rng.derive("data"),
                              schema="subcarrier", snr_db=o.snr_db,
                              pn_range=pn_range)
        norm = {"v_max": ds.meta["v_max"], "cfr_scale": ds.meta["cfr_scale"]}
        if o.receiver == "tracker":
            receiver = build_tracker_receiver(rng.derive("model"), m_rb, m_db,
                                              norm=norm)
        else:
            receiver = build_velocity_receiver(rng.derive("model"), m_rb, norm=norm)
        record("receiver", _train_stage(receiver, ds, o, rng.derive("stage")))
    elif o.receiver == "two-level":
        ds1 = generate_dataset(frame, cfg.scenario, o.n_frames, rng.derive("data1"),
                               schema="subcarrier", snr_db=o.snr_db,
                               pn_range=pn_range)
        tracker = build_tracker_receiver(
            rng.derive("model1"), m_rb, m_db,
            norm={"v_max": ds1.meta["v_max"], "cfr_scale": ds1.meta["cfr_scale"]})
        record("tracker", _train_stage(tracker, ds1, o, rng.derive("stage1")))
        ds2 = generate_dataset(frame, cfg.scenario, o.n_frames, rng.derive("data2"),
                               schema="block", snr_db=o.snr_db, pn_range=pn_range,
                               reference="cfr", tracker=tracker)
        equalizer = build_block_receiver(rng.derive("model2"), frame.block_size,
                                         frame.k_data, reference="cfr",
                                         group_symbols=o.group_symbols,
                                         norm={"r_max": ds2.meta["r_max"]})
        record("equalizer", _train_stage(equalizer, ds2, o, rng.derive("stage2")))
        receiver = combine_two_level(tracker, equalizer)
    else:
        raise ConfigError(f"[train] unknown receiver {o.receiver!r}")

    save_checkpoint(o.checkpoint, receiver)
    return (["stage", "epoch", "train_loss_c", "train_loss_s", "test_loss_c",
             "test_loss_s"], rows)


def run_eval(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    o = cfg.eval
    frame = cfg.frame
    receiver, _ = load_checkpoint(o.checkpoint)
    rows: list[dict] = []
    for idx, snr_db in enumerate(o.snr_db):
        root = RngStream(cfg.seed).derive("eval").derive(idx)
        bit_errors = bits = 0
        sq_r: list[float] = []
        sq_v: list[float] = []
        for t in range(o.n_frames):
            rng = root.derive(t)
            realization = sample_training_channel(frame, cfg.scenario,
                                                  rng.derive("channel"))
            truth_r, truth_v = strongest_path_geometry(cfg.scenario, realization,
                                                       frame.carrier_freq)
            tx = transmit(frame, rng=rng.derive("bits"))
            rx = apply_channel(frame, realization, tx.time_samples,
                               block_doppler=True)
            if o.pn_variance > 0:
                rx = apply_phase_noise(rx, o.pn_variance, rng.derive("pn"))
            rx = add_awgn(rx, snr_db, rng.derive("noise"))
            out = receiver_outputs(receiver, frame,
                                   demap_to_freq(frame, rx).freq_blocks)
            if "bits" in out:
                bit_errors += int(np.sum(out["bits"] != tx.payload_bits))
                bits += tx.payload_bits.size
            if "range_m" in out:
                sq_r.append((out["range_m"] - truth_r) ** 2)
            if "velocity_mps" in out:
                sq_v.append((out["velocity_mps"] - truth_v) ** 2)
        if bits:
            rows.append({"metric": "ber", "snr_db": snr_db,
                         "value": bit_errors / bits, "frames": o.n_frames,
                         "pn_variance": o.pn_variance})
        if sq_r:
            rows.append({"metric": "range_rmse_m", "snr_db": snr_db,
                         "value": float(np.sqrt(np.mean(sq_r))),
                         "frames": o.n_frames, "pn_variance": o.pn_variance})
        if sq_v:
            rows.append({"metric": "velocity_rmse_mps", "snr_db": snr_db,
                         "value": float(np.sqrt(np.mean(sq_v))),
                         "frames": o.n_frames, "pn_variance": o.pn_variance})
    return ["metric", "snr_db", "value", "frames", "pn_variance"], rows


RUNNERS = {"papr": run_papr, "ber": run_ber, "rate": run_rate,
           "sense": run_sense, "train": run_train, "eval": run_eval}
