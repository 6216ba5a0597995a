"""Training-loop semantics: the zero-learning-rate identity, history
bookkeeping, determinism, loss accounting against direct forward passes,
and hand-valued metrics for constant-output receivers."""

import numpy as np
import pytest

from isacsim.channel import ScenarioConfig
from isacsim.numerics import RngStream
from isacsim.nnrx.data import generate_dataset
from isacsim.nnrx.models import (build_block_receiver, build_tracker_receiver,
                                 build_velocity_receiver, combine_two_level)
from isacsim.nnrx.train import (eval_losses, evaluate, receiver_outputs, train)
from isacsim.rxdsp import demap_to_freq
from isacsim.waveform import FrameConfig, transmit

AWGN = ScenarioConfig(kind="awgn")


def tiny_cfg(**kw):
    base = dict(n=16, block_size=8, n_blocks=4, ref_spacing=4, guard="cp", n_cp=4)
    base.update(kw)
    return FrameConfig(**base)


def tiny_dataset(n_frames=60, seed=0, **gen_kw):
    cfg = tiny_cfg()
    kw = dict(schema="block", snr_db=(20.0,), reference="received")
    kw.update(gen_kw)
    return generate_dataset(cfg, AWGN, n_frames, RngStream(seed), **kw)


def tiny_receiver(seed=1):
    cfg = tiny_cfg()
    return build_block_receiver(RngStream(seed), cfg.block_size, cfg.k_data,
                                reference="received", group_symbols=cfg.k_data,
                                norm={"r_max": 2.0})


def zero_all_dense(receiver):
    for model in receiver.models:
        for layer in model.layers():
            layer.w[:] = 0.0
            layer.b[:] = 0.0


# ----------------------------------------------------------------- train ---

def test_zero_learning_rate_keeps_parameters_bit_exact():
    ds = tiny_dataset(30)
    r = tiny_receiver()
    before = [p.copy() for p in r.parameters()]
    train(r, ds, epochs=2, rng=RngStream(2), lr=0.0)
    for old, new in zip(before, r.parameters()):
        np.testing.assert_array_equal(old, new)


def test_history_rows_and_epoch_zero_baseline():
    ds = tiny_dataset(30)
    r = tiny_receiver()
    history, _ = train(r, ds, epochs=3, rng=RngStream(3))
    assert [row["epoch"] for row in history] == [0, 1, 2, 3]
    for row in history:
        assert set(row) == {"epoch", "train_loss_c", "train_loss_s",
                            "test_loss_c", "test_loss_s"}
        assert all(np.isfinite(v) for v in row.values())
    baseline_only, _ = train(tiny_receiver(), ds, epochs=0, rng=RngStream(3))
    assert len(baseline_only) == 1 and baseline_only[0]["epoch"] == 0


def test_training_reduces_both_losses():
    ds = tiny_dataset(120)
    r = tiny_receiver()
    history, _ = train(r, ds, epochs=12, rng=RngStream(4), lr=1e-3)
    assert history[-1]["train_loss_c"] < 0.5 * history[0]["train_loss_c"]
    assert history[-1]["train_loss_s"] < 0.5 * history[0]["train_loss_s"]


def test_training_is_deterministic():
    ds = tiny_dataset(40)

    def run():
        r = tiny_receiver(seed=7)
        history, _ = train(r, ds, epochs=3, rng=RngStream(8), lr=1e-3)
        return history, [p.copy() for p in r.parameters()]

    h1, p1 = run()
    h2, p2 = run()
    assert h1 == h2
    for a, b in zip(p1, p2):
        np.testing.assert_array_equal(a, b)


def test_optimizer_reuse_continues_state_and_overrides_lr():
    ds = tiny_dataset(30)
    r = tiny_receiver()
    _, opt = train(r, ds, epochs=1, rng=RngStream(9), lr=1e-3)
    steps = opt.t
    assert steps > 0 and opt.lr == 1e-3
    _, opt2 = train(r, ds, epochs=1, rng=RngStream(10), lr=5e-4, optimizer=opt)
    assert opt2 is opt
    assert opt.lr == 5e-4
    assert opt.t == 2 * steps


def test_train_validation():
    ds = tiny_dataset(10)
    with pytest.raises(ValueError):
        train(tiny_receiver(), ds, epochs=-1, rng=RngStream(0))
    with pytest.raises(ValueError):
        train(tiny_receiver(), ds, epochs=1, rng=RngStream(0), batch_size=1)


def test_loss_weights_are_stored():
    ds = tiny_dataset(10)
    r = tiny_receiver()
    train(r, ds, epochs=1, rng=RngStream(11), loss_weights=(2.0, 0.5))
    assert r.loss_weights == (2.0, 0.5)


# --------------------------------------------------------------- metrics ---

def test_eval_losses_match_direct_forward():
    ds = tiny_dataset(25)
    r = tiny_receiver()
    loss_c, loss_s = eval_losses(r, ds, 1.0, 1.0)
    comm_out, sense_out = r.models[0].forward(ds.features.astype(np.float32),
                                              training=False)
    assert loss_c == pytest.approx(np.mean((comm_out - ds.comm) ** 2), rel=1e-6)
    assert loss_s == pytest.approx(
        np.mean((sense_out - ds.ranges[:, None]) ** 2), rel=1e-6)


def test_zeroed_receiver_metrics_have_closed_form():
    # all-zero dense layers leave fresh batch-norm stats untouched, so the
    # symbol branch outputs tanh(0)=0 and the sensing branch sigmoid(0)=0.5
    ds = tiny_dataset(40)
    r = tiny_receiver()
    zero_all_dense(r)
    m = evaluate(r, ds)
    expected_ber = float(np.mean(ds.comm < 0))
    assert m["ber"] == pytest.approx(expected_ber, abs=1e-12)
    expected_rmse = float(np.sqrt(np.mean((0.5 - ds.ranges) ** 2))) * ds.meta["r_max"]
    assert m["range_rmse_m"] == pytest.approx(expected_rmse, rel=1e-6)


def test_zeroed_velocity_estimator_rmse():
    cfg = tiny_cfg(n_blocks=8)
    ds = generate_dataset(cfg, ScenarioConfig(kind="single-target", with_doppler=True),
                          40, RngStream(12), schema="subcarrier", snr_db=(20.0,))
    r = build_velocity_receiver(RngStream(13), m_rb=len(cfg.ref_positions),
                                norm={"v_max": ds.meta["v_max"]})
    zero_all_dense(r)
    m = evaluate(r, ds)
    expected = float(np.sqrt(np.mean(ds.velocities ** 2))) * ds.meta["v_max"]
    assert m["velocity_rmse_mps"] == pytest.approx(expected, rel=1e-6)
    assert "ber" not in m


# ------------------------------------------------------- frame inference ---

def test_receiver_outputs_shapes_and_determinism():
    cfg = tiny_cfg()
    r = tiny_receiver()
    frame = transmit(cfg, rng=RngStream(14))
    freq = demap_to_freq(cfg, frame.time_samples).freq_blocks
    out1 = receiver_outputs(r, cfg, freq)
    out2 = receiver_outputs(r, cfg, freq)
    assert out1["bits"].size == cfg.bits_per_frame()
    assert out1["bits"].dtype == np.uint8
    assert 0.0 <= out1["range_m"] <= r.norm["r_max"]
    np.testing.assert_array_equal(out1["bits"], out2["bits"])
    assert out1["range_m"] == out2["range_m"]


def test_two_level_receiver_emits_all_outputs():
    cfg = tiny_cfg()
    m_rb, m_db = len(cfg.ref_positions), len(cfg.data_positions)
    tracker = build_tracker_receiver(RngStream(15), m_rb, m_db,
                                     norm={"cfr_scale": 1.5, "v_max": 3.0})
    equalizer = build_block_receiver(RngStream(16), cfg.block_size, cfg.k_data,
                                     reference="cfr", group_symbols=cfg.k_data,
                                     norm={"r_max": 2.0})
    two = combine_two_level(tracker, equalizer)
    assert two.kind == "two-level"
    assert two.meta["reference"] == "cfr"
    assert two.norm == {"r_max": 2.0, "cfr_scale": 1.5, "v_max": 3.0}

    frame = transmit(cfg, rng=RngStream(17))
    freq = demap_to_freq(cfg, frame.time_samples).freq_blocks
    out = receiver_outputs(two, cfg, freq)
    assert out["bits"].size == cfg.bits_per_frame()
    assert np.isfinite(out["range_m"]) and np.isfinite(out["velocity_mps"])
    assert abs(out["velocity_mps"]) <= 3.0


def test_receiver_outputs_unknown_kind():
    cfg = tiny_cfg()
    r = tiny_receiver()
    r.kind = "cascade"
    frame = transmit(cfg, rng=RngStream(18))
    freq = demap_to_freq(cfg, frame.time_samples).freq_blocks
    with pytest.raises(ValueError):
        receiver_outputs(r, cfg, freq)


def test_comm_slice_mismatch_detected():
    ds = tiny_dataset(10)
    cfg = tiny_cfg()
    wrong = build_block_receiver(RngStream(19), cfg.block_size, cfg.k_data,
                                 reference="received", group_symbols=4)
    # two group models of 8 outputs fit 16 label columns; force a mismatch
    bad = build_block_receiver(RngStream(20), cfg.block_size, 6,
                               reference="received", group_symbols=6)
    with pytest.raises(ValueError):
        eval_losses(bad, ds, 1.0, 1.0)
    eval_losses(wrong, ds, 1.0, 1.0)  # matching split works
