"""Binary formats: checkpoint and dataset files must round-trip bit-exactly
and follow the documented layout (one JSON manifest/header line, then a flat
little-endian float32 blob with a fixed row stride)."""

import json

import numpy as np
import pytest

from isacsim.channel import ScenarioConfig
from isacsim.numerics import RngStream
from isacsim.nnrx.data import Dataset, deinterleave, generate_dataset, interleave
from isacsim.nnrx.mlp import Adam
from isacsim.nnrx.models import (build_block_receiver, build_tracker_receiver,
                                 load_checkpoint, save_checkpoint)
from isacsim.waveform import FrameConfig


def small_cfg(guard="cp", n_blocks=8, ref_spacing=4):
    if guard == "cp":
        return FrameConfig(n=16, block_size=8, n_blocks=n_blocks,
                           ref_spacing=ref_spacing, guard="cp", n_cp=4)
    return FrameConfig(n=16, block_size=8, n_blocks=n_blocks,
                       ref_spacing=ref_spacing, guard="fgi", n_fixed=2)


def tiny_receiver():
    return build_block_receiver(RngStream(1), block_size=8, k_data=8,
                                reference="received", group_symbols=4,
                                norm={"r_max": 2.5})


def test_interleave_round_trip():
    x = RngStream(0).generator.normal(size=(3, 5)) + 1j * RngStream(1).generator.normal(size=(3, 5))
    np.testing.assert_array_equal(deinterleave(interleave(x)), x)
    row = interleave(x)
    np.testing.assert_array_equal(row[..., 0::2], x.real)
    np.testing.assert_array_equal(row[..., 1::2], x.imag)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    receiver = tiny_receiver()
    # make batch-norm running statistics non-trivial before saving
    x = RngStream(3).generator.normal(size=(16, 32)).astype(np.float32)
    for m in receiver.models:
        m.forward(x, training=True)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, receiver)
    loaded, opt = load_checkpoint(path)
    assert opt is None
    assert loaded.kind == receiver.kind
    assert loaded.norm == receiver.norm
    assert len(loaded.models) == len(receiver.models)
    for a, b in zip(receiver.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a, b)
    for ma, mb in zip(receiver.models, loaded.models):
        for la, lb in zip(ma.layers(), mb.layers()):
            assert la.activation == lb.activation
            if la.bn is not None:
                np.testing.assert_array_equal(la.bn.running_mean, lb.bn.running_mean)
                np.testing.assert_array_equal(la.bn.running_var, lb.bn.running_var)


def test_checkpoint_preserves_adam_state(tmp_path):
    receiver = tiny_receiver()
    params = receiver.parameters()
    opt = Adam(params, lr=1e-3)
    grads = [np.full_like(p, 0.01) for p in params]
    opt.step(params, grads)
    opt.step(params, grads)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, receiver, optimizer=opt)
    _, opt2 = load_checkpoint(path)
    assert opt2 is not None and opt2.t == 2
    for a, b in zip(opt.m, opt2.m):
        np.testing.assert_allclose(a, b.astype(a.dtype), rtol=1e-6)
    for a, b in zip(opt.v, opt2.v):
        np.testing.assert_allclose(a, b.astype(a.dtype), rtol=1e-6)


def test_checkpoint_layout_is_manifest_line_plus_float32_blob(tmp_path):
    receiver = tiny_receiver()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, receiver)
    raw = path.read_bytes()
    line, blob = raw.split(b"\n", 1)
    manifest = json.loads(line.decode("ascii"))
    assert manifest["format"] == "mlp-checkpoint-v1"
    assert manifest["kind"] == "block-equalizer"
    assert manifest["adam"] is False
    n_values = sum(p.size for p in receiver.parameters())
    n_stats = sum(2 * l.bn.running_mean.size for m in receiver.models
                  for l in m.layers() if l.bn is not None)
    assert len(blob) == 4 * (n_values + n_stats)
    first_w = np.frombuffer(blob[:receiver.models[0].shared[0].w.size * 4], dtype="<f4")
    np.testing.assert_array_equal(
        first_w.reshape(receiver.models[0].shared[0].w.shape),
        receiver.models[0].shared[0].w)


def test_checkpoint_truncated_blob_rejected(tmp_path):
    receiver = tiny_receiver()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, receiver)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="shorter"):
        load_checkpoint(path)


def make_dataset(n=20, fdim=6, cdim=4, seed=0):
    gen = RngStream(seed).generator
    return Dataset(
        features=gen.normal(size=(n, fdim)).astype(np.float32),
        comm=gen.normal(size=(n, cdim)).astype(np.float32),
        ranges=gen.uniform(0, 1, size=n).astype(np.float32),
        velocities=gen.uniform(-1, 1, size=n).astype(np.float32),
        meta={"r_max": 3.0, "v_max": 2.0, "seed": seed, "schema": "block"},
    )


def test_dataset_round_trip_bit_exact(tmp_path):
    ds = make_dataset()
    path = tmp_path / "train.ds"
    ds.save(path)
    back = Dataset.load(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.comm, ds.comm)
    np.testing.assert_array_equal(back.ranges, ds.ranges)
    np.testing.assert_array_equal(back.velocities, ds.velocities)
    assert back.meta["r_max"] == 3.0


def test_dataset_header_and_stride(tmp_path):
    ds = make_dataset(n=7, fdim=5, cdim=3)
    path = tmp_path / "d.ds"
    ds.save(path)
    raw = path.read_bytes()
    line, blob = raw.split(b"\n", 1)
    header = json.loads(line.decode("ascii"))
    assert header["format"] == "nn-dataset-v1"
    assert header["count"] == 7
    assert header["feature_dim"] == 5
    assert header["comm_dim"] == 3
    assert len(blob) == 7 * (5 + 3 + 2) * 4
    row0 = np.frombuffer(blob[:40], dtype="<f4")
    np.testing.assert_array_equal(row0[:5], ds.features[0])
    np.testing.assert_array_equal(row0[5:8], ds.comm[0])
    assert row0[8] == ds.ranges[0]
    assert row0[9] == ds.velocities[0]


def test_dataset_payload_mismatch_rejected(tmp_path):
    ds = make_dataset()
    path = tmp_path / "d.ds"
    ds.save(path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError, match="does not match"):
        Dataset.load(path)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        make_dataset(n=0)


def test_split_is_disjoint_and_deterministic():
    ds = make_dataset(n=50)
    tr1, te1 = ds.split(0.2, RngStream(5))
    tr2, te2 = ds.split(0.2, RngStream(5))
    assert len(te1) == 10 and len(tr1) == 40
    np.testing.assert_array_equal(tr1.features, tr2.features)
    np.testing.assert_array_equal(te1.features, te2.features)
    pooled = np.vstack([tr1.features, te1.features])
    assert pooled.shape == ds.features.shape
    # every original row appears exactly once
    orig = {tuple(r) for r in ds.features.tolist()}
    again = {tuple(r) for r in pooled.tolist()}
    assert orig == again


def test_generate_dataset_block_schema_shapes_and_ranges():
    cfg = small_cfg()
    scenario = ScenarioConfig(kind="single-target", with_doppler=True)
    ds = generate_dataset(cfg, scenario, 6, RngStream(2), schema="block",
                          snr_db=(5.0, 15.0))
    assert len(ds) == 6 * cfg.m_db
    assert ds.features.shape[1] == 4 * cfg.block_size
    assert ds.comm.shape[1] == 2 * cfg.k_data
    assert np.all((ds.ranges >= 0) & (ds.ranges <= 1))
    assert np.all((ds.velocities >= -1) & (ds.velocities <= 1))
    # symbol labels are QPSK components
    np.testing.assert_allclose(np.abs(ds.comm), 2.0 ** -0.5, rtol=1e-6)


def test_generate_dataset_subcarrier_schema_shapes():
    cfg = small_cfg(n_blocks=12, ref_spacing=3)
    scenario = ScenarioConfig(kind="multipath-comm", n_nlos=2, with_doppler=True)
    ds = generate_dataset(cfg, scenario, 5, RngStream(4), schema="subcarrier",
                          snr_db=20.0)
    assert len(ds) == 5 * cfg.block_size
    assert ds.features.shape[1] == 2 * cfg.m_rb
    assert ds.comm.shape[1] == 2 * cfg.m_db
    assert ds.meta["cfr_scale"] > 0
    mags = np.abs(deinterleave(ds.comm.astype(np.float64)))
    assert np.max(mags) <= 1.0 + 1e-6


def test_generate_dataset_rejects_empty():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        generate_dataset(cfg, ScenarioConfig(kind="awgn"), 0, RngStream(0))


def test_build_block_receiver_group_arithmetic():
    r = build_block_receiver(RngStream(0), block_size=32, k_data=32)
    assert len(r.models) == 4  # 32 symbols in groups of 8
    assert r.models[0].shared[0].in_dim == 4 * 32
    assert r.models[0].comm[-1].out_dim == 16
    with pytest.raises(ValueError, match="groups"):
        build_block_receiver(RngStream(0), block_size=32, k_data=30)


def test_build_tracker_receiver_dims():
    r = build_tracker_receiver(RngStream(0), m_rb=32, m_db=288)
    assert r.models[0].shared[0].in_dim == 64
    assert r.models[0].comm[-1].out_dim == 2 * 288
    assert r.models[0].sense[-1].out_dim == 1
    assert r.models[0].sense[-1].activation == "tanh"
