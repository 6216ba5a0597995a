"""Training loop, metric evaluation and frame-level inference for the
learned receiver ensembles.

History semantics: one row is recorded before training (epoch 0) and one
after each epoch, each holding the symbol-recovery and sensing losses on the
training and held-out sets, evaluated in inference mode (running batch-norm
statistics).  For per-group ensembles the symbol loss is the MSE over the
full label matrix and the sensing loss is the mean of the per-model MSEs
(each model regresses the same sensing label).
"""

from __future__ import annotations

import numpy as np

from ..numerics import RngStream
from ..waveform import FrameConfig
from .data import (Dataset, block_feature_rows, deinterleave, predict_cfr_rows,
                   subcarrier_feature_rows)
from .mlp import Adam, multitask_loss_grads
from .models import ReceiverModel

SENSE_KIND = {
    "block-equalizer": "range",
    "range-estimator": "range",
    "subcarrier-tracker": "velocity",
    "velocity-estimator": "velocity",
}


def _comm_slices(receiver: ReceiverModel, comm_dim: int) -> list[slice | None]:
    """Column ownership of the symbol-label matrix, one entry per model."""
    models = receiver.models
    if all(m.comm is None for m in models):
        return [None] * len(models)
    if len(models) == 1:
        if models[0].comm[-1].out_dim != comm_dim:
            raise ValueError("model symbol output does not match the labels")
        return [slice(None)]
    width, rem = divmod(comm_dim, len(models))
    if rem:
        raise ValueError("symbol labels do not split evenly across the group models")
    for m in models:
        if m.comm[-1].out_dim != width:
            raise ValueError("group model output width does not match its label slice")
    return [slice(g * width, (g + 1) * width) for g in range(len(models))]


def _sense_labels(receiver: ReceiverModel, dataset: Dataset) -> np.ndarray | None:
    if all(m.sense is None for m in receiver.models):
        return None
    kind = SENSE_KIND[receiver.kind]
    col = dataset.ranges if kind == "range" else dataset.velocities
    return col.astype(np.float32)[:, None]


def eval_losses(receiver: ReceiverModel, dataset: Dataset,
                a1: float, a2: float) -> tuple[float, float]:
    """(symbol loss, sensing loss) in inference mode over the whole set."""
    x = dataset.features.astype(np.float32)
    slices = _comm_slices(receiver, dataset.comm.shape[1])
    sense_lbl = _sense_labels(receiver, dataset)
    c_sq_sum = c_count = 0.0
    s_losses = []
    for model, sl in zip(receiver.models, slices):
        comm_out, sense_out = model.forward(x, training=False)
        if comm_out is not None:
            d = comm_out - dataset.comm[:, sl]
            c_sq_sum += float(np.sum(d * d))
            c_count += d.size
        if sense_out is not None:
            d = sense_out - sense_lbl
            s_losses.append(float(np.mean(d * d)))
    loss_c = c_sq_sum / c_count if c_count else 0.0
    loss_s = float(np.mean(s_losses)) if s_losses else 0.0
    return loss_c, loss_s


def train(
    receiver: ReceiverModel,
    train_set: Dataset,
    test_set: Dataset | None = None,
    *,
    epochs: int,
    rng: RngStream,
    batch_size: int = 128,
    lr: float = 1e-3,
    loss_weights: tuple[float, float] | None = None,
    optimizer: Adam | None = None,
) -> tuple[list[dict], Adam]:
    """Adam-train every model of the ensemble; returns (history, optimizer).

    Each batch is shared by all group models; the optimizer state spans the
    whole ensemble.  Incomplete trailing batches of fewer than two rows are
    skipped (batch statistics need at least two rows).
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    a1, a2 = loss_weights if loss_weights is not None else receiver.loss_weights
    receiver.loss_weights = (a1, a2)
    if test_set is None:
        test_set = train_set
    if optimizer is None:
        optimizer = Adam(receiver.parameters(), lr=lr)
    else:
        optimizer.lr = lr

    n = len(train_set)
    x_all = train_set.features.astype(np.float32)
    comm_all = train_set.comm
    slices = _comm_slices(receiver, comm_all.shape[1])
    sense_all = _sense_labels(receiver, train_set)

    def record(epoch: int) -> dict:
        tr_c, tr_s = eval_losses(receiver, train_set, a1, a2)
        te_c, te_s = eval_losses(receiver, test_set, a1, a2)
        return {"epoch": epoch, "train_loss_c": tr_c, "train_loss_s": tr_s,
                "test_loss_c": te_c, "test_loss_s": te_s}

    history = [record(0)]
    shuffle_rng = rng.derive("shuffle")
    for epoch in range(1, epochs + 1):
        perm = shuffle_rng.derive(epoch).generator.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            if idx.size < 2:
                continue
            x = x_all[idx]
            s_lbl = None if sense_all is None else sense_all[idx]
            for model, sl in zip(receiver.models, slices):
                comm_out, sense_out = model.forward(x, training=True)
                c_lbl = comm_all[idx][:, sl] if comm_out is not None else None
                dcomm, dsense = multitask_loss_grads(
                    comm_out, c_lbl, sense_out, s_lbl, a1, a2)
                model.backward(dcomm, dsense)
            optimizer.step(receiver.parameters(), receiver.gradients())
        history.append(record(epoch))
    return history, optimizer


def _components_to_bits(rows: np.ndarray) -> np.ndarray:
    """Interleaved symbol components -> hard-decision bits in payload order."""
    return (np.asarray(rows) < 0).astype(np.uint8).reshape(-1)


def evaluate(receiver: ReceiverModel, dataset: Dataset) -> dict:
    """Hard-decision BER plus denormalized sensing RMSEs over a dataset."""
    x = dataset.features.astype(np.float32)
    slices = _comm_slices(receiver, dataset.comm.shape[1])
    comm_parts: list[np.ndarray] = []
    sense_parts: list[np.ndarray] = []
    for model, sl in zip(receiver.models, slices):
        comm_out, sense_out = model.forward(x, training=False)
        if comm_out is not None:
            comm_parts.append(comm_out)
        if sense_out is not None:
            sense_parts.append(sense_out[:, 0])
    out: dict = {}
    if comm_parts:
        pred = np.hstack(comm_parts)
        bits_hat = _components_to_bits(pred)
        bits_ref = _components_to_bits(dataset.comm)
        out["ber"] = float(np.mean(bits_hat != bits_ref))
    if sense_parts:
        sense = np.mean(sense_parts, axis=0)
        kind = SENSE_KIND[receiver.kind]
        if kind == "range":
            r_max = dataset.meta.get("r_max", 1.0)
            err = (sense - dataset.ranges) * r_max
            out["range_rmse_m"] = float(np.sqrt(np.mean(err ** 2)))
        else:
            v_max = dataset.meta.get("v_max", 1.0)
            err = (sense - dataset.velocities) * v_max
            out["velocity_rmse_mps"] = float(np.sqrt(np.mean(err ** 2)))
    return out


def _tracker_view(receiver: ReceiverModel) -> ReceiverModel:
    return ReceiverModel(kind="subcarrier-tracker", models=[receiver.models[0]],
                         norm=receiver.norm, loss_weights=receiver.loss_weights)


def _equalizer_view(receiver: ReceiverModel) -> ReceiverModel:
    return ReceiverModel(kind="block-equalizer", models=receiver.models[1:],
                         norm=receiver.norm, loss_weights=receiver.loss_weights)


def receiver_outputs(receiver: ReceiverModel, cfg: FrameConfig,
                     freq_blocks: np.ndarray) -> dict:
    """Apply a trained receiver to one frame's received bins.

    Returns the recovered payload bits (when the receiver has a symbol
    branch) and/or denormalized range/velocity estimates.
    """
    kind = receiver.kind
    if kind == "two-level":
        tracker = _tracker_view(receiver)
        cfr_rows = predict_cfr_rows(tracker, cfg, freq_blocks)
        feats = block_feature_rows(cfg, freq_blocks, "cfr", cfr_rows).astype(np.float32)
        out = _apply_block_models(receiver.models[1:], feats, receiver.norm)
        t_out = _apply_subcarrier_model(receiver.models[0], cfg, freq_blocks, receiver.norm)
        out["velocity_mps"] = t_out["velocity_mps"]
        return out
    if kind in ("block-equalizer", "range-estimator"):
        reference = receiver.meta.get("reference", "received")
        feats = block_feature_rows(cfg, freq_blocks, reference).astype(np.float32)
        return _apply_block_models(receiver.models, feats, receiver.norm)
    if kind in ("subcarrier-tracker", "velocity-estimator"):
        return _apply_subcarrier_model(receiver.models[0], cfg, freq_blocks, receiver.norm)
    raise ValueError(f"unknown receiver kind {kind!r}")


def _apply_block_models(models, feats: np.ndarray, norm: dict) -> dict:
    comm_parts, sense_parts = [], []
    for model in models:
        comm_out, sense_out = model.forward(feats, training=False)
        if comm_out is not None:
            comm_parts.append(comm_out)
        if sense_out is not None:
            sense_parts.append(sense_out[:, 0])
    out: dict = {}
    if comm_parts:
        out["bits"] = _components_to_bits(np.hstack(comm_parts))
    if sense_parts:
        out["range_m"] = float(np.mean(sense_parts)) * norm.get("r_max", 1.0)
    return out


def _apply_subcarrier_model(model, cfg: FrameConfig, freq_blocks: np.ndarray,
                            norm: dict) -> dict:
    feats = subcarrier_feature_rows(cfg, freq_blocks).astype(np.float32)
    comm_out, sense_out = model.forward(feats, training=False)
    out: dict = {}
    if comm_out is not None:
        out["cfr_rows"] = (deinterleave(comm_out) * norm.get("cfr_scale", 1.0)).T
    if sense_out is not None:
        out["velocity_mps"] = float(np.mean(sense_out)) * norm.get("v_max", 1.0)
    return out
