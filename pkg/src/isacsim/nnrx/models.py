"""Model builders and checkpoint serialization for the learned receiver.

Architectures
-------------
- ``build_subcarrier_tracker``: one model applied per subcarrier. Input is a
  subcarrier's received reference bins across the frame (interleaved re/im);
  the symbol branch regresses that subcarrier's channel response at every
  data block (tanh output, scaled), the sensing branch regresses normalized
  velocity (tanh output).
- ``build_block_equalizer``: one model per group of data symbols. Input is a
  data block's received bins, optionally concatenated after a received
  reference block (interleaved re/im); the symbol branch regresses a group of
  transmitted symbol components (tanh), the sensing branch regresses
  normalized range (sigmoid).
- ``build_range_estimator`` / ``build_velocity_estimator``: single-task
  variants that keep only the sensing branch.

An ensemble of per-group models plus normalization constants is held in a
``ReceiverModel`` and stored as one manifest line (JSON) followed by a flat
little-endian float32 blob.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..numerics import RngStream
from .mlp import Adam, BatchNorm, DenseLayer, MultiTaskMlp

CHECKPOINT_FORMAT = "mlp-checkpoint-v1"

SHARED_WIDTHS = (500, 250)
COMM_HIDDEN = 120
SENSE_WIDTHS = (120, 60)
GROUP_SYMBOLS = 8


def _dense_stack(rng: RngStream, in_dim: int, widths: list[int],
                 activations: list[str], batchnorm: bool) -> list[DenseLayer]:
    layers = []
    prev = in_dim
    for i, (w, act) in enumerate(zip(widths, activations)):
        norm = batchnorm and act == "relu"
        layers.append(DenseLayer(prev, w, act, batchnorm=norm, rng=rng.derive(i)))
        prev = w
    return layers


def _build(rng: RngStream, in_dim: int, comm_out: int | None,
           sense_out: int | None, sense_activation: str = "tanh",
           batchnorm: bool = True) -> MultiTaskMlp:
    shared = _dense_stack(rng.derive("shared"), in_dim, list(SHARED_WIDTHS),
                          ["relu"] * len(SHARED_WIDTHS), batchnorm)
    comm = sense = None
    if comm_out is not None:
        comm = _dense_stack(rng.derive("comm"), SHARED_WIDTHS[-1],
                            [COMM_HIDDEN, comm_out], ["relu", "tanh"], batchnorm)
    if sense_out is not None:
        sense = _dense_stack(rng.derive("sense"), SHARED_WIDTHS[-1],
                             [*SENSE_WIDTHS, sense_out],
                             ["relu", "relu", sense_activation], batchnorm)
    return MultiTaskMlp(shared, comm, sense)


def build_subcarrier_tracker(rng: RngStream, m_rb: int, m_db: int) -> MultiTaskMlp:
    """Per-subcarrier model: 2*m_rb inputs -> (2*m_db channel values, velocity)."""
    return _build(rng, 2 * m_rb, 2 * m_db, 1, sense_activation="tanh")


def build_block_equalizer(rng: RngStream, block_size: int, with_reference: bool,
                          group_symbols: int = GROUP_SYMBOLS) -> MultiTaskMlp:
    """Per-block model: one group of symbols plus normalized range."""
    in_dim = (4 if with_reference else 2) * block_size
    return _build(rng, in_dim, 2 * group_symbols, 1, sense_activation="sigmoid")


def build_range_estimator(rng: RngStream, block_size: int,
                          with_reference: bool = True) -> MultiTaskMlp:
    in_dim = (4 if with_reference else 2) * block_size
    return _build(rng, in_dim, None, 1, sense_activation="sigmoid")


def build_velocity_estimator(rng: RngStream, m_rb: int) -> MultiTaskMlp:
    return _build(rng, 2 * m_rb, None, 1, sense_activation="tanh")


@dataclass
class ReceiverModel:
    """A named ensemble of models sharing normalization constants.

    ``kind`` is one of ``block-equalizer``, ``subcarrier-tracker``,
    ``range-estimator``, ``velocity-estimator``.  ``norm`` carries the label
    scalings (``r_max``, ``v_max``, ``cfr_scale``) needed to undo the bounded
    output activations; ``loss_weights`` is the (a1, a2) pair used in
    training.
    """

    kind: str
    models: list[MultiTaskMlp]
    norm: dict = field(default_factory=dict)
    loss_weights: tuple[float, float] = (1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def parameters(self) -> list[np.ndarray]:
        return [p for m in self.models for p in m.parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for m in self.models for g in m.gradients()]


def build_block_receiver(rng: RngStream, block_size: int, k_data: int,
                         reference: str = "received",
                         group_symbols: int = GROUP_SYMBOLS,
                         norm: dict | None = None) -> ReceiverModel:
    """Per-block ensemble: one model per group of `group_symbols` symbols.

    reference selects the feature layout the ensemble expects: "received"
    (reference block prepended), "cfr" (channel-response row appended) or
    "none" (data block alone).
    """
    if group_symbols < 1 or k_data % group_symbols:
        raise ValueError(
            f"{k_data} symbols per block do not split into groups of {group_symbols}")
    with_ref = reference in ("received", "cfr")
    if reference not in ("received", "cfr", "none"):
        raise ValueError(f"unknown reference mode {reference!r}")
    groups = k_data // group_symbols
    models = [build_block_equalizer(rng.derive(g), block_size, with_ref, group_symbols)
              for g in range(groups)]
    return ReceiverModel(kind="block-equalizer", models=models, norm=norm or {},
                         meta={"reference": reference, "group_symbols": group_symbols})


def build_tracker_receiver(rng: RngStream, m_rb: int, m_db: int,
                           norm: dict | None = None) -> ReceiverModel:
    return ReceiverModel(kind="subcarrier-tracker",
                         models=[build_subcarrier_tracker(rng, m_rb, m_db)],
                         norm=norm or {})


def build_range_receiver(rng: RngStream, block_size: int,
                         norm: dict | None = None) -> ReceiverModel:
    return ReceiverModel(kind="range-estimator",
                         models=[build_range_estimator(rng, block_size)],
                         norm=norm or {}, meta={"reference": "received"})


def build_velocity_receiver(rng: RngStream, m_rb: int,
                            norm: dict | None = None) -> ReceiverModel:
    return ReceiverModel(kind="velocity-estimator",
                         models=[build_velocity_estimator(rng, m_rb)],
                         norm=norm or {})


def combine_two_level(tracker: ReceiverModel, equalizer: ReceiverModel) -> ReceiverModel:
    """Bundle a trained subcarrier tracker with a trained per-block ensemble.

    Convention: models[0] is the tracker, models[1:] are the group models;
    the merged norm dict keeps the tracker's cfr_scale/v_max alongside the
    equalizer's r_max.
    """
    if tracker.kind != "subcarrier-tracker" or equalizer.kind != "block-equalizer":
        raise ValueError("expected a subcarrier-tracker and a block-equalizer")
    norm = {**equalizer.norm, **tracker.norm}
    meta = {**equalizer.meta, **tracker.meta, "reference": "cfr"}
    return ReceiverModel(kind="two-level", models=[*tracker.models, *equalizer.models],
                         norm=norm, loss_weights=equalizer.loss_weights, meta=meta)


def _layer_spec(layer: DenseLayer) -> dict:
    return {"in": layer.in_dim, "out": layer.out_dim,
            "activation": layer.activation, "batchnorm": layer.bn is not None}


def _model_spec(model: MultiTaskMlp) -> dict:
    return {"shared": [_layer_spec(l) for l in model.shared],
            "comm": None if model.comm is None else [_layer_spec(l) for l in model.comm],
            "sense": None if model.sense is None else [_layer_spec(l) for l in model.sense]}


def _stack_from_spec(spec: list[dict]) -> list[DenseLayer]:
    return [DenseLayer(s["in"], s["out"], s["activation"], batchnorm=s["batchnorm"])
            for s in spec]


def _model_from_spec(spec: dict) -> MultiTaskMlp:
    comm = None if spec["comm"] is None else _stack_from_spec(spec["comm"])
    sense = None if spec["sense"] is None else _stack_from_spec(spec["sense"])
    return MultiTaskMlp(_stack_from_spec(spec["shared"]), comm, sense)


def _layer_arrays(layer: DenseLayer) -> list[np.ndarray]:
    out = [layer.w, layer.b]
    if layer.bn is not None:
        bn = layer.bn
        out += [bn.gamma, bn.beta, bn.running_mean, bn.running_var]
    return out


def _ensemble_arrays(models: list[MultiTaskMlp]) -> list[np.ndarray]:
    return [a for m in models for layer in m.layers() for a in _layer_arrays(layer)]


def save_checkpoint(path, receiver: ReceiverModel, optimizer: Adam | None = None) -> None:
    """Write one JSON manifest line followed by a float32 little-endian blob."""
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "kind": receiver.kind,
        "models": [_model_spec(m) for m in receiver.models],
        "norm": receiver.norm,
        "loss_weights": list(receiver.loss_weights),
        "adam": optimizer is not None,
        "adam_step": 0 if optimizer is None else optimizer.t,
        "meta": receiver.meta,
    }
    arrays = _ensemble_arrays(receiver.models)
    if optimizer is not None:
        if len(optimizer.m) != len(receiver.parameters()):
            raise ValueError("optimizer state does not match the ensemble")
        arrays = arrays + list(optimizer.m) + list(optimizer.v)
    with open(path, "wb") as fh:
        fh.write((json.dumps(manifest) + "\n").encode("ascii"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[ReceiverModel, Adam | None]:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    manifest = json.loads(header.decode("ascii"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format in {path}")
    models = [_model_from_spec(spec) for spec in manifest["models"]]
    receiver = ReceiverModel(
        kind=manifest["kind"], models=models, norm=manifest["norm"],
        loss_weights=tuple(manifest["loss_weights"]), meta=manifest.get("meta", {}))

    flat = np.frombuffer(blob, dtype="<f4")
    offset = 0

    def take(like: np.ndarray) -> np.ndarray:
        nonlocal offset
        n = like.size
        if offset + n > flat.size:
            raise ValueError("checkpoint blob is shorter than the manifest implies")
        out = flat[offset:offset + n].reshape(like.shape).astype(like.dtype)
        offset += n
        return out

    for model in models:
        for layer in model.layers():
            layer.w = take(layer.w)
            layer.b = take(layer.b)
            if layer.bn is not None:
                bn = layer.bn
                bn.gamma = take(bn.gamma)
                bn.beta = take(bn.beta)
                bn.running_mean = take(bn.running_mean)
                bn.running_var = take(bn.running_var)
    optimizer = None
    if manifest["adam"]:
        params = receiver.parameters()
        optimizer = Adam(params)
        optimizer.t = int(manifest["adam_step"])
        optimizer.m = [take(p) for p in params]
        optimizer.v = [take(p) for p in params]
    if offset != flat.size:
        raise ValueError("checkpoint blob is longer than the manifest implies")
    return receiver, optimizer
