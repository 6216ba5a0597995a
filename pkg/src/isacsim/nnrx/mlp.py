"""Dense multi-task network with hand-written forward/backward passes.

A model is a stack of shared layers feeding two optional branches (symbol
recovery and parameter estimation).  Layers are affine maps with optional
batch normalization (applied after the affine map, before the activation)
and run in float32 by default; gradient checking uses float64 instances.
"""

from __future__ import annotations

import math

import numpy as np

from ..numerics import RngStream

_ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _act_backward(name: str, z: np.ndarray, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    if name == "identity":
        return dy
    if name == "relu":
        return dy * (z > 0)
    if name == "tanh":
        return dy * (1.0 - y * y)
    if name == "sigmoid":
        return dy * y * (1.0 - y)
    raise ValueError(f"unknown activation {name!r}")


class BatchNorm:
    """Per-feature normalization with running statistics for inference."""

    def __init__(self, width: int, momentum: float = 0.9, eps: float = 1e-5,
                 dtype=np.float32):
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(width, dtype=dtype)
        self.beta = np.zeros(width, dtype=dtype)
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, z: np.ndarray, training: bool) -> np.ndarray:
        if training:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            zhat = (z - mu) * inv_std
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1.0 - m) * mu).astype(self.gamma.dtype)
            self.running_var = (m * self.running_var + (1.0 - m) * var).astype(self.gamma.dtype)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            zhat = (z - self.running_mean) * inv_std
        self._cache = (zhat, inv_std, training)
        return self.gamma * zhat + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        zhat, inv_std, training = self._cache
        self.dgamma = np.sum(dout * zhat, axis=0)
        self.dbeta = np.sum(dout, axis=0)
        dzhat = dout * self.gamma
        if not training:
            return dzhat * inv_std
        b = zhat.shape[0]
        return (inv_std / b) * (
            b * dzhat - np.sum(dzhat, axis=0) - zhat * np.sum(dzhat * zhat, axis=0))

    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]

    def grads(self) -> list[np.ndarray]:
        return [self.dgamma, self.dbeta]


class DenseLayer:
    """Affine map plus optional batch norm and a fixed activation."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "relu",
                 batchnorm: bool = False, rng: RngStream | None = None,
                 dtype=np.float32):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if in_dim < 1 or out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        gen = (rng or RngStream(0)).generator
        scale = math.sqrt(2.0 / in_dim) if activation == "relu" else math.sqrt(1.0 / in_dim)
        self.w = (gen.normal(0.0, scale, size=(in_dim, out_dim))).astype(dtype)
        self.b = np.zeros(out_dim, dtype=dtype)
        self.activation = activation
        self.bn = BatchNorm(out_dim, dtype=dtype) if batchnorm else None
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w.shape[1]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        z = x @ self.w + self.b
        zn = self.bn.forward(z, training) if self.bn is not None else z
        y = _act_forward(self.activation, zn)
        self._cache = (x, zn, y)
        return y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, zn, y = self._cache
        dz = _act_backward(self.activation, zn, y, dout)
        if self.bn is not None:
            dz = self.bn.backward(dz)
        self.dw = x.T @ dz
        self.db = dz.sum(axis=0)
        return dz @ self.w.T

    def params(self) -> list[np.ndarray]:
        out = [self.w, self.b]
        if self.bn is not None:
            out += self.bn.params()
        return out

    def grads(self) -> list[np.ndarray]:
        out = [self.dw, self.db]
        if self.bn is not None:
            out += self.bn.grads()
        return out


class MultiTaskMlp:
    """Shared trunk with optional symbol-recovery and sensing branches."""

    def __init__(self, shared: list[DenseLayer],
                 comm: list[DenseLayer] | None,
                 sense: list[DenseLayer] | None):
        if not shared:
            raise ValueError("need at least one shared layer")
        if comm is None and sense is None:
            raise ValueError("need at least one branch")
        self.shared = shared
        self.comm = comm
        self.sense = sense

    def forward(self, x: np.ndarray, training: bool = False
                ) -> tuple[np.ndarray | None, np.ndarray | None]:
        h = np.asarray(x)
        if h.ndim != 2 or h.shape[1] != self.shared[0].in_dim:
            raise ValueError(
                f"expected input of width {self.shared[0].in_dim}, got {h.shape}")
        for layer in self.shared:
            h = layer.forward(h, training)
        comm_out = sense_out = None
        if self.comm is not None:
            c = h
            for layer in self.comm:
                c = layer.forward(c, training)
            comm_out = c
        if self.sense is not None:
            s = h
            for layer in self.sense:
                s = layer.forward(s, training)
            sense_out = s
        return comm_out, sense_out

    def backward(self, dcomm: np.ndarray | None, dsense: np.ndarray | None) -> np.ndarray:
        dh = None
        if self.comm is not None:
            if dcomm is None:
                raise ValueError("comm branch present but no gradient supplied")
            d = dcomm
            for layer in reversed(self.comm):
                d = layer.backward(d)
            dh = d
        if self.sense is not None:
            if dsense is None:
                raise ValueError("sense branch present but no gradient supplied")
            d = dsense
            for layer in reversed(self.sense):
                d = layer.backward(d)
            dh = d if dh is None else dh + d
        for layer in reversed(self.shared):
            dh = layer.backward(dh)
        return dh

    def layers(self) -> list[DenseLayer]:
        out = list(self.shared)
        if self.comm is not None:
            out += self.comm
        if self.sense is not None:
            out += self.sense
        return out

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers() for p in layer.params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers() for g in layer.grads()]


def multitask_loss(comm_pred, comm_true, sense_pred, sense_true,
                   a1: float = 1.0, a2: float = 1.0) -> tuple[float, float, float]:
    """Weighted sum of the two mean-squared errors: a1*Loss_c + a2*Loss_s."""
    loss_c = loss_s = 0.0
    if comm_pred is not None:
        if comm_pred.shape != np.shape(comm_true):
            raise ValueError("comm prediction/label shapes differ")
        d = comm_pred - comm_true
        loss_c = float(np.mean(d * d))
    if sense_pred is not None:
        if sense_pred.shape != np.shape(sense_true):
            raise ValueError("sense prediction/label shapes differ")
        d = sense_pred - sense_true
        loss_s = float(np.mean(d * d))
    return a1 * loss_c + a2 * loss_s, loss_c, loss_s


def multitask_loss_grads(comm_pred, comm_true, sense_pred, sense_true,
                         a1: float = 1.0, a2: float = 1.0
                         ) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Gradients of multitask_loss with respect to each prediction array."""
    dcomm = dsense = None
    if comm_pred is not None:
        dcomm = (2.0 * a1 / comm_pred.size) * (comm_pred - comm_true)
    if sense_pred is not None:
        dsense = (2.0 * a2 / sense_pred.size) * (sense_pred - sense_true)
    return dcomm, dsense


class Adam:
    """Adam with bias correction; moments start at zero."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ValueError("parameter/gradient lists do not match the state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
