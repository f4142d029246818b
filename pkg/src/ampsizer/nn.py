"""Minimal neural-network substrate on NumPy float64.

Dense layers, a gated recurrent (GRU) cell, hand-derived reverse-mode
gradients, Adam, and a binary named-tensor checkpoint format.  There is
deliberately no autodiff graph: the two network architectures built on
top of this are fixed, and explicit backward passes are easy to verify
against finite differences (which the test suite does).

Shape conventions: weight matrices are (out, in) and act on row vectors,
``y = x @ W.T + b``; every function accepts a single vector or a batch
(leading batch axis).
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Mapping

import numpy as np
from scipy.special import expit as _sigmoid

__all__ = [
    "dense_forward",
    "dense_backward",
    "gru_step",
    "gru_step_backward",
    "AdamState",
    "adam_step",
    "init_uniform",
    "init_dense",
    "init_gru",
    "save_tensors",
    "load_tensors",
    "CHECKPOINT_MAGIC",
]

_ACTIVATIONS = ("tanh", "relu", "identity")

GRU_KEYS = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray, activation: str):
    """y = act(W x + b); returns (y, cache) for :func:`dense_backward`."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    xb, squeeze = _as_batch(x)
    if xb.shape[1] != W.shape[1]:
        raise ValueError(f"input dim {xb.shape[1]} != W columns {W.shape[1]}")
    z = xb @ W.T + b
    if activation == "tanh":
        y = np.tanh(z)
    elif activation == "relu":
        y = np.maximum(z, 0.0)
    else:
        y = z
    cache = (W, xb, y, activation, squeeze)
    return (y[0] if squeeze else y), cache


def dense_backward(cache, dy: np.ndarray):
    """Gradients of a dense layer; returns (dW, db, dx)."""
    W, xb, y, activation, squeeze = cache
    dyb, _ = _as_batch(dy)
    if activation == "tanh":
        dz = dyb * (1.0 - y * y)
    elif activation == "relu":
        dz = dyb * (y > 0.0)
    else:
        dz = dyb
    dW = dz.T @ xb
    db = dz.sum(axis=0)
    dx = dz @ W
    return dW, db, (dx[0] if squeeze else dx)


def gru_step(weights: Mapping[str, np.ndarray], h_prev: np.ndarray, x: np.ndarray):
    """One gated-recurrent-unit update; returns (h_next, cache).

    z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
    c = tanh(Wh x + Uh (r*h) + bh), h_next = (1-z)*h + z*c.
    """
    xb, squeeze = _as_batch(x)
    hb, _ = _as_batch(h_prev)
    z = _sigmoid(xb @ weights["Wz"].T + hb @ weights["Uz"].T + weights["bz"])
    r = _sigmoid(xb @ weights["Wr"].T + hb @ weights["Ur"].T + weights["br"])
    rh = r * hb
    c = np.tanh(xb @ weights["Wh"].T + rh @ weights["Uh"].T + weights["bh"])
    h_next = (1.0 - z) * hb + z * c
    cache = (weights, xb, hb, z, r, rh, c, squeeze)
    return (h_next[0] if squeeze else h_next), cache


def gru_step_backward(cache, dh_next: np.ndarray):
    """Gradients of one GRU step; returns (grads, dh_prev, dx).

    ``grads`` has the same keys as the weight mapping.
    """
    weights, xb, hb, z, r, rh, c, squeeze = cache
    dhn, _ = _as_batch(dh_next)

    dz_gate = dhn * (c - hb) * z * (1.0 - z)
    dc = dhn * z * (1.0 - c * c)
    dh_prev = dhn * (1.0 - z)

    grads = {}
    grads["Wh"] = dc.T @ xb
    grads["Uh"] = dc.T @ rh
    grads["bh"] = dc.sum(axis=0)
    drh = dc @ weights["Uh"]
    dr_gate = drh * hb * r * (1.0 - r)
    dh_prev = dh_prev + drh * r

    grads["Wr"] = dr_gate.T @ xb
    grads["Ur"] = dr_gate.T @ hb
    grads["br"] = dr_gate.sum(axis=0)
    dh_prev = dh_prev + dr_gate @ weights["Ur"]

    grads["Wz"] = dz_gate.T @ xb
    grads["Uz"] = dz_gate.T @ hb
    grads["bz"] = dz_gate.sum(axis=0)
    dh_prev = dh_prev + dz_gate @ weights["Uz"]

    dx = dc @ weights["Wh"] + dr_gate @ weights["Wr"] + dz_gate @ weights["Wz"]
    if squeeze:
        return grads, dh_prev[0], dx[0]
    return grads, dh_prev, dx


class AdamState:
    """Adam accumulators and step counter for one named-tensor family."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, weights: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        """Bias-corrected Adam update, in place on ``weights``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            w = weights[key]
            if g.shape != w.shape:
                raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape} ({key})")
            m = self.m.setdefault(key, np.zeros_like(w))
            v = self.v.setdefault(key, np.zeros_like(w))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            w -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return weights

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {f"{prefix}t": np.array([float(self.t)])}
        for key, val in self.m.items():
            out[f"{prefix}m.{key}"] = val
        for key, val in self.v.items():
            out[f"{prefix}v.{key}"] = val
        return out

    def load_tensors(self, tensors: Mapping[str, np.ndarray], prefix: str = ""):
        self.t = int(tensors[f"{prefix}t"][0])
        self.m = {}
        self.v = {}
        for key, val in tensors.items():
            if key.startswith(f"{prefix}m."):
                self.m[key[len(prefix) + 2 :]] = np.array(val)
            elif key.startswith(f"{prefix}v."):
                self.v[key[len(prefix) + 2 :]] = np.array(val)


def adam_step(state: AdamState, weights: dict[str, np.ndarray],
              gradients: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return state.step(weights, gradients)


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_dense(rng: np.random.Generator, n_out: int, n_in: int,
               prefix: str) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.W": init_uniform(rng, (n_out, n_in), n_in),
        f"{prefix}.b": init_uniform(rng, (n_out,), n_in),
    }


def init_gru(rng: np.random.Generator, hidden: int, n_in: int,
             prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for gate in ("z", "r", "h"):
        out[f"{prefix}.W{gate}"] = init_uniform(rng, (hidden, n_in), n_in)
        out[f"{prefix}.U{gate}"] = init_uniform(rng, (hidden, hidden), hidden)
        out[f"{prefix}.b{gate}"] = init_uniform(rng, (hidden,), n_in)
    return out


def gru_view(weights: Mapping[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    """The 9 tensors of one GRU, keyed without the prefix."""
    return {key: weights[f"{prefix}.{key}"] for key in GRU_KEYS}


CHECKPOINT_MAGIC = b"AMPSNN01"


def _write_tensor(fh: BinaryIO, name: str, arr: np.ndarray):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(arr.tobytes())


def save_tensors(path, tensors: Mapping[str, np.ndarray]):
    """Write named float64 tensors: magic, count, then per-tensor records."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            _write_tensor(fh, name, np.asarray(arr, dtype=float))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a weight checkpoint (magic {magic!r})")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8")
            out[name] = data.reshape(shape).astype(float)
        return out
