"""MLP parameter containers, Adam, and binary checkpoint serialization."""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, NumericError, Tensor

ACTIVATIONS = {
    "relu": ad.relu,
    "mish": ad.mish,
    "tanh": ad.tanh,
    "identity": None,
}


class Mlp:
    """An ordered stack of affine layers with per-layer activations.

    Weights and biases are leaf tensors with ``requires_grad=True``;
    ``parameters()`` yields them in declaration order (W1, b1, W2, b2, ...),
    which is also the checkpoint byte order.
    """

    def __init__(self, weights: Sequence, biases: Sequence, activations: Sequence[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise DimensionError("weights, biases, activations must align")
        if not weights:
            raise DimensionError("an MLP needs at least one layer")
        self.weights = [ad.as_tensor(w) for w in weights]
        self.biases = [ad.as_tensor(b) for b in biases]
        self.activations = list(activations)
        for p in self.weights + self.biases:
            p.requires_grad = True
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.data.ndim != 2 or b.data.ndim != 1:
                raise DimensionError(f"layer {k}: expected 2-D weight and 1-D bias")
            if b.data.shape[0] != w.data.shape[1]:
                raise DimensionError(f"layer {k}: bias dim != weight out dim")
            if k > 0 and w.data.shape[0] != self.weights[k - 1].data.shape[1]:
                raise DimensionError(
                    f"layer {k}: in dim {w.data.shape[0]} != previous out dim"
                )
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].data.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].data.shape[1]

    @property
    def layer_dims(self) -> list[list[int]]:
        return [list(w.data.shape) for w in self.weights]

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def __call__(self, x) -> Tensor:
        return mlp_forward(self, x)

    def copy(self) -> "Mlp":
        return Mlp(
            [w.data.copy() for w in self.weights],
            [b.data.copy() for b in self.biases],
            self.activations,
        )


def init_mlp(
    in_dim: int,
    hidden: Sequence[int],
    out_dim: int,
    rng: np.random.Generator,
    hidden_activation: str = "mish",
    final_scale: float = 1.0,
) -> Mlp:
    """Fan-in-scaled uniform init, zero biases, optional shrunk final layer."""
    dims = [in_dim, *hidden, out_dim]
    weights, biases, acts = [], [], []
    for k in range(len(dims) - 1):
        fan_in = dims[k]
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(dims[k], dims[k + 1]))
        b = np.zeros(dims[k + 1])
        if k == len(dims) - 2:
            w *= final_scale
            acts.append("identity")
        else:
            acts.append(hidden_activation)
        weights.append(w)
        biases.append(b)
    return Mlp(weights, biases, acts)


def mlp_forward(net: Mlp, x) -> Tensor:
    """Run the stack; rejects bad input dims and non-finite outputs."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != net.in_dim:
        raise DimensionError(
            f"input shape {x.data.shape} incompatible with in_dim {net.in_dim}"
        )
    for w, b, act in zip(net.weights, net.biases, net.activations):
        x = ad.linear(x, w, b)
        fn = ACTIVATIONS[act]
        if fn is not None:
            x = fn(x)
    ad.check_finite(x, "network output")
    return x


def clip_params(net: Mlp, bound: float) -> None:
    """Clamp every parameter entry to [-bound, bound] in place."""
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    for p in net.parameters():
        np.clip(p.data, -bound, bound, out=p.data)


def polyak_update(target: Mlp, online: Mlp, rho: float) -> None:
    """target <- rho * target + (1 - rho) * online, entrywise."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    for t, o in zip(target.parameters(), online.parameters()):
        t.data *= rho
        t.data += (1.0 - rho) * o.data


class Adam:
    """Adam with bias correction over a fixed parameter list.

    A ``None`` grad counts as zero. If any gradient is non-finite the step is
    refused (state untouched) and NumericError raised.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericError("non-finite gradient; optimizer step refused")
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> list[np.ndarray]:
        """Moment buffers in declaration order (for checkpointing)."""
        out: list[np.ndarray] = []
        for m, v in zip(self.m, self.v):
            out.extend((m, v))
        return out


def save_mlp(net: Mlp, path) -> None:
    """Write a checkpoint: u32 header length, JSON header, raw LE float64.

    The header records layer dims and activations; arrays follow in
    declaration order (W1, b1, W2, b2, ...), row-major.
    """
    header = {"layer_dims": net.layer_dims, "activations": net.activations}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in net.parameters():
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_mlp(path) -> Mlp:
    with open(path, "rb") as f:
        raw = f.read(4)
        if len(raw) < 4:
            raise ValueError(f"{path}: truncated checkpoint header")
        (hlen,) = struct.unpack("<I", raw)
        blob = f.read(hlen)
        if len(blob) < hlen:
            raise ValueError(f"{path}: truncated checkpoint header")
        header = json.loads(blob.decode("utf-8"))
        weights, biases = [], []
        for din, dout in header["layer_dims"]:
            wb = f.read(din * dout * 8)
            bb = f.read(dout * 8)
            if len(wb) < din * dout * 8 or len(bb) < dout * 8:
                raise ValueError(f"{path}: truncated parameter data")
            weights.append(np.frombuffer(wb, dtype="<f8").reshape(din, dout).copy())
            biases.append(np.frombuffer(bb, dtype="<f8").copy())
    return Mlp(weights, biases, header["activations"])
