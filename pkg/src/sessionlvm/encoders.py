"""Amortized inference networks: count vector in, variational parameters out.

Three variants:
  linear_gaussian  - one linear layer onto (mu, log-variance) heads.
  linear_bouchard  - one linear layer onto (mu, log-variance, xi, a) heads,
                     so the analytic bound can be trained without sampling.
  deep_gaussian    - three rectifier layers of K units, then (mu, log-variance).

Posteriors produced here are always diagonal; variances come through exp of
the log-variance head, xi through softplus, a through an identity head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bouchard import BouchardState
from .model import Posterior

KINDS = ("linear_bouchard", "linear_gaussian", "deep_gaussian")


@dataclass
class Layer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)
    activation: str  # "relu" or "identity"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise ValueError(f"layer shapes {self.w.shape} / {self.b.shape} disagree")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Encoder:
    kind: str
    num_items: int
    dim: int
    layers: list[Layer]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.layers[0].w.shape[0] != self.num_items:
            raise ValueError("first layer fan-in does not match catalog size")
        if self.layers[-1].w.shape[1] != self.head_width():
            raise ValueError("output head width does not match encoder kind")

    def head_width(self) -> int:
        if self.kind == "linear_bouchard":
            return 2 * self.dim + self.num_items + 1
        return 2 * self.dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        return [layer.w.shape for layer in self.layers]


def init_encoder(kind: str, num_items: int, dim: int, seed: int) -> Encoder:
    """Fresh encoder with N(0, 0.01^2) weights and zero biases."""
    if num_items < 1 or dim < 1:
        raise ValueError(f"need num_items, dim >= 1, got {num_items}, {dim}")
    rng = np.random.default_rng(seed)

    def linear(fan_in, fan_out, activation):
        w = rng.normal(0.0, 0.01, size=(fan_in, fan_out))
        return Layer(w, np.zeros(fan_out), activation)

    if kind == "deep_gaussian":
        layers = [
            linear(num_items, dim, "relu"),
            linear(dim, dim, "relu"),
            linear(dim, dim, "relu"),
            linear(dim, 2 * dim, "identity"),
        ]
    elif kind == "linear_gaussian":
        layers = [linear(num_items, 2 * dim, "identity")]
    elif kind == "linear_bouchard":
        layers = [linear(num_items, 2 * dim + num_items + 1, "identity")]
    else:
        raise ValueError(f"unknown encoder kind {kind!r}")
    return Encoder(kind, num_items, dim, layers)


def forward(encoder: Encoder, counts: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the network; returns the raw head vector and per-layer caches
    (input, pre-activation) for the backward pass."""
    x = np.asarray(counts, dtype=np.float64)
    if x.shape != (encoder.num_items,):
        raise ValueError(f"counts shape {x.shape}, expected ({encoder.num_items},)")
    caches = []
    for layer in encoder.layers:
        pre = x @ layer.w + layer.b
        caches.append((x, pre))
        x = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return x, caches


def backward(encoder: Encoder, caches: list, dout: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of a scalar objective w.r.t. every layer's (w, b), given the
    gradient at the head vector."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(encoder.layers)
    d = dout
    for i in reversed(range(len(encoder.layers))):
        layer = encoder.layers[i]
        x, pre = caches[i]
        if layer.activation == "relu":
            d = d * (pre > 0.0)
        grads[i] = (np.outer(x, d), d)
        if i > 0:
            d = d @ layer.w.T
    return grads


def split_heads(encoder: Encoder, out: np.ndarray) -> dict[str, np.ndarray]:
    k = encoder.dim
    heads = {"mu": out[:k], "logvar": out[k : 2 * k]}
    if encoder.kind == "linear_bouchard":
        heads["xipre"] = out[2 * k : 2 * k + encoder.num_items]
        heads["a"] = out[-1]
    return heads


def encode(encoder: Encoder, counts: np.ndarray) -> tuple[Posterior, BouchardState | None]:
    """Map a count vector to a diagonal posterior (plus bound parameters for
    the linear_bouchard variant)."""
    out, _ = forward(encoder, counts)
    heads = split_heads(encoder, out)
    q = Posterior(heads["mu"], np.exp(heads["logvar"]), "diag")
    if encoder.kind != "linear_bouchard":
        return q, None
    xi = np.logaddexp(0.0, heads["xipre"])  # softplus keeps xi >= 0
    return q, BouchardState(float(heads["a"]), xi)


# ---------------------------------------------------------------------------
# Serialization: JSON header plus flat arrays per layer.

def save_encoder(encoder: Encoder, path) -> None:
    doc = {
        "kind": encoder.kind,
        "num_items": encoder.num_items,
        "dim": encoder.dim,
        "layers": [
            {
                "shape": list(layer.w.shape),
                "activation": layer.activation,
                "w": layer.w.ravel().tolist(),
                "b": layer.b.tolist(),
            }
            for layer in encoder.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_encoder(path) -> Encoder:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    layers = [
        Layer(
            np.array(spec["w"], dtype=np.float64).reshape(spec["shape"]),
            np.array(spec["b"], dtype=np.float64),
            spec["activation"],
        )
        for spec in doc["layers"]
    ]
    return Encoder(doc["kind"], doc["num_items"], doc["dim"], layers)
