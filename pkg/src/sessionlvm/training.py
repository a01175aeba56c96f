"""Learning psi, rho and encoder weights by stochastic ascent on the bound.

Two per-session objectives are supported:

  bouchard - the analytic bound evaluated at the encoder's output, including
             its (a, xi) heads; no sampling anywhere.
  reparam  - the sampled bound: the softmax normalizer term is evaluated at
             omega = mu + sqrt(v) * eps for standard-normal draws eps, while
             the data and Gaussian prior/entropy terms stay analytic.

Gradients are exact and hand-derived: each objective is a fixed expression
graph, so the backward pass is written out term by term here rather than
pulled from an autodiff framework.  RMSProp (ascent convention) does the
parameter updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoders
from .bouchard import lambda_jj, lambda_jj_prime
from .data import Session, SessionSet, pooled_counts, to_counts
from .encoders import Encoder
from .errors import TrainingError
from .model import LOG_2PI, ModelParams

BOUNDS = ("bouchard", "reparam")


@dataclass
class TrainConfig:
    bound: str = "bouchard"
    encoder_kind: str = "linear_bouchard"
    dim: int = 10
    epochs: int = 100
    learning_rate: float = 0.001
    l2: float = 0.0
    batch_size: int = 10
    mc_samples_train: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.bound not in BOUNDS:
            raise ValueError(f"unknown bound {self.bound!r}")
        if self.encoder_kind not in encoders.KINDS:
            raise ValueError(f"unknown encoder kind {self.encoder_kind!r}")
        if self.bound == "bouchard" and self.encoder_kind != "linear_bouchard":
            raise ValueError("the analytic bound needs the linear_bouchard encoder")
        if self.bound == "reparam" and self.encoder_kind == "linear_bouchard":
            raise ValueError("the sampled bound uses a Gaussian-head encoder")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.mc_samples_train < 1:
            raise ValueError("bad epochs/batch_size/mc_samples_train")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")


class RMSProp:
    """Squared-gradient accumulator step, gradient-ascent convention.

    acc <- decay * acc + (1 - decay) * g^2, then
    theta <- theta + lr * g / (sqrt(acc) + epsilon).
    """

    def __init__(self, learning_rate: float, decay: float = 0.9, epsilon: float = 1e-8):
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.acc: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            acc = self.acc.get(name)
            if acc is None:
                acc = np.zeros_like(g)
                self.acc[name] = acc
            acc *= self.decay
            acc += (1.0 - self.decay) * g * g
            params[name] += self.learning_rate * g / (np.sqrt(acc) + self.epsilon)


# ---------------------------------------------------------------------------
# Objective values and gradients.

def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))  # underflows instead of overflowing
    pos = 1.0 / (1.0 + e)
    return np.where(x >= 0, pos, 1.0 - pos)


def _l2_penalty(params: ModelParams, encoder: Encoder, l2: float) -> float:
    if l2 == 0.0:
        return 0.0
    total = float((params.psi * params.psi).sum())
    total += sum(float((layer.w * layer.w).sum()) for layer in encoder.layers)
    return l2 * total


def _bouchard_value_grads(params, encoder, session, l2):
    """Analytic-bound objective at the encoder output, with exact gradients."""
    psi, rho = params.psi, params.rho
    p, k = params.num_items, params.dim
    counts = to_counts(session, p).astype(np.float64)
    t = counts.sum()

    out, caches = encoders.forward(encoder, counts)
    heads = encoders.split_heads(encoder, out)
    mu = heads["mu"]
    v = np.exp(heads["logvar"])
    xipre = heads["xipre"]
    xi = np.logaddexp(0.0, xipre)
    a = float(heads["a"])

    m = psi @ mu + rho
    svec = (psi * psi) @ v
    lam = lambda_jj(xi)
    centered = m - a
    per_item = (
        0.5 * (centered - xi)
        + lam * (centered * centered + svec - xi * xi)
        + np.logaddexp(0.0, xi)
    )
    value = (
        float(counts @ m)
        - t * (a + float(per_item.sum()))
        - 0.5 * k * LOG_2PI
        - 0.5 * (float(mu @ mu) + float(v.sum()))
        + 0.5 * (k * (LOG_2PI + 1.0) + float(np.log(v).sum()))
    )
    value -= _l2_penalty(params, encoder, l2)

    # Backward pass, term by term.
    dm = counts - t * (0.5 + 2.0 * lam * centered)  # (P,)
    dv = -t * ((psi * psi).T @ lam) - 0.5 + 0.5 / v  # (K,)
    dmu = psi.T @ dm - mu
    dpsi = np.outer(dm, mu) - 2.0 * t * (lam[:, None] * psi * v[None, :])
    drho = dm.copy()
    da = -t * (1.0 - 0.5 * p - 2.0 * float(lam @ centered))
    dxi = -t * (
        -0.5
        + lambda_jj_prime(xi) * (centered * centered + svec - xi * xi)
        - 2.0 * lam * xi
        + _sigmoid(xi)
    )
    dxipre = dxi * _sigmoid(xipre)  # softplus derivative

    dout = np.concatenate([dmu, dv * v, dxipre, [da]])
    layer_grads = encoders.backward(encoder, caches, dout)
    return value, _pack_grads(params, encoder, dpsi, drho, layer_grads, l2)


def _reparam_value_grads(params, encoder, session, noise, l2):
    """Sampled-bound objective (diagonal posterior) with exact gradients."""
    psi, rho = params.psi, params.rho
    k = params.dim
    counts = to_counts(session, params.num_items).astype(np.float64)
    t = counts.sum()
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 2 or noise.shape[1] != k or noise.shape[0] < 1:
        raise ValueError(f"noise must be (S, {k}) with S >= 1, got {noise.shape}")
    n_samples = noise.shape[0]

    out, caches = encoders.forward(encoder, counts)
    heads = encoders.split_heads(encoder, out)
    mu = heads["mu"]
    v = np.exp(heads["logvar"])
    std = np.sqrt(v)

    omegas = mu + std * noise  # (S, K)
    z = omegas @ psi.T + rho  # (S, P)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    lse = (zmax[:, 0] + np.log(ez.sum(axis=1)))
    pi = ez / ez.sum(axis=1, keepdims=True)  # softmax rows

    m = psi @ mu + rho
    value = (
        float(counts @ m)
        - t * float(lse.mean())
        - 0.5 * k * LOG_2PI
        - 0.5 * (float(mu @ mu) + float(v.sum()))
        + 0.5 * (k * (LOG_2PI + 1.0) + float(np.log(v).sum()))
    )
    value -= _l2_penalty(params, encoder, l2)

    scale = -t / n_samples
    dpsi = np.outer(counts, mu) + scale * (pi.T @ omegas)
    drho = counts + scale * pi.sum(axis=0)
    domega = scale * (pi @ psi)  # (S, K)
    dmu = psi.T @ counts - mu + domega.sum(axis=0)
    dv = (domega * noise).sum(axis=0) / (2.0 * std) - 0.5 + 0.5 / v

    dout = np.concatenate([dmu, dv * v])
    layer_grads = encoders.backward(encoder, caches, dout)
    return value, _pack_grads(params, encoder, dpsi, drho, layer_grads, l2)


def _pack_grads(params, encoder, dpsi, drho, layer_grads, l2):
    if l2 > 0.0:
        dpsi = dpsi - 2.0 * l2 * params.psi
    grads = {"psi": dpsi, "rho": drho}
    for i, (dw, db) in enumerate(layer_grads):
        if l2 > 0.0:
            dw = dw - 2.0 * l2 * encoder.layers[i].w
        grads[f"enc.{i}.w"] = dw
        grads[f"enc.{i}.b"] = db
    return grads


def _value_and_grads(params, encoder, session, cfg: TrainConfig, noise):
    if len(session.views) == 0:
        raise ValueError(f"session {session.session_id!r} is empty")
    if cfg.bound == "bouchard":
        return _bouchard_value_grads(params, encoder, session, cfg.l2)
    return _reparam_value_grads(params, encoder, session, noise, cfg.l2)


def session_objective(
    params: ModelParams,
    encoder: Encoder,
    session: Session,
    cfg: TrainConfig,
    noise: np.ndarray | None = None,
) -> float:
    """Per-session training objective (bound minus the L2 penalty)."""
    value, _ = _value_and_grads(params, encoder, session, cfg, noise)
    return value


def gradients(
    params: ModelParams,
    encoder: Encoder,
    session: Session,
    cfg: TrainConfig,
    noise: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradients of session_objective w.r.t. psi, rho and all encoder
    weights, keyed "psi", "rho", "enc.{i}.w", "enc.{i}.b"."""
    _, grads = _value_and_grads(params, encoder, session, cfg, noise)
    return grads


# ---------------------------------------------------------------------------
# The training loop.

def init_item_params(data: SessionSet, dim: int, seed: int) -> ModelParams:
    """psi ~ N(0, 0.01^2); rho starts at smoothed log item frequencies."""
    p = data.num_items
    rng = np.random.default_rng(seed)
    psi = rng.normal(0.0, 0.01, size=(p, dim))
    counts = pooled_counts(data).astype(np.float64)
    freq = (counts + 1.0) / (counts.sum() + p)  # add-one keeps unseen items finite
    return ModelParams(psi, np.log(freq))


@dataclass
class TrainResult:
    params: ModelParams
    encoder: Encoder
    loss_curve: list[float] = field(default_factory=list)


def train(data: SessionSet, cfg: TrainConfig) -> TrainResult:
    """Epochs of shuffled mini-batches, RMSProp ascent on the mean session
    objective; returns the per-epoch mean objective as the loss curve.
    Deterministic given cfg.seed; sessions are visited sequentially."""
    if len(data) == 0:
        raise ValueError("empty training set")
    for s in data:
        if len(s.views) == 0:
            raise ValueError(f"training session {s.session_id!r} is empty")

    root = np.random.SeedSequence(cfg.seed)
    param_seed, enc_seed, loop_seed = (int(s.generate_state(1)[0]) for s in root.spawn(3))
    params = init_item_params(data, cfg.dim, param_seed)
    encoder = encoders.init_encoder(cfg.encoder_kind, data.num_items, cfg.dim, enc_seed)
    rng = np.random.default_rng(loop_seed)

    flat = {"psi": params.psi, "rho": params.rho}
    for i, layer in enumerate(encoder.layers):
        flat[f"enc.{i}.w"] = layer.w
        flat[f"enc.{i}.b"] = layer.b
    opt = RMSProp(cfg.learning_rate)

    sessions = data.sessions
    n = len(sessions)
    curve: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_total = 0.0
        for b_start in range(0, n, cfg.batch_size):
            batch = order[b_start : b_start + cfg.batch_size]
            batch_grads: dict[str, np.ndarray] | None = None
            for idx in batch:
                sess = sessions[idx]
                noise = None
                if cfg.bound == "reparam":
                    noise = rng.standard_normal((cfg.mc_samples_train, cfg.dim))
                value, grads = _value_and_grads(params, encoder, sess, cfg, noise)
                if not np.isfinite(value):
                    raise TrainingError(
                        "non-finite objective",
                        epoch=epoch,
                        batch=b_start // cfg.batch_size,
                        session_id=sess.session_id,
                    )
                epoch_total += value
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for name, g in grads.items():
                        batch_grads[name] += g
            for name in batch_grads:
                batch_grads[name] /= len(batch)
            opt.step(flat, batch_grads)
        curve.append(epoch_total / n)
    return TrainResult(params, encoder, curve)
