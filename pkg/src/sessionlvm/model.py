"""Model parameters and exact probabilistic quantities.

The generative model: a session-level state omega ~ N(0, I_K), then every
view in the session drawn i.i.d. from categorical(softmax(psi @ omega + rho)).
This module holds the learned parameters, the exact log-joint, a sample-based
evidence lower bound, and an importance-sampling log-marginal estimate used
as a gold-standard check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Session
from .errors import NumericError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ModelParams:
    """Item embeddings psi (P x K) and popularity shift rho (P,)."""

    psi: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.psi.ndim != 2:
            raise ValueError(f"psi must be 2-d, got shape {self.psi.shape}")
        if self.rho.shape != (self.psi.shape[0],):
            raise ValueError(
                f"rho shape {self.rho.shape} does not match psi {self.psi.shape}"
            )
        if self.psi.shape[0] < 1 or self.psi.shape[1] < 1:
            raise ValueError(f"psi must be at least 1x1, got {self.psi.shape}")
        if not (np.isfinite(self.psi).all() and np.isfinite(self.rho).all()):
            raise NumericError("non-finite model parameters")

    @property
    def num_items(self) -> int:
        return self.psi.shape[0]

    @property
    def dim(self) -> int:
        return self.psi.shape[1]


@dataclass
class Posterior:
    """Gaussian state posterior; `sigma` is a K x K covariance when kind is
    "full", or a length-K vector of variances when kind is "diag"."""

    mu: np.ndarray
    sigma: np.ndarray
    kind: str = "full"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        k = self.mu.shape[0]
        if self.kind not in ("full", "diag"):
            raise ValueError(f"unknown posterior kind {self.kind!r}")
        if self.kind == "full" and self.sigma.shape != (k, k):
            raise ValueError(f"full covariance must be {k}x{k}, got {self.sigma.shape}")
        if self.kind == "diag":
            if self.sigma.shape != (k,):
                raise ValueError(f"diagonal variances must be ({k},), got {self.sigma.shape}")
            if not (self.sigma > 0).all():
                raise NumericError("diagonal posterior has non-positive variances")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.sigma).all()):
            raise NumericError("non-finite posterior parameters")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def variances(self) -> np.ndarray:
        """Marginal variances, shape (K,)."""
        if self.kind == "diag":
            return self.sigma
        return np.diag(self.sigma)

    def cov(self) -> np.ndarray:
        if self.kind == "diag":
            return np.diag(self.sigma)
        return self.sigma

    def trace(self) -> float:
        return float(self.variances().sum())

    def scale_tril(self) -> np.ndarray:
        """Lower-triangular L with L @ L.T equal to the covariance."""
        if self.kind == "diag":
            return np.diag(np.sqrt(self.sigma))
        try:
            return np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"covariance not positive definite: {exc}") from None

    def logdet(self) -> float:
        if self.kind == "diag":
            return float(np.log(self.sigma).sum())
        return float(2.0 * np.log(np.diag(self.scale_tril())).sum())

    def quad_form(self, rows: np.ndarray) -> np.ndarray:
        """row_p @ Sigma @ row_p^T for every row of a (P, K) matrix."""
        if self.kind == "diag":
            return (rows * rows) @ self.sigma
        return np.einsum("pk,kl,pl->p", rows, self.sigma, rows)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws, shape (n, K)."""
        eps = rng.standard_normal((n, self.dim))
        return self.transform(eps)

    def transform(self, eps: np.ndarray) -> np.ndarray:
        """Map standard-normal draws (n, K) through L eps + mu."""
        if self.kind == "diag":
            return self.mu + eps * np.sqrt(self.sigma)
        return self.mu + eps @ self.scale_tril().T

    def log_pdf(self, omega: np.ndarray):
        """Log density at one point (K,) or a batch (n, K)."""
        omega = np.asarray(omega, dtype=np.float64)
        single = omega.ndim == 1
        diff = np.atleast_2d(omega) - self.mu
        if self.kind == "diag":
            quad = ((diff * diff) / self.sigma).sum(axis=1)
        else:
            y = np.linalg.solve(self.scale_tril(), diff.T)
            quad = (y * y).sum(axis=0)
        out = -0.5 * (self.dim * LOG_2PI + self.logdet() + quad)
        return float(out[0]) if single else out


def prior(dim: int) -> Posterior:
    """The standard-normal state prior as a full-covariance posterior."""
    return Posterior(np.zeros(dim), np.eye(dim), "full")


def _logits(params: ModelParams, omega: np.ndarray) -> np.ndarray:
    return params.psi @ omega + params.rho


def log_sum_exp(z: np.ndarray, axis=None):
    zmax = np.max(z, axis=axis, keepdims=True)
    out = zmax + np.log(np.exp(z - zmax).sum(axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def log_softmax_probs(params: ModelParams, omega: np.ndarray) -> np.ndarray:
    """Log softmax(psi @ omega + rho), stabilised via max subtraction."""
    z = _logits(params, omega)
    if not np.isfinite(z).all():
        raise NumericError("non-finite logits")
    return z - log_sum_exp(z)


def log_joint(params: ModelParams, session: Session, omega: np.ndarray) -> float:
    """Log of the joint density of the session's views and the state omega."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (params.dim,):
        raise ValueError(f"omega shape {omega.shape}, expected ({params.dim},)")
    views = np.asarray(session.views, dtype=np.int64)
    z = _logits(params, omega)
    if not np.isfinite(z).all():
        raise NumericError("non-finite logits")
    t = len(views)
    data = float(z[views].sum()) - t * float(log_sum_exp(z))
    return data - 0.5 * params.dim * LOG_2PI - 0.5 * float(omega @ omega)


def _log_joint_batch(params: ModelParams, views: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """log_joint at each row of omegas (n, K); views may be empty."""
    z = omegas @ params.psi.T + params.rho  # (n, P)
    if not np.isfinite(z).all():
        raise NumericError("non-finite logits")
    t = len(views)
    data = z[:, views].sum(axis=1) - t * log_sum_exp(z, axis=1)
    return data - 0.5 * params.dim * LOG_2PI - 0.5 * (omegas * omegas).sum(axis=1)


def elbo_mc(params: ModelParams, session: Session, q: Posterior, eps: np.ndarray) -> float:
    """Sample estimate of the evidence lower bound.

    Averages log_joint(omega) - log q(omega) over omega = L eps + mu for the
    supplied standard-normal draws eps of shape (S, K); deterministic given eps.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim != 2 or eps.shape[0] < 1 or eps.shape[1] != params.dim:
        raise ValueError(f"eps must be (S, {params.dim}) with S >= 1, got {eps.shape}")
    omegas = q.transform(eps)
    views = np.asarray(session.views, dtype=np.int64)
    vals = _log_joint_batch(params, views, omegas) - q.log_pdf(omegas)
    return float(vals.mean())


def log_marginal_is(
    params: ModelParams, session: Session, q: Posterior, n: int, seed: int
) -> float:
    """Importance-sampling estimate of the session log marginal, proposal q."""
    if n < 1:
        raise ValueError(f"need at least one draw, got {n}")
    rng = np.random.default_rng(seed)
    omegas = q.sample(rng, n)
    views = np.asarray(session.views, dtype=np.int64)
    logw = _log_joint_batch(params, views, omegas) - q.log_pdf(omegas)
    return float(log_sum_exp(logw) - np.log(n))


# ---------------------------------------------------------------------------
# Parameter serialization: text header "P K" + P rows of K+1 reals, or JSON.

def save_params_text(params: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{params.num_items} {params.dim}\n")
        for p in range(params.num_items):
            row = list(params.psi[p]) + [params.rho[p]]
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_params_text(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header {header!r}")
        p, k = int(header[0]), int(header[1])
        rows = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if rows.shape != (p, k + 1):
        raise ValueError(f"{path}: expected {p} rows of {k + 1} reals, got {rows.shape}")
    return ModelParams(rows[:, :k], rows[:, k])


def save_params_json(params: ModelParams, path) -> None:
    doc = {
        "num_items": params.num_items,
        "dim": params.dim,
        "psi": params.psi.tolist(),
        "rho": params.rho.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params_json(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    params = ModelParams(np.array(doc["psi"]), np.array(doc["rho"]))
    if params.num_items != doc["num_items"] or params.dim != doc["dim"]:
        raise ValueError(f"{path}: header/array shape mismatch")
    return params


def save_params(params: ModelParams, path) -> None:
    """Dispatch on extension: .json stores JSON, anything else the text form."""
    if str(path).endswith(".json"):
        save_params_json(params, path)
    else:
        save_params_text(params, path)


def load_params(path) -> ModelParams:
    if str(path).endswith(".json"):
        return load_params_json(path)
    return load_params_text(path)
