"""Analytic lower bound on the session ELBO and its fixed-point EM solver.

The softmax normalizer inside the ELBO expectation is majorized item-by-item
with a quadratic in the logits, controlled by auxiliary variational
parameters: a scalar offset `a` and a per-item vector `xi`.  For fixed model
parameters the bound has closed-form coordinate updates for (xi, Sigma_q,
mu_q, a); cycling them is coordinate ascent, so the bound value never
decreases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Session, to_counts
from .errors import NumericError
from .model import LOG_2PI, ModelParams, Posterior

# Switch to the series expansion below this |xi|; the closed form is 0/0 at 0.
_XI_TAYLOR = 1e-6


@dataclass
class BouchardState:
    """Auxiliary bound parameters: scalar offset a, per-item xi >= 0."""

    a: float
    xi: np.ndarray

    def __post_init__(self):
        self.a = float(self.a)
        self.xi = np.asarray(self.xi, dtype=np.float64)
        if not (np.isfinite(self.a) and np.isfinite(self.xi).all()):
            raise NumericError("non-finite bound parameters")
        if (self.xi < 0).any():
            raise ValueError("xi entries must be non-negative")


def lambda_jj(xi):
    """Quadratic-majorization coefficient for the logistic log-partition.

    Equals tanh(xi/2) / (4 xi), an even function with range (0, 1/8];
    continuously extended through xi = 0 by its series 1/8 - xi^2/96.
    """
    xi = np.asarray(xi, dtype=np.float64)
    small = np.abs(xi) < _XI_TAYLOR
    safe = np.where(small, 1.0, xi)
    out = np.where(small, 0.125 - xi * xi / 96.0, np.tanh(safe / 2.0) / (4.0 * safe))
    return float(out) if out.ndim == 0 else out


def lambda_jj_prime(xi):
    """Derivative of lambda_jj; series -xi/48 near zero, matching the switch."""
    xi = np.asarray(xi, dtype=np.float64)
    small = np.abs(xi) < _XI_TAYLOR
    safe = np.where(small, 1.0, xi)
    half = safe / 2.0
    # sech^2 written in exponentials that underflow (not overflow) for large xi
    e = np.exp(-np.abs(half))
    sech2 = (2.0 * e / (1.0 + e * e)) ** 2
    closed = (half * sech2 - np.tanh(half)) / (4.0 * safe * safe)
    out = np.where(small, -xi / 48.0, closed)
    return float(out) if out.ndim == 0 else out


def bouchard_bound(
    params: ModelParams, session: Session, q: Posterior, state: BouchardState
) -> float:
    """Value of the analytic lower bound at (q, a, xi)."""
    if state.xi.shape != (params.num_items,):
        raise ValueError(
            f"xi has shape {state.xi.shape}, expected ({params.num_items},)"
        )
    counts = to_counts(session, params.num_items).astype(np.float64)
    t = counts.sum()
    k = params.dim
    m = params.psi @ q.mu + params.rho
    svec = q.quad_form(params.psi)
    lam = lambda_jj(state.xi)
    centered = m - state.a
    per_item = (
        0.5 * (centered - state.xi)
        + lam * (centered * centered + svec - state.xi * state.xi)
        + np.logaddexp(0.0, state.xi)
    )
    data_term = float(counts @ m)
    majorizer = t * (state.a + float(per_item.sum()))
    gauss = (
        -0.5 * k * LOG_2PI
        - 0.5 * (float(q.mu @ q.mu) + q.trace())
        + 0.5 * (k * (LOG_2PI + 1.0) + q.logdet())
    )
    value = data_term - majorizer + gauss
    if not np.isfinite(value):
        raise NumericError("non-finite bound value")
    return value


def em_update_xi(params: ModelParams, q: Posterior, a: float) -> np.ndarray:
    """Tightness condition: xi_p^2 matches the second moment of logit_p - a."""
    m = params.psi @ q.mu + params.rho
    svec = q.quad_form(params.psi)
    radicand = svec + (m - a) ** 2
    if (radicand < -1e-12).any():
        raise NumericError("negative radicand in xi update; covariance not PSD")
    return np.sqrt(np.maximum(radicand, 0.0))


def em_update_sigma(params: ModelParams, t: int, state: BouchardState) -> np.ndarray:
    """Covariance update: inverse of I_K + 2 T sum_p lambda(xi_p) psi_p^T psi_p."""
    lam = lambda_jj(state.xi)
    prec = np.eye(params.dim) + 2.0 * t * (params.psi.T * lam) @ params.psi
    prec = 0.5 * (prec + prec.T)
    sigma = np.linalg.inv(prec)
    return 0.5 * (sigma + sigma.T)


def em_update_mu(
    params: ModelParams, session: Session, sigma: np.ndarray, state: BouchardState
) -> np.ndarray:
    """Mean update at the current covariance and bound parameters."""
    counts = to_counts(session, params.num_items).astype(np.float64)
    t = counts.sum()
    lam = lambda_jj(state.xi)
    weights = 0.5 + 2.0 * (params.rho - state.a) * lam
    rhs = params.psi.T @ counts - t * (params.psi.T @ weights)
    return sigma @ rhs


def em_update_a(params: ModelParams, q: Posterior, state: BouchardState) -> float:
    """Offset update; the denominator is positive since lambda_jj > 0."""
    lam = lambda_jj(state.xi)
    m = params.psi @ q.mu + params.rho
    return float((-1.0 + 0.5 * params.num_items + 2.0 * (lam @ m)) / (2.0 * lam.sum()))


def em_infer(
    params: ModelParams,
    session: Session,
    iters: int = 100,
    init: tuple[Posterior, BouchardState] | None = None,
) -> tuple[Posterior, BouchardState, np.ndarray]:
    """Maximize the bound over (mu_q, Sigma_q, a, xi) for fixed parameters.

    Cycles the coordinate updates in the order (xi, Sigma, mu, a) for exactly
    `iters` iterations from init (default mu=0, Sigma=I, a=0, xi=1) and
    records the bound after each cycle.  The trace is non-decreasing up to
    round-off.  An empty session is allowed and lands on the prior.
    """
    if iters < 1:
        raise ValueError(f"need at least one iteration, got {iters}")
    p, k = params.num_items, params.dim
    if init is not None:
        q0, state0 = init
        mu, sigma = q0.mu.copy(), q0.cov().copy()
        a, xi = state0.a, state0.xi.copy()
    else:
        mu, sigma = np.zeros(k), np.eye(k)
        a, xi = 0.0, np.ones(p)
    t = len(session.views)
    trace = np.empty(iters)
    for i in range(iters):
        try:
            q = Posterior(mu, sigma, "full")
            xi = em_update_xi(params, q, a)
            state = BouchardState(a, xi)
            sigma = em_update_sigma(params, t, state)
            mu = em_update_mu(params, session, sigma, state)
            q = Posterior(mu, sigma, "full")
            a = em_update_a(params, q, state)
            state = BouchardState(a, xi)
            trace[i] = bouchard_bound(params, session, q, state)
        except NumericError as exc:
            raise NumericError(f"iteration {i}: {exc}") from exc
    return Posterior(mu, sigma, "full"), BouchardState(a, xi), trace
