"""Next-item predictive distributions from a state posterior."""

from __future__ import annotations

import numpy as np

from .model import ModelParams, Posterior, log_sum_exp


def predict_mean(params: ModelParams, q: Posterior) -> np.ndarray:
    """Point approximation: softmax at the posterior mean."""
    z = params.psi @ q.mu + params.rho
    return np.exp(z - log_sum_exp(z))


def predict_mc(params: ModelParams, q: Posterior, n_samples: int, seed) -> np.ndarray:
    """Average of exact softmaxes over posterior draws; deterministic given seed."""
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    rng = np.random.default_rng(seed)
    omegas = q.sample(rng, n_samples)  # (S, K)
    z = omegas @ params.psi.T + params.rho  # (S, P)
    probs = np.exp(z - log_sum_exp(z, axis=1)[:, None])
    return probs.mean(axis=0)


def top_k(probs: np.ndarray, k: int) -> np.ndarray:
    """Ids of the k largest probabilities, descending; ties go to the lower id."""
    probs = np.asarray(probs)
    p = probs.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"k must be in [1, {p}], got {k}")
    order = np.lexsort((np.arange(p), -probs))
    return order[:k]
