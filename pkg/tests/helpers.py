"""Shared builders for randomized test instances."""

import numpy as np

from sessionlvm import ModelParams, Posterior, Session


def random_instance(rng, p_max=50, k_max=10, t_max=30, scale=1.0):
    """A random model plus a random non-empty session."""
    p = int(rng.integers(2, p_max + 1))
    k = int(rng.integers(1, k_max + 1))
    t = int(rng.integers(1, t_max + 1))
    psi = rng.normal(0.0, scale, size=(p, k))
    rho = rng.normal(0.0, 0.5, size=p)
    views = rng.integers(0, p, size=t).tolist()
    return ModelParams(psi, rho), Session("rnd", views)


def random_posterior(rng, k, kind="full"):
    if kind == "diag":
        return Posterior(rng.normal(size=k), np.exp(rng.normal(0.0, 0.3, size=k)), "diag")
    a = rng.normal(size=(k, k)) / np.sqrt(k)
    cov = a @ a.T + 0.3 * np.eye(k)
    return Posterior(rng.normal(size=k), cov, "full")
