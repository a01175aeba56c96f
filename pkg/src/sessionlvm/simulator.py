"""Synthetic session generation from the model's own generative process.

Each session draws one state omega ~ N(0, I_K), then T i.i.d. views from
categorical(softmax(psi @ omega + rho)).  Also ships a small seven-product
demo catalog with hand-built embeddings whose inference behavior is easy to
reason about (phones correlate, grains correlate, the two shirts
anti-correlate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ItemCatalog, Session, SessionSet
from .model import ModelParams, log_sum_exp


@dataclass
class GroundTruth:
    params: ModelParams
    seed: int = 0


@dataclass
class FixedLength:
    length: int

    def draw(self, rng) -> int:
        return self.length


@dataclass
class PoissonLength:
    """T ~ Poisson(lam) + 1, so every session has at least one view."""

    lam: float

    def draw(self, rng) -> int:
        return int(rng.poisson(self.lam)) + 1


def parse_length_spec(text: str):
    """"12" or "fixed:12" for constant length, "poisson:11.5" for Poisson+1."""
    text = text.strip()
    if ":" in text:
        kind, _, value = text.partition(":")
        if kind == "fixed":
            return FixedLength(int(value))
        if kind == "poisson":
            return PoissonLength(float(value))
        raise ValueError(f"unknown length spec {text!r}")
    return FixedLength(int(text))


def _validate_spec(spec) -> None:
    if isinstance(spec, FixedLength) and spec.length < 1:
        raise ValueError(f"session length must be >= 1, got {spec.length}")
    if isinstance(spec, PoissonLength) and spec.lam < 0:
        raise ValueError(f"Poisson rate must be >= 0, got {spec.lam}")


def simulate(gt: GroundTruth, num_sessions: int, length_spec) -> SessionSet:
    """Generate sessions; single RNG stream, deterministic given gt.seed."""
    if num_sessions < 1:
        raise ValueError(f"need at least one session, got {num_sessions}")
    if isinstance(length_spec, str):
        length_spec = parse_length_spec(length_spec)
    _validate_spec(length_spec)
    params = gt.params
    rng = np.random.default_rng(gt.seed)
    width = max(4, len(str(num_sessions - 1)))
    sessions = []
    for i in range(num_sessions):
        omega = rng.standard_normal(params.dim)
        z = params.psi @ omega + params.rho
        probs = np.exp(z - log_sum_exp(z))
        t = length_spec.draw(rng)
        views = rng.choice(params.num_items, size=t, p=probs)
        sessions.append(Session(f"s{i:0{width}d}", views.tolist()))
    return SessionSet(sessions, ItemCatalog(params.num_items))


def random_ground_truth(
    num_items: int, dim: int, seed: int, psi_scale: float = 1.0, rho_scale: float = 0.0
) -> GroundTruth:
    """Random embeddings psi ~ N(0, psi_scale^2), rho ~ N(0, rho_scale^2)."""
    rng = np.random.default_rng(seed)
    psi = rng.normal(0.0, psi_scale, size=(num_items, dim))
    rho = rng.normal(0.0, rho_scale, size=num_items) if rho_scale > 0 else np.zeros(num_items)
    return GroundTruth(ModelParams(psi, rho), seed)


CASE_STUDY_LABELS = [
    "Sleek Phone",
    "City Phone",
    "Rice",
    "Coscous",
    "Beer",
    "Women's shirt",
    "Men's shirt",
]

# Latent components: phones, grains, drinks, women's clothes, men's clothes.
_CASE_STUDY_PSI = [
    [0.9, 0.05, 0.0, 0.05, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.95, 0.0, 0.1, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.2, 0.7, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, -1.0],
    [0.0, 0.0, 0.0, -1.0, 1.0],
]


def case_study_fixture() -> tuple[GroundTruth, list[str]]:
    """The seven-product demo model: fixed embeddings, zero popularity shift."""
    psi = np.array(_CASE_STUDY_PSI, dtype=np.float64)
    return GroundTruth(ModelParams(psi, np.zeros(7)), seed=0), list(CASE_STUDY_LABELS)


# Histories for the four demo scenarios (item ids index CASE_STUDY_LABELS).
CASE_STUDY_SCENARIOS = [
    ("one Sleek Phone", [0]),
    ("one Sleek Phone, two City Phones", [0, 1, 1]),
    ("one Sleek Phone, twenty City Phones", [0] + [1] * 20),
    ("two Women's shirts, one Sleek Phone", [5, 5, 0]),
]
