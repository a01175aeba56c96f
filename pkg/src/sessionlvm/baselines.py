"""Non-neural comparison recommenders: popularity and item-item correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Session, SessionSet, pooled_counts, to_counts


@dataclass
class PopularityModel:
    """Global view counts; prediction ignores the query session entirely."""

    counts: np.ndarray

    def predict(self, session: Session | None = None) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total


def fit_popularity(train: SessionSet) -> PopularityModel:
    if len(train) == 0:
        raise ValueError("empty training set")
    return PopularityModel(pooled_counts(train).astype(np.float64))


@dataclass
class ItemKnnModel:
    """Item-item correlation matrix; recommends by the last viewed item's row."""

    corr: np.ndarray


def fit_itemknn(train: SessionSet) -> ItemKnnModel:
    """Pearson correlation of the session x item count matrix columns.

    The identity is added to the centered co-count scatter before
    normalization, so zero-variance items stay finite (their rows come out
    zero off the diagonal).
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    p = train.num_items
    if p < 2:
        raise ValueError("need at least 2 items")
    counts = np.stack([to_counts(s, p) for s in train]).astype(np.float64)
    centered = counts - counts.mean(axis=0)
    scatter = centered.T @ centered + np.eye(p)
    scale = np.sqrt(np.diag(scatter))
    corr = scatter / np.outer(scale, scale)
    return ItemKnnModel(corr)


def predict_itemknn(model: ItemKnnModel, session: Session) -> np.ndarray:
    """Correlation row of the most recent view, shifted to a distribution.

    The min-subtract-and-normalize transform preserves the correlation
    ranking, which is all the metrics consume.
    """
    if len(session.views) == 0:
        raise ValueError(f"session {session.session_id!r} is empty")
    row = model.corr[session.views[-1]]
    shifted = row - row.min()
    total = shifted.sum()
    if total == 0.0:
        return np.full(row.shape[0], 1.0 / row.shape[0])
    return shifted / total
