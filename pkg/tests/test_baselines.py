import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from sessionlvm import (
    ItemCatalog,
    Session,
    SessionSet,
    fit_itemknn,
    fit_popularity,
    predict_itemknn,
    to_counts,
)


def sess(*view_lists):
    p = max(max(v) for v in view_lists if v) + 1
    return SessionSet(
        [Session(f"s{i}", list(v)) for i, v in enumerate(view_lists)], ItemCatalog(p)
    )


def test_popularity_counts_and_normalization():
    model = fit_popularity(sess([0, 0, 1]))
    assert_allclose(model.predict(), [2 / 3, 1 / 3])


def test_popularity_unseen_item_gets_zero():
    data = SessionSet([Session("a", [0, 2])], ItemCatalog(4))
    model = fit_popularity(data)
    probs = model.predict()
    assert probs[1] == 0.0 and probs[3] == 0.0
    assert probs.sum() == pytest.approx(1.0)


def test_popularity_ignores_query_session():
    model = fit_popularity(sess([0, 1, 1], [2]))
    a = model.predict(Session("q", [0]))
    b = model.predict(Session("q", [2, 2, 2]))
    assert_allclose(a, b)


def test_itemknn_cooccurring_items_dominate():
    # items 0 and 1 always co-occur; 2 drifts alone
    data = sess([0, 1], [0, 1], [0, 1, 2], [2], [2, 2])
    model = fit_itemknn(data)
    corr = model.corr
    assert_allclose(corr, corr.T, atol=1e-12)
    off = corr - np.diag(np.diag(corr))
    assert off[0, 1] == off.max()
    # ordering agrees with plain Pearson wherever that is defined
    counts = np.stack([to_counts(s, 3) for s in data])
    naive = oracles.naive_pearson(counts)
    assert naive[0, 1] == pytest.approx(np.nanmax(naive - np.eye(3) * 2), abs=1e-12)


def test_itemknn_isolated_item_row_is_zero():
    data = SessionSet(
        [Session("a", [0, 1]), Session("b", [0, 1]), Session("c", [0])],
        ItemCatalog(4),
    )
    model = fit_itemknn(data)
    row = model.corr[3]
    assert_allclose(np.delete(row, 3), 0.0, atol=1e-12)
    assert np.isfinite(model.corr).all()


def test_itemknn_diagonal_at_least_unit_ridge_share():
    data = sess([0, 1, 2], [1, 2], [0, 2])
    corr = fit_itemknn(data).corr
    assert_allclose(np.diag(corr), 1.0, atol=1e-12)


def test_itemknn_prediction_uses_only_last_item():
    data = sess([0, 1], [1, 2], [0, 2], [2, 0, 1])
    model = fit_itemknn(data)
    a = predict_itemknn(model, Session("x", [0, 1]))
    b = predict_itemknn(model, Session("y", [2, 1]))
    assert_allclose(a, b)


def test_itemknn_prediction_rank_preserving():
    data = sess([0, 1], [1, 2], [0, 2], [2, 0, 1], [1, 1, 0])
    model = fit_itemknn(data)
    probs = predict_itemknn(model, Session("x", [1]))
    row = model.corr[1]
    assert np.argsort(-probs).tolist() == np.argsort(-row).tolist()
    assert probs.sum() == pytest.approx(1.0)
    assert (probs >= 0).all()


def test_itemknn_degenerate_row_uniform():
    model = fit_itemknn(sess([0, 1], [0, 1]))
    model.corr[1] = 0.5  # force all-equal row
    assert_allclose(predict_itemknn(model, Session("x", [1])), [0.5, 0.5])


def test_itemknn_empty_session_rejected():
    model = fit_itemknn(sess([0, 1], [1, 0]))
    with pytest.raises(ValueError):
        predict_itemknn(model, Session("x", []))


def test_itemknn_prefix_invariance_property():
    rng = np.random.default_rng(0)
    data = sess(*[rng.integers(0, 5, size=rng.integers(1, 9)).tolist() for _ in range(12)])
    model = fit_itemknn(data)
    for _ in range(10):
        last = int(rng.integers(0, 5))
        prefix_a = rng.integers(0, 5, size=3).tolist()
        prefix_b = rng.integers(0, 5, size=6).tolist()
        pa = predict_itemknn(model, Session("a", prefix_a + [last]))
        pb = predict_itemknn(model, Session("b", prefix_b + [last]))
        assert_allclose(pa, pb)
