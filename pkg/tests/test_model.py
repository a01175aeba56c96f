import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from helpers import random_instance, random_posterior
from sessionlvm import (
    ModelParams,
    Posterior,
    Session,
    elbo_mc,
    log_joint,
    log_marginal_is,
    log_softmax_probs,
)
from sessionlvm.model import (
    load_params,
    load_params_json,
    load_params_text,
    prior,
    save_params_json,
    save_params_text,
)


def test_log_softmax_uniform():
    params = ModelParams(np.zeros((5, 2)), np.zeros(5))
    out = log_softmax_probs(params, np.array([0.3, -0.7]))
    assert_allclose(out, np.log(np.full(5, 0.2)), atol=1e-14)


def test_log_softmax_symmetric_pair():
    params = ModelParams(np.array([[1.0], [-1.0]]), np.zeros(2))
    out = log_softmax_probs(params, np.array([0.0]))
    assert_allclose(out, [math.log(0.5)] * 2, atol=1e-14)


def test_log_softmax_hand_value():
    # e^{ln 3} / (e^{ln 3} + 1) = 0.75
    params = ModelParams(np.array([[1.0], [0.0]]), np.zeros(2))
    out = np.exp(log_softmax_probs(params, np.array([math.log(3.0)])))
    assert_allclose(out, [0.75, 0.25], atol=1e-14)


def test_log_softmax_normalizes():
    rng = np.random.default_rng(1)
    for _ in range(50):
        params, _ = random_instance(rng, p_max=40, k_max=6)
        omega = rng.normal(size=params.dim)
        assert math.isclose(
            np.exp(log_softmax_probs(params, omega)).sum(), 1.0, abs_tol=1e-12
        )


def test_log_softmax_shift_invariant():
    rng = np.random.default_rng(2)
    params, _ = random_instance(rng, p_max=10, k_max=4)
    omega = rng.normal(size=params.dim)
    shifted = ModelParams(params.psi, params.rho + 3.7)
    assert_allclose(
        log_softmax_probs(params, omega),
        log_softmax_probs(shifted, omega),
        atol=1e-12,
    )


def test_log_softmax_large_logits_stable():
    params = ModelParams(np.array([[800.0], [-800.0]]), np.zeros(2))
    out = log_softmax_probs(params, np.array([1.0]))
    assert np.isfinite(out).all()
    assert out[0] == pytest.approx(0.0, abs=1e-12)


def test_log_joint_plugin():
    p = 4
    params = ModelParams(np.zeros((p, 1)), np.zeros(p))
    value = log_joint(params, Session("s", [2]), np.zeros(1))
    assert value == pytest.approx(math.log(1 / p) - 0.5 * math.log(2 * math.pi))


def test_log_joint_decomposition_identity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        params, session = random_instance(rng, p_max=12, k_max=5, t_max=8)
        omega = rng.normal(size=params.dim)
        expected = sum(
            log_softmax_probs(params, omega)[v] for v in session.views
        ) - 0.5 * params.dim * math.log(2 * math.pi) - 0.5 * float(omega @ omega)
        assert log_joint(params, session, omega) == pytest.approx(expected, abs=1e-10)


def test_log_joint_matches_naive():
    rng = np.random.default_rng(4)
    params, session = random_instance(rng, p_max=3, k_max=2, t_max=6)
    omega = rng.normal(size=params.dim)
    naive = oracles.naive_log_joint(
        params.psi.tolist(), params.rho.tolist(), session.views, omega.tolist()
    )
    assert log_joint(params, session, omega) == pytest.approx(naive, abs=1e-12)


def test_log_joint_view_order_free():
    rng = np.random.default_rng(5)
    params, session = random_instance(rng, p_max=8, k_max=3, t_max=10)
    omega = rng.normal(size=params.dim)
    shuffled = list(session.views)
    rng.shuffle(shuffled)
    assert log_joint(params, session, omega) == pytest.approx(
        log_joint(params, Session("x", shuffled), omega), abs=1e-12
    )


def test_elbo_mc_empty_session_at_prior_is_zero():
    # q == prior and no data: every per-sample term cancels exactly.
    params = ModelParams(np.zeros((3, 2)), np.zeros(3))
    eps = np.random.default_rng(0).standard_normal((64, 2))
    assert elbo_mc(params, Session("s", []), prior(2), eps) == pytest.approx(0.0, abs=1e-12)


def test_elbo_mc_deterministic_given_eps():
    rng = np.random.default_rng(6)
    params, session = random_instance(rng, p_max=6, k_max=3)
    q = random_posterior(rng, params.dim)
    eps = rng.standard_normal((32, params.dim))
    assert elbo_mc(params, session, q, eps) == elbo_mc(params, session, q, eps)


def test_elbo_mc_converges_to_quadrature():
    rng = np.random.default_rng(7)
    psi = rng.normal(size=(4, 1))
    rho = rng.normal(0, 0.5, size=4)
    params = ModelParams(psi, rho)
    session = Session("s", [0, 2, 2])
    q = Posterior(np.array([0.4]), np.array([[0.6]]), "full")
    truth = oracles.elbo_quadrature(psi.tolist(), rho.tolist(), session.views, q.mu, q.cov())
    n = 4000
    eps = rng.standard_normal((n, 1))
    per_sample = np.array([elbo_mc(params, session, q, eps[i : i + 1]) for i in range(n)])
    se = per_sample.std(ddof=1) / math.sqrt(n)
    estimate = elbo_mc(params, session, q, eps)
    assert estimate == pytest.approx(per_sample.mean(), abs=1e-10)
    assert abs(estimate - truth) < 3 * se


def test_elbo_mc_quadrature_2d():
    rng = np.random.default_rng(8)
    psi = rng.normal(size=(3, 2))
    rho = np.zeros(3)
    params = ModelParams(psi, rho)
    session = Session("s", [1])
    q = random_posterior(rng, 2)
    truth = oracles.elbo_quadrature(psi.tolist(), rho.tolist(), session.views, q.mu, q.cov(), n=40)
    eps = rng.standard_normal((200000, 2))
    assert elbo_mc(params, session, q, eps) == pytest.approx(truth, abs=2e-2)


def test_log_marginal_is_exact_when_state_free():
    # psi = 0 makes the likelihood independent of the state.
    params = ModelParams(np.zeros((5, 2)), np.zeros(5))
    session = Session("s", [0, 1, 1, 4])
    q = prior(2)
    value = log_marginal_is(params, session, q, n=2000, seed=0)
    assert value == pytest.approx(4 * math.log(1 / 5), abs=1e-6)


def test_log_marginal_is_matches_quadrature():
    rng = np.random.default_rng(9)
    psi = rng.normal(size=(4, 1))
    rho = rng.normal(0, 0.3, size=4)
    params = ModelParams(psi, rho)
    session = Session("s", [1, 3])
    truth = oracles.log_marginal_quadrature(psi.tolist(), rho.tolist(), session.views)
    q = Posterior(np.zeros(1), np.array([[1.5]]), "full")
    assert log_marginal_is(params, session, q, n=400000, seed=3) == pytest.approx(
        truth, abs=1e-3
    )


def test_log_marginal_is_upper_bounds_elbo():
    rng = np.random.default_rng(10)
    for _ in range(10):
        params, session = random_instance(rng, p_max=8, k_max=3, t_max=6)
        q = random_posterior(rng, params.dim)
        eps = rng.standard_normal((4000, params.dim))
        elbo = elbo_mc(params, session, q, eps)
        marg = log_marginal_is(params, session, q, n=20000, seed=11)
        assert marg > elbo - 0.25  # Jensen gap direction, generous MC slack


def test_posterior_validation():
    with pytest.raises(Exception):
        Posterior(np.zeros(2), np.array([1.0, -1.0]), "diag")
    with pytest.raises(ValueError):
        Posterior(np.zeros(2), np.eye(3), "full")
    q = Posterior(np.zeros(2), np.array([[2.0, 0.0], [0.0, 0.5]]), "full")
    assert q.trace() == pytest.approx(2.5)
    assert_allclose(q.variances(), [2.0, 0.5])


def test_posterior_log_pdf_full_vs_diag():
    rng = np.random.default_rng(12)
    var = np.array([0.5, 2.0])
    qd = Posterior(np.array([0.1, -0.2]), var, "diag")
    qf = Posterior(np.array([0.1, -0.2]), np.diag(var), "full")
    pts = rng.normal(size=(7, 2))
    assert_allclose(qd.log_pdf(pts), qf.log_pdf(pts), atol=1e-12)


def test_params_text_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    params = ModelParams(rng.normal(size=(6, 3)), rng.normal(size=6))
    path = tmp_path / "model.txt"
    save_params_text(params, path)
    back = load_params_text(path)
    assert_allclose(back.psi, params.psi, rtol=0, atol=0)
    assert_allclose(back.rho, params.rho, rtol=0, atol=0)


def test_params_json_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    params = ModelParams(rng.normal(size=(4, 2)), rng.normal(size=4))
    path = tmp_path / "model.json"
    save_params_json(params, path)
    back = load_params_json(path)
    assert_allclose(back.psi, params.psi, rtol=0, atol=0)
    assert_allclose(back.rho, params.rho, rtol=0, atol=0)
    assert load_params(path).num_items == 4
