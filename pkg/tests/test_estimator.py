"""Tests for the local score-matching fit and the gradient estimator."""

import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from fsm_mle.estimator import (
    GradEstimate,
    LinearScoreModel,
    ProposalSpec,
    SimBatch,
    SingularGramError,
    empirical_objective,
    estimate_gradient,
    evaluate_score,
    evaluate_scores,
    fit_linear_fsm,
    proposal_log_grad,
    sample_batch,
)
from fsm_mle.models import GaussianMeanModel
from fsm_mle.oracles import SmoothedGaussianOracle, smoothed_grad_exact
from fsm_mle.rng import stream


def _random_batch(rng, d=None, k=None, m=None, n=None):
    d = d or int(rng.integers(1, 6))
    k = k or int(rng.integers(1, 6))
    m = m or int(rng.integers(2, 51))
    n = n or int(rng.integers(1, 11))
    proposal = ProposalSpec(rng.normal(size=d), float(rng.uniform(0.1, 1.0)))
    thetas = proposal.center + proposal.sigma * rng.normal(size=(m, d))
    data = rng.normal(size=(m, n, k))
    return SimBatch(thetas=thetas, data=data, proposal=proposal)


def test_proposal_log_grad():
    p = ProposalSpec(np.array([1.0, 2.0]), 0.5)
    g = proposal_log_grad(np.array([1.5, 1.0]), p)
    # -(theta_j - center) / sigma^2
    assert np.allclose(g, [-2.0, 4.0])


def test_proposal_requires_positive_sigma():
    with pytest.raises(ValueError):
        ProposalSpec(np.zeros(2), 0.0)


def test_fit_single_pair_hand_solved():
    # One proposal draw, one data point, scalar everything, no intercept,
    # no ridge: W = -(x * g) / x^2 = -(2 * 3) / 4 = -1.5.
    p = ProposalSpec(np.array([0.0]), 1.0)
    # theta_j chosen so the proposal log-gradient equals 3:
    batch = SimBatch(thetas=np.array([[-3.0]]), data=np.array([[[2.0]]]), proposal=p)
    model = fit_linear_fsm(batch, ridge=0.0, affine=False)
    assert model.weights == pytest.approx(np.array([[-1.5]]))
    assert evaluate_score(model, np.array([2.0])) == pytest.approx([-3.0])


def test_normal_equation_residual_random_batches():
    rng = stream(101)
    for _ in range(50):
        batch = _random_batch(rng)
        model = fit_linear_fsm(batch)
        # Recompute both sides of the stationarity condition directly.
        f = batch.data.shape[2] + 1
        gram = np.zeros((f, f))
        rhs = np.zeros((f, batch.thetas.shape[1]))
        for j in range(batch.thetas.shape[0]):
            X = np.hstack([batch.data[j], np.ones((batch.data.shape[1], 1))])
            gram += X.T @ X
            g = proposal_log_grad(batch.thetas[j], batch.proposal)
            rhs += X.sum(axis=0)[:, None] * g[None, :]
        lhs = (gram + model.ridge * np.eye(f)) @ model.weights
        resid = np.max(np.abs(lhs + rhs)) / max(np.max(np.abs(rhs)), 1.0)
        assert resid <= 1e-8


def test_fit_matches_iterative_minimization():
    # The closed-form solution must agree with a generic optimizer run on
    # the empirical objective itself.
    rng = stream(202)
    batch = _random_batch(rng, d=2, k=2, m=20, n=3)
    fitted = fit_linear_fsm(batch, ridge=0.0)
    f = batch.data.shape[2] + 1

    def obj(w_flat):
        model = LinearScoreModel(w_flat.reshape(f, 2), ridge=0.0, affine=True)
        return empirical_objective(batch, model)

    res = minimize(obj, np.zeros(f * 2), method="L-BFGS-B", tol=1e-14)
    assert np.max(np.abs(res.x.reshape(f, 2) - fitted.weights)) <= 1e-6


def test_objective_hand_arithmetic():
    # m=1, n=1, scalar: J = S^2 + 2 S g with S = w x, evaluated by hand.
    p = ProposalSpec(np.array([0.0]), 1.0)
    batch = SimBatch(thetas=np.array([[-3.0]]), data=np.array([[[2.0]]]), proposal=p)
    model = LinearScoreModel(np.array([[1.0]]), ridge=0.0, affine=False)
    # S = 1 * 2 = 2, g = 3: J = 4 + 12 = 16
    assert empirical_objective(batch, model) == pytest.approx(16.0)


def test_objective_means_over_batch():
    p = ProposalSpec(np.array([0.0]), 1.0)
    batch = SimBatch(
        thetas=np.array([[-3.0], [1.0]]),
        data=np.array([[[2.0]], [[4.0]]]),
        proposal=p,
    )
    model = LinearScoreModel(np.array([[1.0]]), ridge=0.0, affine=False)
    # j=0: S=2, g=3 -> 16; j=1: S=4, g=-1 -> 16 - 8 = 8; mean = 12
    assert empirical_objective(batch, model) == pytest.approx(12.0)


def test_permutation_invariance():
    rng = stream(303)
    batch = _random_batch(rng, d=3, k=2, m=15, n=4)
    perm = rng.permutation(15)
    shuffled = SimBatch(
        thetas=batch.thetas[perm], data=batch.data[perm], proposal=batch.proposal
    )
    w1 = fit_linear_fsm(batch).weights
    w2 = fit_linear_fsm(shuffled).weights
    assert np.max(np.abs(w1 - w2)) <= 1e-10


def test_zero_loggrads_give_zero_weights():
    # All proposals exactly at the center: every log-gradient vanishes and
    # the minimizer is W = 0.
    p = ProposalSpec(np.array([1.0, 1.0]), 0.3)
    thetas = np.tile(p.center, (5, 1))
    data = stream(17).normal(size=(5, 2, 2))
    batch = SimBatch(thetas=thetas, data=data, proposal=p)
    model = fit_linear_fsm(batch)
    assert np.max(np.abs(model.weights)) <= 1e-12


def test_singular_gram_raises_without_ridge():
    p = ProposalSpec(np.array([0.0]), 1.0)
    # Identical rows with an intercept make the Gram matrix singular.
    batch = SimBatch(
        thetas=np.array([[0.5], [-0.2]]),
        data=np.ones((2, 3, 1)),
        proposal=p,
    )
    with pytest.raises(SingularGramError):
        fit_linear_fsm(batch, ridge=0.0)
    # With the default ridge the same batch fits fine (possibly via the
    # least-squares fallback).
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_linear_fsm(batch)


def test_gradient_matches_conjugate_oracle():
    # Large simulation budget: the estimated total gradient should land
    # within a few percent of the exact smoothed gradient.
    model = GaussianMeanModel(2)
    obs = model.simulate(np.array([1.0, 1.0]), 10, stream(404))
    theta_t = obs.mean(axis=0) + 0.3
    sigma = 0.2
    est = estimate_gradient(
        model, obs, ProposalSpec(theta_t, sigma), m=60000, n=1, rng=stream(405)
    )
    oracle = SmoothedGaussianOracle(np.eye(2), sigma, theta_t)
    truth = sum(smoothed_grad_exact(oracle, x) for x in obs)
    rel = np.linalg.norm(est.gradient - truth) / np.linalg.norm(truth)
    assert rel <= 0.05


def test_gradient_near_zero_at_mle():
    # At the sample mean the smoothed gradient vanishes; the estimate
    # should be small compared to the gradient a unit step away.
    model = GaussianMeanModel(2)
    obs = model.simulate(np.array([1.0, 1.0]), 10, stream(406))
    mle = obs.mean(axis=0)
    est = estimate_gradient(
        model, obs, ProposalSpec(mle, 0.1), m=60000, n=1, rng=stream(407)
    )
    away = np.linalg.norm(10 * np.linalg.solve(np.eye(2), np.ones(2)))
    assert np.linalg.norm(est.gradient) <= 0.15 * away


def test_gradient_noise_grows_with_narrow_proposal():
    # The proposal log-gradient scales like 1/sigma, so for a fixed budget
    # a narrower proposal yields a noisier gradient estimate.
    model = GaussianMeanModel(2)
    obs = model.simulate(np.array([1.0, 1.0]), 10, stream(408))
    theta_t = obs.mean(axis=0) + 0.3

    def spread(sigma, tag):
        oracle = SmoothedGaussianOracle(np.eye(2), sigma, theta_t)
        truth = sum(smoothed_grad_exact(oracle, x) for x in obs)
        errs = []
        for rep in range(50):
            est = estimate_gradient(
                model, obs, ProposalSpec(theta_t, sigma), m=200, n=1,
                rng=stream(409, tag, rep),
            )
            errs.append(np.linalg.norm(est.gradient - truth))
        return np.median(errs)

    assert spread(1e-3, 0) > spread(1e-1, 1)


def test_estimate_gradient_deterministic():
    model = GaussianMeanModel(2)
    obs = model.simulate(np.zeros(2), 5, stream(410))
    p = ProposalSpec(np.zeros(2), 0.2)
    a = estimate_gradient(model, obs, p, m=50, n=2, rng=stream(411))
    b = estimate_gradient(model, obs, p, m=50, n=2, rng=stream(411))
    assert np.array_equal(a.gradient, b.gradient)
    assert isinstance(a, GradEstimate)
    assert a.per_observation_scores.shape == (5, 2)


def test_sample_batch_shapes_and_center():
    model = GaussianMeanModel(3)
    p = ProposalSpec(np.array([1.0, 2.0, 3.0]), 0.05)
    batch = sample_batch(model, p, m=2000, n=4, rng=stream(412))
    assert batch.thetas.shape == (2000, 3)
    assert batch.data.shape == (2000, 4, 3)
    assert np.allclose(batch.thetas.mean(axis=0), p.center, atol=0.01)
    assert np.allclose(batch.thetas.std(axis=0), 0.05, atol=0.005)


def test_evaluate_scores_affine():
    w = np.array([[2.0, 0.0], [0.0, -1.0], [1.0, 3.0]])  # last row: intercept
    model = LinearScoreModel(w, ridge=0.0, affine=True)
    X = np.array([[1.0, 1.0], [0.0, 2.0]])
    out = evaluate_scores(model, X)
    assert np.allclose(out, [[3.0, 2.0], [1.0, 1.0]])
