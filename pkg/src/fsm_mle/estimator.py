"""Local Fisher score matching with a linear (optionally affine) score model.

The estimator draws parameters from an isotropic Gaussian proposal around the
current iterate, simulates data at each draw, and fits the score model by
solving the ridge normal equations in closed form.  Evaluating the fitted
model at the observations and summing gives an approximate log-likelihood
gradient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .models import SimulatorModel
from .rng import as_generator


class SingularGramError(np.linalg.LinAlgError):
    """Gram-matrix sum not invertible and no ridge requested."""


@dataclass(frozen=True)
class ProposalSpec:
    """Isotropic Gaussian proposal N(center, sigma^2 I)."""

    center: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("proposal sigma must be positive and finite")
        if not np.all(np.isfinite(self.center)):
            raise ValueError("proposal center must be finite")


@dataclass(frozen=True)
class SimBatch:
    """Proposal draws with per-draw simulated data.

    ``thetas`` is (m, d); ``data`` is (m, n, k) with ``data[j]`` simulated at
    ``thetas[j]``.
    """

    thetas: np.ndarray
    data: np.ndarray
    proposal: ProposalSpec

    @property
    def m(self) -> int:
        return self.thetas.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LinearScoreModel:
    """Fitted weights of the linear score model.

    ``weights`` is (f, d) with f = k, or k + 1 when ``affine`` (the feature
    vector is x augmented with a trailing constant 1).
    """

    weights: np.ndarray
    ridge: float
    affine: bool


@dataclass
class GradEstimate:
    gradient: np.ndarray
    per_observation_scores: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def sample_batch(
    model: SimulatorModel,
    proposal: ProposalSpec,
    m: int,
    n: int,
    rng,
) -> SimBatch:
    """Draw m proposal parameters and n simulations at each."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = as_generator(rng)
    d = proposal.center.size
    thetas = proposal.center + proposal.sigma * rng.standard_normal((m, d))
    data = np.empty((m, n, model.data_dim))
    for j in range(m):
        data[j] = model.simulate(thetas[j], n, rng)
    return SimBatch(thetas=thetas, data=data, proposal=proposal)


def proposal_log_grad(theta_j, proposal: ProposalSpec) -> np.ndarray:
    """Gradient of the proposal log-density at theta_j: -(theta_j - center) / sigma^2."""
    theta_j = np.asarray(theta_j, dtype=float)
    if theta_j.shape[-1] != proposal.center.size:
        raise ValueError("theta_j dimension does not match the proposal")
    return -(theta_j - proposal.center) / proposal.sigma**2


def _features(X: np.ndarray, affine: bool) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if affine:
        return np.hstack([X, np.ones((X.shape[0], 1))])
    return X


def empirical_objective(batch: SimBatch, score_model: LinearScoreModel) -> float:
    """Monte-Carlo score-matching objective (averaged over draws and samples)."""
    m, n, k = batch.data.shape
    f = k + 1 if score_model.affine else k
    if score_model.weights.shape[0] != f:
        raise ValueError("score model feature dimension does not match the batch")
    loggrads = proposal_log_grad(batch.thetas, batch.proposal)  # (m, d)
    phi = _features(batch.data.reshape(m * n, k), score_model.affine)
    scores = (phi @ score_model.weights).reshape(m, n, -1)  # (m, n, d)
    sq = np.sum(scores**2, axis=2)  # (m, n)
    cross = 2.0 * np.einsum("mnd,md->mn", scores, loggrads)
    return float(np.mean(np.mean(sq + cross, axis=1)))


def fit_linear_fsm(
    batch: SimBatch,
    ridge: float | None = None,
    affine: bool = True,
) -> LinearScoreModel:
    """Solve the ridge normal equations for the linear score model.

    With ``ridge=None`` a small relative penalty 1e-6 * tr(sum G_j) / f is
    applied; an explicit ``ridge=0`` requests the unpenalized solution and
    raises :class:`SingularGramError` if the Gram sum is singular.
    """
    m, n, k = batch.data.shape
    phi = _features(batch.data.reshape(m * n, k), affine)  # (m*n, f)
    f = phi.shape[1]
    gram = phi.T @ phi
    if ridge is None:
        lam = 1e-6 * float(np.trace(gram)) / f
    else:
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        lam = float(ridge)
    loggrads = proposal_log_grad(batch.thetas, batch.proposal)  # (m, d)
    phi_sums = phi.reshape(m, n, f).sum(axis=1)  # (m, f)
    rhs = phi_sums.T @ loggrads  # (f, d): sum_j sum_k phi_jk loggrad_j^T
    system = gram + lam * np.eye(f)
    try:
        c, low = scipy.linalg.cho_factor(system)
        weights = -scipy.linalg.cho_solve((c, low), rhs)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(system)
        if lam == 0.0:
            raise SingularGramError(
                f"Gram-matrix sum is singular (condition estimate {cond:.3e}); "
                "pass a positive ridge"
            ) from None
        warnings.warn(
            f"SPD factorization failed (condition estimate {cond:.3e}); "
            "falling back to least squares",
            RuntimeWarning,
        )
        weights = -np.linalg.lstsq(system, rhs, rcond=None)[0]
    return LinearScoreModel(weights=weights, ridge=lam, affine=affine)


def evaluate_score(score_model: LinearScoreModel, x) -> np.ndarray:
    """Fitted score at a single data vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    f = score_model.weights.shape[0]
    if x.size + (1 if score_model.affine else 0) != f:
        raise ValueError(f"data vector length {x.size} does not match feature dim {f}")
    return _features(x[None, :], score_model.affine)[0] @ score_model.weights


def evaluate_scores(score_model: LinearScoreModel, X) -> np.ndarray:
    """Fitted scores at each row of X; (n, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    f = score_model.weights.shape[0]
    if X.shape[1] + (1 if score_model.affine else 0) != f:
        raise ValueError("data dimension does not match the fitted feature dim")
    return _features(X, score_model.affine) @ score_model.weights


def estimate_gradient(
    model: SimulatorModel,
    D: np.ndarray,
    proposal: ProposalSpec,
    m: int,
    n: int,
    ridge: float | None = None,
    affine: bool = True,
    rng=0,
) -> GradEstimate:
    """Approximate log-likelihood gradient at the proposal center.

    Fits a fresh score model from (m, n) simulations and sums its value over
    the observation rows of ``D``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.size == 0:
        raise ValueError("observation set is empty")
    batch = sample_batch(model, proposal, m, n, rng)
    fitted = fit_linear_fsm(batch, ridge=ridge, affine=affine)
    scores = evaluate_scores(fitted, D)
    f = fitted.weights.shape[0]
    phi = _features(batch.data.reshape(m * n, -1), affine)
    system = phi.T @ phi + fitted.ridge * np.eye(f)
    return GradEstimate(
        gradient=scores.sum(axis=0),
        per_observation_scores=scores,
        diagnostics={
            "gram_condition_estimate": float(np.linalg.cond(system)),
            "m": m,
            "n": n,
            "sigma": proposal.sigma,
        },
    )
