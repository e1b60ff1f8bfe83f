"""Independent ground-truth computations for tests, verification and benchmarks.

For the Gaussian location model the smoothed log-likelihood has a closed
form (a Gaussian convolution), so both the smoothed gradient and the
posterior-mean score are available exactly.  A Gauss-Hermite quadrature
route provides a second, model-agnostic evaluation for low dimensions, and
the bias probe compares the smoothed score against the raw score across a
grid of proposal widths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp

from .models import SimulatorModel
from .rng import as_generator


@dataclass(frozen=True)
class SmoothedGaussianOracle:
    """Gaussian location model x ~ N(theta, covariance) smoothed by N(center, sigma^2 I)."""

    covariance: np.ndarray
    sigma: float
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def smoothed_grad_exact(oracle: SmoothedGaussianOracle, x) -> np.ndarray:
    """Gradient of the smoothed Gaussian log-likelihood: (Sigma + sigma^2 I)^-1 (x - center)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    d = oracle.center.size
    return np.linalg.solve(
        oracle.covariance + oracle.sigma**2 * np.eye(d), x - oracle.center
    )


def bayes_optimal_score_gaussian(covariance, sigma: float, theta_t, x) -> np.ndarray:
    """Posterior-mean score for the conjugate Gaussian pair.

    The posterior of theta given x under the proposal N(theta_t, sigma^2 I)
    is Gaussian; the expected score Sigma^-1 (x - E[theta | x]) equals the
    smoothed gradient.
    """
    covariance = np.asarray(covariance, dtype=float)
    theta_t = np.asarray(theta_t, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = theta_t.size
    cov_inv = np.linalg.inv(covariance)
    precision = cov_inv + np.eye(d) / sigma**2
    post_mean = np.linalg.solve(precision, cov_inv @ x + theta_t / sigma**2)
    return cov_inv @ (x - post_mean)


def _smoothed_loglik_gh(model, theta_t, sigma, x, nodes):
    """log E_{z ~ N(0, I)} [ p(x | theta_t + sigma z) ] by Gauss-Hermite quadrature."""
    d = np.asarray(theta_t).size
    u, w = hermgauss(nodes)
    logw = np.log(w)
    if d == 1:
        thetas = theta_t[0] + sigma * np.sqrt(2.0) * u
        logl = np.array([model.log_density(np.array([th]), x) for th in thetas])
        return logsumexp(logw + logl) - 0.5 * np.log(np.pi)
    uu1, uu2 = np.meshgrid(u, u, indexing="ij")
    ww = logw[:, None] + logw[None, :]
    logl = np.empty_like(uu1)
    for i in range(nodes):
        for j in range(nodes):
            th = theta_t + sigma * np.sqrt(2.0) * np.array([uu1[i, j], uu2[i, j]])
            logl[i, j] = model.log_density(th, x)
    return logsumexp(ww + logl) - np.log(np.pi)


def smoothed_grad_quadrature(
    model: SimulatorModel,
    theta_t,
    sigma: float,
    x,
    nodes: int = 64,
) -> np.ndarray:
    """Central-difference gradient of the quadrature-evaluated smoothed log-likelihood.

    Tensor-grid quadrature: supported for param_dim <= 2 on models exposing
    an exact density.  The density must be smooth in theta: with a
    parameter-dependent support the fixed node grid never registers the
    boundary moving, so the finite difference silently drops that term.
    """
    theta_t = np.asarray(theta_t, dtype=float).reshape(-1)
    d = theta_t.size
    if d > 2:
        raise ValueError("tensor-grid quadrature supports param_dim <= 2 only")
    grad = np.empty(d)
    for i in range(d):
        h = 1e-4 * max(1.0, abs(theta_t[i]))
        tp, tm = theta_t.copy(), theta_t.copy()
        tp[i] += h
        tm[i] -= h
        lp = _smoothed_loglik_gh(model, tp, sigma, x, nodes)
        lm = _smoothed_loglik_gh(model, tm, sigma, x, nodes)
        grad[i] = (lp - lm) / (2 * h)
    return grad


def bias_scaling_probe(
    covariance,
    theta_star,
    theta_t,
    sigma_grid,
    n_samples: int = 10_000,
    rng=0,
) -> list[dict]:
    """Smoothing bias of the posterior-mean score on the Gaussian model.

    For x ~ N(theta_star, Sigma), measures E || smoothed score - raw score ||
    per proposal width, along with the one-sided bound L sqrt(d) sigma E[R]
    where L is the largest eigenvalue of Sigma^-1 and R the likelihood ratio
    between theta_star and theta_t.
    """
    covariance = np.asarray(covariance, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float).reshape(-1)
    theta_t = np.asarray(theta_t, dtype=float).reshape(-1)
    d = theta_star.size
    rng = as_generator(rng)
    chol = np.linalg.cholesky(covariance)
    x = theta_star + rng.standard_normal((n_samples, d)) @ chol.T
    cov_inv = np.linalg.inv(covariance)
    lips = float(np.linalg.eigvalsh(cov_inv).max())
    # likelihood ratio p(x | theta_star) / p(x | theta_t), Monte Carlo mean
    r_star = x - theta_star
    r_t = x - theta_t
    log_ratio = -0.5 * (np.einsum("ni,ij,nj->n", r_star, cov_inv, r_star)
                        - np.einsum("ni,ij,nj->n", r_t, cov_inv, r_t))
    mean_ratio = float(np.exp(log_ratio).mean())
    rows = []
    for sigma in sigma_grid:
        if sigma == 0:
            bias = 0.0
        else:
            smooth_inv = np.linalg.inv(covariance + sigma**2 * np.eye(d))
            diff = r_t @ (smooth_inv - cov_inv).T
            bias = float(np.linalg.norm(diff, axis=1).mean())
        rows.append({
            "sigma": float(sigma),
            "bias": bias,
            "bound_rhs": lips * np.sqrt(d) * float(sigma) * mean_ratio,
            "lipschitz": lips,
            "mean_likelihood_ratio": mean_ratio,
        })
    return rows


def objective_forms_gh(
    theta_t: float,
    sigma: float,
    tau: float,
    w_values,
    nodes: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """Both score-matching objective forms on a 1-D Gaussian, by quadrature.

    Returns (direct, tractable) objective values for each scalar weight in
    ``w_values`` with the strictly linear model S(x) = w x.  The direct form
    squares the residual against the true score (x - theta) / tau^2; the
    tractable form replaces it with the proposal log-gradient.  The two must
    differ by a weight-independent constant.
    """
    u, w = hermgauss(nodes)
    # theta = theta_t + sigma sqrt(2) u1; x = theta + tau sqrt(2) u2
    direct = []
    tractable = []
    ww = np.outer(w, w) / np.pi
    u1 = theta_t + sigma * np.sqrt(2.0) * u
    for wv in np.asarray(w_values, dtype=float):
        acc_direct = 0.0
        acc_tract = 0.0
        for i, th in enumerate(u1):
            xs = th + tau * np.sqrt(2.0) * u
            score = (xs - th) / tau**2
            s_model = wv * xs
            loggrad = -(th - theta_t) / sigma**2
            acc_direct += np.sum(ww[i] * (score - s_model) ** 2)
            acc_tract += np.sum(ww[i] * (s_model**2 + 2 * s_model * loggrad))
        direct.append(acc_direct)
        tractable.append(acc_tract)
    return np.asarray(direct), np.asarray(tractable)
