"""Synthetic simulator models.

A simulator exposes ``simulate`` (seeded, reproducible sampling) and, for the
models used as test oracles, the analytic score, log-density and exact MLE.
Instances are immutable after construction and safe to share across threads;
each caller supplies its own random stream.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .rng import as_generator


class ModelError(ValueError):
    """Invalid model construction or unsupported operation."""


def _check_theta(theta: np.ndarray, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (dim,):
        raise ModelError(f"parameter has length {theta.size}, expected {dim}")
    if not np.all(np.isfinite(theta)):
        raise ModelError("parameter contains non-finite entries")
    return theta


class SimulatorModel(ABC):
    """Implicit statistical model: sampling is available, the density may not be."""

    param_dim: int
    data_dim: int

    @abstractmethod
    def simulate(self, theta, n: int, rng) -> np.ndarray:
        """Draw ``n`` samples at ``theta``; returns an (n, data_dim) array."""

    def closed_form_score(self, theta, x) -> np.ndarray:
        raise ModelError(f"{type(self).__name__} has no analytic score")

    def closed_form_scores(self, theta, X) -> np.ndarray:
        """Analytic score at each row of ``X``; (n, param_dim)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([self.closed_form_score(theta, x) for x in X])

    def log_density(self, theta, x) -> float:
        raise ModelError(f"{type(self).__name__} has no analytic density")

    def exact_mle(self, D) -> np.ndarray:
        raise ModelError(f"{type(self).__name__} has no exact MLE")


class GaussianMeanModel(SimulatorModel):
    """Multivariate normal with unknown mean and fixed SPD covariance."""

    def __init__(self, dim: int, covariance=None):
        if dim < 1:
            raise ModelError("dim must be >= 1")
        self.param_dim = dim
        self.data_dim = dim
        if covariance is None:
            covariance = np.eye(dim)
        cov = np.asarray(covariance, dtype=float)
        if cov.shape != (dim, dim):
            raise ModelError(f"covariance shape {cov.shape}, expected {(dim, dim)}")
        if not np.allclose(cov, cov.T):
            raise ModelError("covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ModelError("covariance must be positive definite") from exc
        self.covariance = cov
        self._cov_inv = np.linalg.inv(cov)
        sign, logdet = np.linalg.slogdet(cov)
        self._log_norm = -0.5 * (dim * np.log(2 * np.pi) + logdet)

    def simulate(self, theta, n, rng):
        theta = _check_theta(theta, self.param_dim)
        if n < 1:
            raise ModelError("n must be >= 1")
        rng = as_generator(rng)
        z = rng.standard_normal((n, self.data_dim))
        return theta + z @ self._chol.T

    def closed_form_score(self, theta, x):
        theta = _check_theta(theta, self.param_dim)
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.data_dim,):
            raise ModelError("data vector has wrong dimension")
        return self._cov_inv @ (x - theta)

    def closed_form_scores(self, theta, X):
        theta = _check_theta(theta, self.param_dim)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - theta) @ self._cov_inv.T

    def log_density(self, theta, x):
        theta = _check_theta(theta, self.param_dim)
        x = np.asarray(x, dtype=float).reshape(-1)
        r = x - theta
        return float(self._log_norm - 0.5 * r @ self._cov_inv @ r)

    def exact_mle(self, D):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return D.mean(axis=0)


class ShiftedExponentialModel(SimulatorModel):
    """One-dimensional exponential with unknown left endpoint.

    Density rate * exp(-rate * (x - theta)) for x >= theta, zero otherwise.
    The likelihood is discontinuous at the boundary, which makes plain
    gradient ascent fail when initialized above the sample minimum.
    """

    param_dim = 1
    data_dim = 1

    def __init__(self, rate: float = 1.0):
        if not (np.isfinite(rate) and rate > 0):
            raise ModelError("rate must be a positive finite real")
        self.rate = float(rate)

    def simulate(self, theta, n, rng):
        theta = _check_theta(theta, 1)
        if n < 1:
            raise ModelError("n must be >= 1")
        rng = as_generator(rng)
        # inverse CDF; 1 - random() lies in (0, 1] so log is finite
        u = 1.0 - rng.random(n)
        return (theta[0] - np.log(u) / self.rate).reshape(n, 1)

    def closed_form_score(self, theta, x):
        theta = _check_theta(theta, 1)
        x = np.asarray(x, dtype=float).reshape(-1)
        if x[0] < theta[0]:
            raise ModelError("score undefined outside the support (x < theta)")
        return np.array([self.rate])

    def log_density(self, theta, x):
        theta = _check_theta(theta, 1)
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        if x < theta[0]:
            return -np.inf
        return float(np.log(self.rate) - self.rate * (x - theta[0]))

    def exact_mle(self, D):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return np.array([D.min()])


def simulate(model: SimulatorModel, theta, n: int, seed) -> np.ndarray:
    """Seeded convenience wrapper around ``model.simulate``."""
    return model.simulate(theta, n, as_generator(seed))


def model_from_config(block: dict) -> SimulatorModel:
    """Build a model from a run-config model block (id + parameters)."""
    kind = block.get("id")
    if kind == "gaussian":
        return GaussianMeanModel(dim=block["dim"], covariance=block.get("covariance"))
    if kind == "shifted_exp":
        return ShiftedExponentialModel(rate=block.get("rate", 1.0))
    raise ModelError(f"unknown model id: {kind!r}")
