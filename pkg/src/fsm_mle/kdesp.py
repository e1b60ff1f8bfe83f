"""KDE-SP baseline: kernel-density likelihood plus SPSA gradients.

The log-likelihood is approximated by a Gaussian product-kernel KDE over
fresh simulations, and its gradient by a two-point simultaneous-perturbation
difference with the classic decaying gain schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import SimulatorModel
from .rng import as_generator


@dataclass(frozen=True)
class KdeSpConfig:
    """SPSA gains and KDE bandwidth selection.

    ``a`` and ``c`` set the initial step and perturbation sizes; the gains
    decay as a / (t + A)^alpha and c / t^gamma.  ``stability_offset`` (A)
    defaults to floor(0.1 * total_iterations).
    """

    a: float
    c: float
    total_iterations: int
    alpha: float = 1.0
    gamma: float = 1.0 / 6.0
    stability_offset: int | None = None
    bandwidth_rule: str | float = "silverman"

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ValueError("a and c must be positive")
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be nonnegative")
        if self.stability_offset is not None and self.stability_offset < 0:
            raise ValueError("stability_offset must be nonnegative")

    @property
    def offset(self) -> int:
        if self.stability_offset is None:
            return int(math.floor(0.1 * self.total_iterations))
        return self.stability_offset


def spsa_schedules(cfg: KdeSpConfig, t: int) -> tuple[float, float]:
    """Gains (a_t, c_t) at iteration t >= 1."""
    if t < 1:
        raise ValueError("iteration index must be >= 1 (c_t undefined at t=0)")
    a_t = cfg.a / (t + cfg.offset) ** cfg.alpha
    c_t = cfg.c / t**cfg.gamma
    return a_t, c_t


def bandwidths(sims: np.ndarray, rule: str | float) -> np.ndarray:
    """Per-dimension kernel bandwidths for a simulated batch."""
    sims = np.atleast_2d(sims)
    n, k = sims.shape
    if isinstance(rule, (int, float)):
        h = np.full(k, float(rule))
    else:
        std = sims.std(axis=0, ddof=1)
        if rule == "silverman":
            factor = (4.0 / (k + 2.0)) ** (1.0 / (k + 4.0)) * n ** (-1.0 / (k + 4.0))
        elif rule == "scott":
            factor = n ** (-1.0 / (k + 4.0))
        else:
            raise ValueError(f"unknown bandwidth rule: {rule!r}")
        h = factor * std
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise ValueError("degenerate bandwidth (zero or non-finite); "
                         "simulations may be identical")
    return h


def kde_logpdf(sims: np.ndarray, h: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Gaussian product-kernel log-density of each query point."""
    sims = np.atleast_2d(sims)
    points = np.atleast_2d(points)
    n = sims.shape[0]
    # (q, n) log kernel values, summed over dimensions
    z = (points[:, None, :] - sims[None, :, :]) / h
    logk = -0.5 * np.sum(z**2, axis=2) - np.sum(np.log(h * math.sqrt(2 * math.pi)))
    return logsumexp(logk, axis=1) - math.log(n)


def kde_loglik(
    model: SimulatorModel,
    theta,
    D_obs: np.ndarray,
    n_sim: int,
    bandwidth_rule: str | float = "silverman",
    rng=0,
) -> float:
    """KDE approximation of the dataset log-likelihood at theta."""
    if n_sim < 2:
        raise ValueError("n_sim must be >= 2")
    sims = model.simulate(theta, n_sim, as_generator(rng))
    h = bandwidths(sims, bandwidth_rule)
    return float(kde_logpdf(sims, h, np.atleast_2d(D_obs)).sum())


def spsa_gradient(
    model: SimulatorModel,
    theta,
    D_obs: np.ndarray,
    cfg: KdeSpConfig,
    t: int,
    n_sim: int,
    rng=0,
    loglik_fn=None,
    common_random: bool = False,
) -> np.ndarray:
    """Two-point SPSA gradient estimate at theta for iteration t.

    Perturbations are componentwise Rademacher, for which multiplying the
    difference quotient by the perturbation vector coincides with the
    classical elementwise-inverse form.  ``loglik_fn(theta, rng) -> float``
    replaces the KDE surrogate when supplied (used for unit testing the SPSA
    machinery with an exact likelihood).
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    rng = as_generator(rng)
    _, c_t = spsa_schedules(cfg, t)
    delta = rng.integers(0, 2, size=theta.size) * 2.0 - 1.0
    rng_plus, rng_minus = rng.spawn(2)
    if common_random:
        # identical stream for both sides, not a shared mutable generator
        clone = np.random.Philox()
        clone.state = rng_plus.bit_generator.state
        rng_minus = np.random.Generator(clone)
    if loglik_fn is None:
        def loglik_fn(th, r):
            return kde_loglik(model, th, D_obs, n_sim, cfg.bandwidth_rule, r)
    lp = loglik_fn(theta + c_t * delta, rng_plus)
    lm = loglik_fn(theta - c_t * delta, rng_minus)
    return delta * (lp - lm) / (2.0 * c_t)
