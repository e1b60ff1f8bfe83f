"""Stochastic-gradient MLE driver with tail averaging and grid search.

Each iteration re-fits the chosen gradient estimator at the current iterate
and applies an ascent update (SGD, Adam or RMSProp).  The returned estimate
is the arithmetic mean of the last ``avg_window`` iterates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import ProposalSpec, estimate_gradient
from .kdesp import KdeSpConfig, spsa_gradient, spsa_schedules
from .models import SimulatorModel
from .rng import Seed, stream

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class FsmSettings:
    sigma: float
    m: int
    n: int = 1
    ridge: float | None = None
    affine: bool = True


@dataclass(frozen=True)
class KdeSpSettings:
    cfg: KdeSpConfig
    n_sim: int


@dataclass(frozen=True)
class OptConfig:
    method: str                      # "fsm" | "kdesp"
    update_rule: str                 # "sgd" | "adam" | "rmsprop"
    step_size: float
    iterations: int
    avg_window: int
    theta0: np.ndarray
    fsm: FsmSettings | None = None
    kdesp: KdeSpSettings | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float).reshape(-1))
        if self.method not in ("fsm", "kdesp"):
            raise ValueError(f"unknown method: {self.method!r}")
        if self.update_rule not in ("sgd", "adam", "rmsprop"):
            raise ValueError(f"unknown update rule: {self.update_rule!r}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.iterations > 0 and not (1 <= self.avg_window <= self.iterations):
            raise ValueError("avg_window must satisfy 1 <= avg_window <= iterations")
        if self.method == "fsm" and self.fsm is None:
            raise ValueError("method 'fsm' requires fsm settings")
        if self.method == "kdesp" and self.kdesp is None:
            raise ValueError("method 'kdesp' requires kdesp settings")


@dataclass
class OptTrace:
    iterates: np.ndarray      # (T+1, d), iterates[0] = theta0
    gradients: np.ndarray     # (T, d)
    averaged: np.ndarray
    seed: Seed
    wall_ms: np.ndarray       # (T,)
    diverged: bool = False


class _Sgd:
    def __init__(self, eta):
        self.eta = eta

    def step(self, grad, eta=None):
        return (self.eta if eta is None else eta) * grad


class _Adam:
    def __init__(self, eta, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta, self.beta1, self.beta2, self.eps = eta, beta1, beta2, eps
        self.m = 0.0
        self.v = 0.0
        self.t = 0

    def step(self, grad, eta=None):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return (self.eta if eta is None else eta) * m_hat / (np.sqrt(v_hat) + self.eps)


class _RmsProp:
    def __init__(self, eta, decay=0.9, eps=1e-8):
        self.eta, self.decay, self.eps = eta, decay, eps
        self.v = 0.0

    def step(self, grad, eta=None):
        self.v = self.decay * self.v + (1 - self.decay) * grad**2
        return (self.eta if eta is None else eta) * grad / (np.sqrt(self.v) + self.eps)


_RULES = {"sgd": _Sgd, "adam": _Adam, "rmsprop": _RmsProp}


def make_update_rule(name: str, eta: float):
    return _RULES[name](eta)


def polyak_average(iterates: np.ndarray, avg_window: int) -> np.ndarray:
    """Mean of the last ``avg_window`` iterates."""
    iterates = np.atleast_2d(np.asarray(iterates, dtype=float))
    if avg_window < 1:
        raise ValueError("avg_window must be >= 1")
    if avg_window > iterates.shape[0]:
        raise ValueError("avg_window exceeds the number of iterates")
    return iterates[-avg_window:].mean(axis=0)


def run_mle(
    model: SimulatorModel,
    D_obs: np.ndarray,
    cfg: OptConfig,
    master_seed: Seed,
) -> OptTrace:
    """Run the full gradient-ascent MLE loop; deterministic given the seed."""
    D_obs = np.atleast_2d(np.asarray(D_obs, dtype=float))
    if D_obs.size == 0:
        raise ValueError("observation set is empty")
    d = cfg.theta0.size
    T = cfg.iterations
    iterates = np.empty((T + 1, d))
    gradients = np.empty((T, d))
    wall_ms = np.zeros(T)
    iterates[0] = cfg.theta0
    rule = make_update_rule(cfg.update_rule, cfg.step_size)
    theta = cfg.theta0.copy()
    diverged = False
    steps_done = 0
    for t in range(T):
        t0 = time.perf_counter()
        rng = stream(master_seed, t)
        if cfg.method == "fsm":
            s = cfg.fsm
            est = estimate_gradient(
                model, D_obs, ProposalSpec(theta, s.sigma),
                m=s.m, n=s.n, ridge=s.ridge, affine=s.affine, rng=rng,
            )
            grad = est.gradient
            theta = theta + rule.step(grad)
        else:
            s = cfg.kdesp
            a_t, _ = spsa_schedules(s.cfg, t + 1)
            grad = spsa_gradient(model, theta, D_obs, s.cfg, t + 1, s.n_sim, rng=rng)
            # the decaying SPSA gain replaces the fixed step size
            theta = theta + rule.step(grad, eta=a_t)
        gradients[t] = grad
        iterates[t + 1] = theta
        wall_ms[t] = (time.perf_counter() - t0) * 1e3
        steps_done = t + 1
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > DIVERGENCE_NORM:
            diverged = True
            break
    if diverged:
        iterates = iterates[: steps_done + 1]
        gradients = gradients[:steps_done]
        wall_ms = wall_ms[:steps_done]
    window = min(cfg.avg_window, iterates.shape[0]) if T > 0 else 1
    averaged = polyak_average(iterates, window)
    return OptTrace(
        iterates=iterates,
        gradients=gradients,
        averaged=averaged,
        seed=master_seed,
        wall_ms=wall_ms,
        diverged=diverged,
    )


@dataclass
class GridResult:
    best: tuple
    table: list = field(default_factory=list)


def _with_hyperparams(cfg: OptConfig, params: tuple, trial_iters: int) -> OptConfig:
    if cfg.method == "fsm":
        sigma, eta = params
        fsm = replace(cfg.fsm, sigma=sigma)
        return replace(cfg, fsm=fsm, step_size=eta, iterations=trial_iters,
                       avg_window=min(cfg.avg_window, trial_iters))
    a, c = params
    kcfg = replace(cfg.kdesp.cfg, a=a, c=c, total_iterations=trial_iters)
    return replace(cfg, kdesp=replace(cfg.kdesp, cfg=kcfg), iterations=trial_iters,
                   avg_window=min(cfg.avg_window, trial_iters))


def tune_grid(
    model: SimulatorModel,
    D_obs: np.ndarray,
    cfg: OptConfig,
    grid: list,
    master_seed: Seed,
    trial_iters: int | None = None,
    n_val: int | None = None,
) -> GridResult:
    """Hyperparameter selection by short-run prediction error.

    For each grid tuple ((sigma, eta) for FSM, (a, c) for KDE-SP) a short run
    is performed; data simulated at the resulting estimate are scored by the
    squared distance between simulated and observed sample means.  Ties break
    in grid order.
    """
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    D_obs = np.atleast_2d(np.asarray(D_obs, dtype=float))
    if trial_iters is None:
        trial_iters = max(20, cfg.iterations // 5)
    if n_val is None:
        n_val = max(100, D_obs.shape[0])
    obs_mean = D_obs.mean(axis=0)
    table = []
    best = None
    best_score = np.inf
    for i, params in enumerate(grid):
        trace = run_mle(model, D_obs, _with_hyperparams(cfg, tuple(params), trial_iters),
                        master_seed=_as_tuple(master_seed) + (i, 0))
        if trace.diverged:
            table.append({"params": tuple(params), "score": np.inf, "status": "diverged"})
            continue
        sims = model.simulate(trace.averaged, n_val,
                              stream(_as_tuple(master_seed) + (i, 1)))
        score = float(np.sum((sims.mean(axis=0) - obs_mean) ** 2))
        table.append({"params": tuple(params), "score": score, "status": "ok"})
        if score < best_score:
            best, best_score = tuple(params), score
    if best is None:
        statuses = ", ".join(f"{r['params']}: {r['status']}" for r in table)
        raise RuntimeError(f"all grid runs diverged ({statuses})")
    return GridResult(best=best, table=table)


def _as_tuple(seed: Seed) -> tuple[int, ...]:
    return (seed,) if isinstance(seed, int) else tuple(seed)
