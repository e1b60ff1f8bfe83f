"""Experiment drivers behind the CLI subcommands.

Each driver consumes a validated :class:`~fsm_mle.config.RunConfig` and
returns plain rows/dicts; the CLI layer handles serialization and figures.
Per-cell seeds are derived from the master seed and cell indices, so outputs
are reproducible under any execution order.
"""

from __future__ import annotations

import time

import numpy as np

from .config import RunConfig
from .estimator import ProposalSpec, estimate_gradient
from .kdesp import KdeSpConfig, spsa_gradient
from .models import GaussianMeanModel
from .optimize import run_mle, tune_grid
from .oracles import bias_scaling_probe
from .rng import stream
from .uq import coverage_experiment


def _observations(rc: RunConfig):
    theta_star = np.asarray(rc.experiment["theta_star"], dtype=float)
    n_obs = rc.experiment["n_obs"]
    return theta_star, rc.model.simulate(theta_star, n_obs, stream(rc.seed, 0))


def run_grad(rc: RunConfig, pmap) -> list[dict]:
    """Gradient-accuracy sweep against the closed-form score."""
    theta_star, D_obs = _observations(rc)
    offset = np.asarray(rc.experiment.get("offset", np.zeros(theta_star.size)),
                        dtype=float)
    theta_t = rc.model.exact_mle(D_obs) + offset
    true_grad = rc.model.closed_form_scores(theta_t, D_obs).sum(axis=0)
    budgets = rc.experiment["budgets"]
    repeats = rc.experiment.get("repeats", 100)
    fsm_sigmas = rc.experiment.get("fsm_sigmas", [0.1])
    kdesp_cs = rc.experiment.get("kdesp_cs", [0.1])

    cells = []
    for s_i, sigma in enumerate(fsm_sigmas):
        for b_i, budget in enumerate(budgets):
            cells.append(("fsm", float(sigma), int(budget), (1, s_i, b_i)))
    for c_i, c in enumerate(kdesp_cs):
        for b_i, budget in enumerate(budgets):
            cells.append(("kdesp", float(c), int(budget), (2, c_i, b_i)))

    def one_cell(cell):
        method, hyper, budget, key = cell
        errors = np.empty(repeats)
        for rep in range(repeats):
            rng = stream(rc.seed, *key, rep)
            if method == "fsm":
                est = estimate_gradient(rc.model, D_obs,
                                        ProposalSpec(theta_t, hyper),
                                        m=budget, n=1, rng=rng)
                grad = est.gradient
            else:
                cfg = KdeSpConfig(a=1.0, c=hyper, total_iterations=1)
                grad = spsa_gradient(rc.model, theta_t, D_obs, cfg, t=1,
                                     n_sim=max(2, budget // 2), rng=rng)
            errors[rep] = np.linalg.norm(grad - true_grad)
        return {
            "method": method,
            "hyperparam": hyper,
            "budget": budget,
            "mean_error": float(errors.mean()),
            "ci_half_width": float(1.96 * errors.std(ddof=1) / np.sqrt(repeats))
            if repeats > 1 else 0.0,
            "repeats": repeats,
        }

    return pmap(one_cell, cells)


def run_optimize(rc: RunConfig, pmap) -> dict:
    """Repeated seeded MLE runs; traces plus final-estimate statistics."""
    theta_star, D_obs = _observations(rc)
    repeats = rc.experiment.get("repeats", 1)

    def one_run(r):
        return run_mle(rc.model, D_obs, rc.opt_config, master_seed=(rc.seed, r, 1))

    traces = pmap(one_run, range(repeats))
    try:
        exact = rc.model.exact_mle(D_obs)
    except Exception:
        exact = None
    finals = []
    for trace in traces:
        entry = {"averaged": trace.averaged, "diverged": trace.diverged}
        if exact is not None:
            entry["error"] = float(np.linalg.norm(trace.averaged - exact))
        finals.append(entry)
    errors = [f["error"] for f in finals if "error" in f and not f["diverged"]]
    return {
        "traces": traces,
        "finals": finals,
        "exact_mle": exact,
        "median_error": float(np.median(errors)) if errors else None,
        "any_diverged": any(t.diverged for t in traces),
    }


def run_tune(rc: RunConfig) -> dict:
    _, D_obs = _observations(rc)
    grid = [tuple(g) for g in rc.experiment["grid"]]
    result = tune_grid(rc.model, D_obs, rc.opt_config, grid,
                       master_seed=(rc.seed, 1),
                       trial_iters=rc.experiment.get("trial_iters"))
    return {"best": result.best, "table": result.table}


def run_coverage(rc: RunConfig, pmap) -> dict:
    theta_star = np.asarray(rc.experiment["theta_star"], dtype=float)
    result = coverage_experiment(
        rc.model,
        theta_star,
        N_obs=rc.experiment["n_obs"],
        runs=rc.experiment["runs"],
        cfg=rc.opt_config,
        level=rc.experiment["level"],
        master_seed=(rc.seed, 1),
        fim_sims=rc.experiment.get("fim_sims", 100_000),
        fim_source=rc.experiment.get("fim_source", "fsm"),
        parallel_map=pmap,
    )
    return {
        "per_coordinate": result.per_coordinate,
        "averaged": result.averaged,
        "runs_used": result.runs_used,
        "runs_diverged": result.runs_diverged,
        "rows": result.rows,
        "level": rc.experiment["level"],
    }


def run_bias_probe(rc: RunConfig) -> list[dict]:
    if not isinstance(rc.model, GaussianMeanModel):
        raise ValueError("bias probe requires the Gaussian mean model")
    theta_star = np.asarray(rc.experiment["theta_star"], dtype=float)
    theta_t = np.asarray(rc.experiment.get("theta_t", theta_star), dtype=float)
    return bias_scaling_probe(
        rc.model.covariance, theta_star, theta_t,
        rc.experiment["sigma_grid"],
        n_samples=rc.experiment.get("samples", 10_000),
        rng=stream(rc.seed, 1),
    )


def run_bench(rc: RunConfig) -> list[dict]:
    """Wall-clock timing per gradient estimate; machine-dependent by nature."""
    repeats = rc.experiment.get("repeats", 1000)
    budgets = rc.experiment.get("budgets", [])
    dims = rc.experiment.get("dims", [])
    rows = []

    def time_fn(fn, reps):
        samples = np.empty(reps)
        for i in range(reps):
            t0 = time.perf_counter()
            fn(i)
            samples[i] = (time.perf_counter() - t0) * 1e3
        q1, med, q3 = np.percentile(samples, [25, 50, 75])
        return float(med), float(q3 - q1)

    for b_i, budget in enumerate(budgets):
        model = GaussianMeanModel(2)
        D = model.simulate(np.ones(2), 10, stream(rc.seed, 3, b_i))
        theta_t = model.exact_mle(D)

        def fsm_fn(i, budget=budget, model=model, D=D, theta_t=theta_t, b_i=b_i):
            estimate_gradient(model, D, ProposalSpec(theta_t, 0.1),
                              m=budget, n=1, rng=stream(rc.seed, 4, b_i, i))

        def kdesp_fn(i, budget=budget, model=model, D=D, theta_t=theta_t, b_i=b_i):
            cfg = KdeSpConfig(a=1.0, c=0.1, total_iterations=1)
            spsa_gradient(model, theta_t, D, cfg, t=1,
                          n_sim=max(2, budget // 2), rng=stream(rc.seed, 5, b_i, i))

        for method, fn in (("fsm", fsm_fn), ("kdesp", kdesp_fn)):
            med, iqr = time_fn(fn, repeats)
            rows.append({"method": method, "axis": "budget", "cell": budget,
                         "median_ms": med, "iqr_ms": iqr, "repeats": repeats})

    for d_i, dim in enumerate(dims):
        model = GaussianMeanModel(dim)
        D = model.simulate(np.ones(dim), 10, stream(rc.seed, 6, d_i))
        theta_t = model.exact_mle(D)

        def fsm_fn(i, model=model, D=D, theta_t=theta_t, d_i=d_i):
            estimate_gradient(model, D, ProposalSpec(theta_t, 0.1),
                              m=200, n=1, rng=stream(rc.seed, 7, d_i, i))

        def kdesp_fn(i, model=model, D=D, theta_t=theta_t, d_i=d_i):
            cfg = KdeSpConfig(a=1.0, c=0.1, total_iterations=1)
            spsa_gradient(model, theta_t, D, cfg, t=1, n_sim=100,
                          rng=stream(rc.seed, 8, d_i, i))

        for method, fn in (("fsm", fsm_fn), ("kdesp", kdesp_fn)):
            med, iqr = time_fn(fn, repeats)
            rows.append({"method": method, "axis": "dimension", "cell": dim,
                         "median_ms": med, "iqr_ms": iqr, "repeats": repeats})
    return rows
