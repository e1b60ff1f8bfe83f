"""Figure rendering for the CLI report path.

Each experiment driver emits CSV rows; these helpers render matching PNG
figures next to the delimited output.  Figures are a convenience view of the
CSV data, never a data source.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_grad_accuracy(rows: list[dict], path: str):
    """Error-vs-budget curves, one line per (method, hyperparameter)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted({(r["method"], r["hyperparam"]) for r in rows})
    for method, hyper in keys:
        sub = [r for r in rows if r["method"] == method and r["hyperparam"] == hyper]
        sub.sort(key=lambda r: r["budget"])
        budgets = [r["budget"] for r in sub]
        means = [r["mean_error"] for r in sub]
        halves = [r["ci_half_width"] for r in sub]
        ax.errorbar(budgets, means, yerr=halves, marker="o", capsize=3,
                    label=f"{method} ({hyper:g})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("simulation budget")
    ax.set_ylabel("gradient error")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_traces(iterates_by_run: dict[int, np.ndarray], path: str):
    """Parameter trajectories, one panel per coordinate."""
    any_tr = next(iter(iterates_by_run.values()))
    d = any_tr.shape[1]
    fig, axes = plt.subplots(1, d, figsize=(3 * d, 3), squeeze=False)
    for i in range(d):
        ax = axes[0][i]
        for run, tr in iterates_by_run.items():
            ax.plot(tr[:, i], alpha=0.6, lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel(f"theta[{i}]")
    _save(fig, path)


def plot_coverage(per_coordinate: np.ndarray, level: float, path: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    idx = np.arange(len(per_coordinate))
    ax.bar(idx, per_coordinate, color="tab:blue")
    ax.axhline(level, color="k", ls="--", label=f"nominal {level:g}")
    ax.set_xlabel("coordinate")
    ax.set_ylabel("coverage")
    ax.set_ylim(0, 1.05)
    ax.legend()
    _save(fig, path)


def plot_bias(rows: list[dict], path: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    sigmas = [r["sigma"] for r in rows]
    ax.plot(sigmas, [r["bias"] for r in rows], "o-", label="measured bias")
    ax.plot(sigmas, [r["bound_rhs"] for r in rows], "s--", label="bound")
    ax.set_xlabel("proposal sigma")
    ax.set_ylabel("score bias")
    ax.legend()
    _save(fig, path)


def plot_bench(rows: list[dict], path: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in sorted({r["method"] for r in rows}):
        sub = [r for r in rows if r["method"] == method]
        sub.sort(key=lambda r: r["cell"])
        ax.plot([r["cell"] for r in sub], [r["median_ms"] for r in sub],
                "o-", label=method)
    ax.set_xlabel("budget / dimension")
    ax.set_ylabel("median ms per gradient")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)
