"""Command-line harness.

Subcommands: grad, optimize, tune, coverage, bias-probe, bench, verify.
Each reads a JSON run config, writes CSV data (plus JSON summaries) into the
output directory, and by default renders matplotlib figures alongside.

Exit codes: 0 success, 2 config error, 3 divergence, 4 verification failure.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import experiments, plots
from .config import ConfigError, parse_config
from .reporting import write_csv, write_json
from .util import make_parallel_map, resolve_threads
from .verify import run_all_checks
from .oracles import bias_scaling_probe


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Path to the JSON run configuration.")
@click.option("--seed", type=click.IntRange(min=0), default=None,
              help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides config 'output').")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads for independent repeats (env: FSM_MLE_THREADS).")
@click.option("--plot/--no-plot", default=True, show_default=True,
              help="Render figures next to the CSV output.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, threads, plot):
    """Likelihood-free MLE toolkit based on local Fisher score matching."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out_dir=out_dir,
                   threads=resolve_threads(threads), plot=plot)


def _load(ctx, expected_kind: str):
    opts = ctx.obj
    if not opts["config_path"]:
        _config_fail("a --config file is required for this subcommand")
    try:
        with open(opts["config_path"], "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _config_fail(str(exc))
    if opts["seed"] is not None:
        doc["seed"] = opts["seed"]
    if opts["out_dir"] is not None:
        doc["output"] = opts["out_dir"]
    try:
        rc = parse_config(doc)
        if rc.experiment["kind"] != expected_kind:
            raise ConfigError(
                f"experiment.kind: expected {expected_kind!r} for this "
                f"subcommand, got {rc.experiment['kind']!r}")
    except ConfigError as exc:
        _config_fail(str(exc))
    out = rc.output or "out"
    return rc, out, make_parallel_map(opts["threads"]), opts["plot"]


def _config_fail(message: str):
    click.echo(f"config error: {message}", err=True)
    sys.exit(2)


@main.command()
@click.pass_context
def grad(ctx):
    """Gradient-accuracy sweep over budgets and hyperparameters."""
    rc, out, pmap, plot = _load(ctx, "grad")
    rows = experiments.run_grad(rc, pmap)
    write_csv(f"{out}/grad.csv",
              ["method", "hyperparam", "budget", "mean_error",
               "ci_half_width", "repeats"],
              [[r["method"], r["hyperparam"], r["budget"], r["mean_error"],
                r["ci_half_width"], r["repeats"]] for r in rows],
              rc.config_hash)
    if plot:
        plots.plot_grad_accuracy(rows, f"{out}/grad.png")
    click.echo(f"wrote {len(rows)} cells to {out}/grad.csv")


@main.command()
@click.pass_context
def optimize(ctx):
    """Run the stochastic-gradient MLE loop (possibly repeated over seeds)."""
    rc, out, pmap, plot = _load(ctx, "optimize")
    res = experiments.run_optimize(rc, pmap)
    trace_rows, timing_rows = [], []
    d = rc.opt_config.theta0.size
    for run, trace in enumerate(res["traces"]):
        for t in range(trace.gradients.shape[0]):
            trace_rows.append([run, t + 1,
                               *[float(v) for v in trace.iterates[t + 1]],
                               *[float(v) for v in trace.gradients[t]]])
            timing_rows.append([run, t + 1, float(trace.wall_ms[t])])
    header = (["run", "t"] + [f"theta_{i}" for i in range(d)]
              + [f"grad_{i}" for i in range(d)])
    write_csv(f"{out}/trace.csv", header, trace_rows, rc.config_hash)
    write_csv(f"{out}/timing.csv", ["run", "t", "wall_ms"], timing_rows,
              rc.config_hash)
    write_json(f"{out}/summary.json", {
        "config": rc.raw,
        "seed": rc.seed,
        "finals": [{"averaged": f["averaged"], "diverged": f["diverged"],
                    **({"error": f["error"]} if "error" in f else {})}
                   for f in res["finals"]],
        "exact_mle": res["exact_mle"],
        "median_error": res["median_error"],
    })
    if plot:
        shown = {i: tr.iterates for i, tr in enumerate(res["traces"][:8])}
        plots.plot_traces(shown, f"{out}/trace.png")
    click.echo(f"wrote {len(trace_rows)} trace rows to {out}/trace.csv")
    if res["any_diverged"]:
        click.echo("divergence detected in at least one run", err=True)
        sys.exit(3)


@main.command()
@click.pass_context
def tune(ctx):
    """Hyperparameter grid search by short-run prediction error."""
    rc, out, pmap, plot = _load(ctx, "tune")
    res = experiments.run_tune(rc)
    write_csv(f"{out}/tune.csv",
              ["param_0", "param_1", "score", "status"],
              [[r["params"][0], r["params"][1],
                r["score"] if np.isfinite(r["score"]) else "inf",
                r["status"]] for r in res["table"]],
              rc.config_hash)
    write_json(f"{out}/tune.json", {"best": list(res["best"]), "seed": rc.seed,
                                    "config": rc.raw})
    click.echo(f"best hyperparameters: {res['best']}")


@main.command()
@click.pass_context
def coverage(ctx):
    """Confidence-interval coverage over repeated end-to-end runs."""
    rc, out, pmap, plot = _load(ctx, "coverage")
    res = experiments.run_coverage(rc, pmap)
    d = len(res["per_coordinate"])
    rows = []
    for r in res["rows"]:
        if r["status"] == "ok":
            rows.append([r["run"], r["status"],
                         *[float(v) for v in r["theta_bar"]],
                         *[int(v) for v in r["contains"]]])
        else:
            rows.append([r["run"], r["status"]] + [""] * (2 * d))
    header = (["run", "status"] + [f"theta_bar_{i}" for i in range(d)]
              + [f"contains_{i}" for i in range(d)])
    write_csv(f"{out}/coverage.csv", header, rows, rc.config_hash)
    write_json(f"{out}/coverage.json", {
        "per_coordinate": res["per_coordinate"],
        "averaged": res["averaged"],
        "runs_used": res["runs_used"],
        "runs_diverged": res["runs_diverged"],
        "level": res["level"],
        "seed": rc.seed,
        "config": rc.raw,
    })
    if plot:
        plots.plot_coverage(np.asarray(res["per_coordinate"]), res["level"],
                            f"{out}/coverage.png")
    click.echo(f"averaged coverage: {res['averaged']:.3f} "
               f"({res['runs_used']} runs, {res['runs_diverged']} diverged)")


@main.command("bias-probe")
@click.pass_context
def bias_probe(ctx):
    """Smoothing-bias table across proposal widths on the Gaussian model."""
    rc, out, pmap, plot = _load(ctx, "bias_probe")
    rows = experiments.run_bias_probe(rc)
    write_csv(f"{out}/bias.csv",
              ["sigma", "bias", "bound_rhs", "lipschitz", "mean_likelihood_ratio"],
              [[r["sigma"], r["bias"], r["bound_rhs"], r["lipschitz"],
                r["mean_likelihood_ratio"]] for r in rows],
              rc.config_hash)
    if plot:
        plots.plot_bias(rows, f"{out}/bias.png")
    click.echo(f"wrote {len(rows)} rows to {out}/bias.csv")


@main.command()
@click.pass_context
def bench(ctx):
    """Wall-clock timing of repeated gradient estimation (machine-dependent)."""
    rc, out, pmap, plot = _load(ctx, "bench")
    rows = experiments.run_bench(rc)
    write_csv(f"{out}/bench.csv",
              ["method", "axis", "cell", "median_ms", "iqr_ms", "repeats"],
              [[r["method"], r["axis"], r["cell"], r["median_ms"], r["iqr_ms"],
                r["repeats"]] for r in rows],
              rc.config_hash)
    if plot:
        plots.plot_bench(rows, f"{out}/bench.png")
    click.echo(f"wrote {len(rows)} timing rows to {out}/bench.csv "
               "(timings are machine-dependent)")


@main.command()
@click.pass_context
def verify(ctx):
    """Run all oracle identity checks; nonzero exit on any failure."""
    opts = ctx.obj
    results = run_all_checks()
    for res in results:
        click.echo(res.line())
    out = opts["out_dir"]
    if out:
        write_csv(f"{out}/verify.csv",
                  ["check", "passed", "residual", "tolerance"],
                  [[r.name, int(r.passed), r.residual, r.tolerance]
                   for r in results],
                  "verify")
        bias_rows = bias_scaling_probe(np.eye(2), np.zeros(2), np.zeros(2),
                                       [0.0, 0.01, 0.1, 0.5, 1.0],
                                       rng=opts["seed"] or 0)
        write_csv(f"{out}/bias_table.csv",
                  ["sigma", "bias", "bound_rhs", "lipschitz",
                   "mean_likelihood_ratio"],
                  [[r["sigma"], r["bias"], r["bound_rhs"], r["lipschitz"],
                    r["mean_likelihood_ratio"]] for r in bias_rows],
                  "verify")
    if not all(r.passed for r in results):
        sys.exit(4)


if __name__ == "__main__":
    main()
