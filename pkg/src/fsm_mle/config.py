"""Run-configuration parsing, validation and hashing.

A run config is a single JSON document with blocks ``model``, ``method``,
``optimizer``, ``experiment`` plus ``seed`` and optional ``output``.  Unknown
keys are rejected with the offending path; range checks happen here so the
drivers can assume a valid config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .kdesp import KdeSpConfig
from .models import SimulatorModel, model_from_config
from .optimize import FsmSettings, KdeSpSettings, OptConfig


class ConfigError(ValueError):
    """Invalid run configuration; message includes the JSON path."""


def _require(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigError(f"{path}.{key}: missing required key")
    return block[key]


def _reject_unknown(block: dict, allowed: set, path: str):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _positive(value, path: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if not v > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return v


def _nonneg_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ConfigError(f"{path}: must be a nonnegative integer, got {value!r}")
    return value


def _pos_int(value, path: str) -> int:
    v = _nonneg_int(value, path)
    if v == 0:
        raise ConfigError(f"{path}: must be >= 1")
    return v


_EXPERIMENT_KEYS = {
    "grad": {"kind", "theta_star", "n_obs", "budgets", "repeats",
             "fsm_sigmas", "kdesp_cs", "offset"},
    "optimize": {"kind", "theta_star", "n_obs", "repeats"},
    "tune": {"kind", "theta_star", "n_obs", "grid", "trial_iters"},
    "coverage": {"kind", "theta_star", "n_obs", "runs", "level",
                 "fim_sims", "fim_source"},
    "bias_probe": {"kind", "theta_star", "theta_t", "sigma_grid", "samples"},
    "bench": {"kind", "theta_star", "n_obs", "budgets", "dims", "repeats"},
    "verify": {"kind"},
}


@dataclass
class RunConfig:
    raw: dict
    model: SimulatorModel
    method_name: str
    opt_config: OptConfig | None
    experiment: dict
    seed: int
    output: str | None = None
    config_hash: str = field(init=False)

    def __post_init__(self):
        # The output directory is presentational: two runs that differ only
        # in where they write must produce identical data rows, hash column
        # included.
        self.config_hash = config_hash_of(
            {k: v for k, v in self.raw.items() if k != "output"}
        )


def _parse_method(block: dict, iterations: int) -> tuple[str, FsmSettings | None, KdeSpSettings | None]:
    name = _require(block, "name", "method")
    if name == "fsm":
        _reject_unknown(block, {"name", "sigma", "m", "n", "ridge", "affine"}, "method")
        sigma = _positive(_require(block, "sigma", "method"), "method.sigma")
        settings = FsmSettings(
            sigma=sigma,
            m=_pos_int(_require(block, "m", "method"), "method.m"),
            n=_pos_int(block.get("n", 1), "method.n"),
            ridge=None if block.get("ridge") is None else float(block["ridge"]),
            affine=bool(block.get("affine", True)),
        )
        return name, settings, None
    if name == "kdesp":
        _reject_unknown(block, {"name", "a", "c", "alpha", "gamma",
                                "stability_offset", "n_sim", "bandwidth"}, "method")
        cfg = KdeSpConfig(
            a=_positive(_require(block, "a", "method"), "method.a"),
            c=_positive(_require(block, "c", "method"), "method.c"),
            total_iterations=iterations,
            alpha=float(block.get("alpha", 1.0)),
            gamma=float(block.get("gamma", 1.0 / 6.0)),
            stability_offset=block.get("stability_offset"),
            bandwidth_rule=block.get("bandwidth", "silverman"),
        )
        n_sim = _pos_int(_require(block, "n_sim", "method"), "method.n_sim")
        if n_sim < 2:
            raise ConfigError("method.n_sim: must be >= 2 for KDE")
        return name, None, KdeSpSettings(cfg=cfg, n_sim=n_sim)
    raise ConfigError(f"method.name: unknown method {name!r}")


def _parse_experiment(block: dict) -> dict:
    kind = _require(block, "kind", "experiment")
    if kind not in _EXPERIMENT_KEYS:
        raise ConfigError(f"experiment.kind: unknown kind {kind!r}")
    _reject_unknown(block, _EXPERIMENT_KEYS[kind], "experiment")
    if kind == "coverage":
        level = float(_require(block, "level", "experiment"))
        if not 0.0 < level < 1.0:
            raise ConfigError("experiment.level: must lie strictly in (0, 1)")
        _pos_int(_require(block, "runs", "experiment"), "experiment.runs")
    if kind == "tune" and not _require(block, "grid", "experiment"):
        raise ConfigError("experiment.grid: grid must be nonempty")
    if kind == "grad" and not _require(block, "budgets", "experiment"):
        raise ConfigError("experiment.budgets: must be nonempty")
    if kind == "bias_probe":
        grid = _require(block, "sigma_grid", "experiment")
        if not grid:
            raise ConfigError("experiment.sigma_grid: must be nonempty")
        if any(s < 0 for s in grid):
            raise ConfigError("experiment.sigma_grid: entries must be >= 0")
    return dict(block)


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a JSON object")
    _reject_unknown(doc, {"model", "method", "optimizer", "experiment",
                          "seed", "output"}, "top level")
    model_block = _require(doc, "model", "top level")
    _reject_unknown(model_block, {"id", "dim", "covariance", "rate"}, "model")
    try:
        model = model_from_config(model_block)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc

    experiment = _parse_experiment(_require(doc, "experiment", "top level"))

    opt_config = None
    method_name = "fsm"
    needs_optimizer = experiment["kind"] in ("optimize", "tune", "coverage")
    if needs_optimizer or "optimizer" in doc:
        opt_block = _require(doc, "optimizer", "top level")
        _reject_unknown(opt_block, {"rule", "step_size", "iterations",
                                    "avg_window", "theta0"}, "optimizer")
        iterations = _nonneg_int(_require(opt_block, "iterations", "optimizer"),
                                 "optimizer.iterations")
        method_name, fsm, kdesp = _parse_method(_require(doc, "method", "top level"),
                                                iterations)
        avg_window = _pos_int(_require(opt_block, "avg_window", "optimizer"),
                              "optimizer.avg_window")
        try:
            opt_config = OptConfig(
                method=method_name,
                update_rule=_require(opt_block, "rule", "optimizer"),
                step_size=_positive(_require(opt_block, "step_size", "optimizer"),
                                    "optimizer.step_size"),
                iterations=iterations,
                avg_window=avg_window,
                theta0=_require(opt_block, "theta0", "optimizer"),
                fsm=fsm,
                kdesp=kdesp,
            )
        except ValueError as exc:
            raise ConfigError(f"optimizer: {exc}") from exc

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")

    return RunConfig(
        raw=doc,
        model=model,
        method_name=method_name,
        opt_config=opt_config,
        experiment=experiment,
        seed=seed,
        output=doc.get("output"),
    )


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


def config_hash_of(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
