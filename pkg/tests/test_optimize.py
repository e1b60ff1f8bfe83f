"""Tests for the ascent loop, update rules, averaging and grid search."""

import warnings

import numpy as np
import pytest

from fsm_mle.kdesp import KdeSpConfig
from fsm_mle.models import GaussianMeanModel
from fsm_mle.optimize import (
    FsmSettings,
    KdeSpSettings,
    OptConfig,
    make_update_rule,
    polyak_average,
    run_mle,
    tune_grid,
)
from fsm_mle.rng import stream


def _fsm_cfg(**kw):
    base = dict(
        method="fsm",
        update_rule="sgd",
        step_size=0.05,
        iterations=20,
        avg_window=5,
        theta0=np.zeros(2),
        fsm=FsmSettings(sigma=0.2, m=100, n=1),
    )
    base.update(kw)
    return OptConfig(**base)


class TestUpdateRules:
    def test_sgd_step(self):
        rule = make_update_rule("sgd", 0.1)
        assert np.allclose(rule.step(np.array([2.0, -4.0])), [0.2, -0.4])

    def test_adam_three_hand_iterations(self):
        # With a constant gradient, bias correction makes every Adam step
        # equal to eta * g / (|g| + eps) ~ eta * sign(g).
        rule = make_update_rule("adam", 0.5)
        g = np.array([3.0])
        for _ in range(3):
            step = rule.step(g)
            assert step[0] == pytest.approx(0.5, rel=1e-6)

    def test_adam_momentum_carries_over(self):
        rule = make_update_rule("adam", 1.0)
        rule.step(np.array([1.0]))
        # After a sign flip the first moment still remembers the old
        # direction, so the next step is damped below eta.
        step = rule.step(np.array([-1.0]))
        assert abs(step[0]) < 1.0

    def test_rmsprop_hand_values(self):
        rule = make_update_rule("rmsprop", 1.0)
        g = np.array([2.0])
        # v1 = 0.1 * 4 = 0.4 -> step = 2 / sqrt(0.4)
        s1 = rule.step(g)
        assert s1[0] == pytest.approx(2.0 / (np.sqrt(0.4) + 1e-8))
        # v2 = 0.9 * 0.4 + 0.1 * 4 = 0.76
        s2 = rule.step(g)
        assert s2[0] == pytest.approx(2.0 / (np.sqrt(0.76) + 1e-8))


class TestPolyakAverage:
    def test_window_mean(self):
        its = np.arange(1.0, 11.0)[:, None]
        assert polyak_average(its, 10)[0] == pytest.approx(5.5)
        assert polyak_average(its, 1)[0] == pytest.approx(10.0)
        assert polyak_average(its, 4)[0] == pytest.approx(8.5)

    def test_window_validation(self):
        its = np.zeros((5, 2))
        with pytest.raises(ValueError):
            polyak_average(its, 0)
        with pytest.raises(ValueError):
            polyak_average(its, 6)


class TestRunMle:
    def test_zero_iterations_returns_theta0(self):
        model = GaussianMeanModel(2)
        obs = model.simulate(np.ones(2), 5, stream(51))
        cfg = _fsm_cfg(iterations=0, avg_window=1)
        res = run_mle(model, obs, cfg, master_seed=0)
        assert np.array_equal(res.averaged, cfg.theta0)
        assert res.iterates.shape == (1, 2)

    def test_exact_score_sgd_recurrence(self):
        # Substituting the closed-form score for the fitted one gives the
        # deterministic recurrence theta' = theta + eta * N * (xbar - theta),
        # so the error contracts by (1 - eta N) each step.  Mimic it with a
        # very wide, large-budget fit and check rough agreement.
        model = GaussianMeanModel(1)
        obs = np.array([[1.0], [3.0]])  # xbar = 2
        cfg = _fsm_cfg(
            theta0=np.zeros(1),
            step_size=0.1,
            iterations=8,
            avg_window=1,
            fsm=FsmSettings(sigma=1.0, m=20000, n=1),
        )
        res = run_mle(model, obs, cfg, master_seed=(52,))
        # smoothed recurrence: theta' = theta + eta * 2 * (xbar - theta)/(1+sigma^2)
        theta = 0.0
        for _ in range(8):
            theta += 0.1 * 2 * (2.0 - theta) / 2.0
        assert res.iterates[-1, 0] == pytest.approx(theta, abs=0.05)

    def test_trace_shapes_and_determinism(self):
        model = GaussianMeanModel(2)
        obs = model.simulate(np.ones(2), 10, stream(53))
        cfg = _fsm_cfg()
        a = run_mle(model, obs, cfg, master_seed=(54,))
        b = run_mle(model, obs, cfg, master_seed=(54,))
        assert np.array_equal(a.iterates, b.iterates)
        assert a.iterates.shape == (21, 2)
        assert a.gradients.shape == (20, 2)
        assert a.wall_ms.shape == (20,)

    def test_divergence_guard(self):
        model = GaussianMeanModel(1)
        obs = np.array([[0.0]])
        cfg = _fsm_cfg(
            theta0=np.array([1.0]),
            step_size=1e9,
            iterations=50,
            avg_window=1,
            fsm=FsmSettings(sigma=0.5, m=20, n=1),
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = run_mle(model, obs, cfg, master_seed=(55,))
        assert res.diverged
        assert res.iterates.shape[0] < 51

    def test_kdesp_uses_decaying_gain(self):
        model = GaussianMeanModel(2)
        obs = model.simulate(np.ones(2), 10, stream(56))
        kcfg = KdeSpConfig(a=0.01, c=1.0, total_iterations=30)
        cfg = OptConfig(
            method="kdesp",
            update_rule="sgd",
            step_size=1.0,
            iterations=30,
            avg_window=10,
            theta0=np.zeros(2),
            kdesp=KdeSpSettings(cfg=kcfg, n_sim=100),
        )
        res = run_mle(model, obs, cfg, master_seed=(57,))
        assert not res.diverged
        assert np.all(np.isfinite(res.averaged))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            _fsm_cfg(update_rule="sgdd")
        with pytest.raises(ValueError):
            _fsm_cfg(step_size=0.0)
        with pytest.raises(ValueError):
            _fsm_cfg(avg_window=99)
        with pytest.raises(ValueError):
            _fsm_cfg(fsm=None)


class TestTuneGrid:
    def test_picks_obvious_winner(self):
        # One absurdly large step size diverges, the sane one should win.
        model = GaussianMeanModel(2)
        obs = model.simulate(np.ones(2), 30, stream(58))
        cfg = _fsm_cfg(iterations=40, avg_window=10)
        grid = [(0.2, 0.05), (0.2, 1e8)]  # (sigma, eta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = tune_grid(model, obs, cfg, grid, master_seed=(59,))
        assert result.best == (0.2, 0.05)
        assert len(result.table) == 2
        assert result.table[1]["status"] == "diverged"

    def test_tie_break_prefers_first(self):
        # Identical cells get identical seeds and scores; the first wins
        # under the strict-improvement rule.
        model = GaussianMeanModel(1)
        obs = model.simulate(np.zeros(1), 10, stream(60))
        cfg = _fsm_cfg(theta0=np.zeros(1), iterations=5, avg_window=1)
        result = tune_grid(
            model, obs, cfg, [(0.2, 0.05), (0.2, 0.05)], master_seed=(61,)
        )
        assert result.best == (0.2, 0.05)

    def test_all_diverged_raises(self):
        model = GaussianMeanModel(1)
        obs = model.simulate(np.zeros(1), 10, stream(62))
        cfg = _fsm_cfg(theta0=np.zeros(1), iterations=5, avg_window=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(RuntimeError):
                tune_grid(model, obs, cfg, [(0.2, 1e9)], master_seed=(63,))
