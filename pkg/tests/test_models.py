import numpy as np
import pytest

from fsm_mle.models import (
    GaussianMeanModel,
    ModelError,
    ShiftedExponentialModel,
    model_from_config,
)
from fsm_mle.rng import stream


class TestGaussianMeanModel:
    def test_simulate_shape_and_moments(self):
        model = GaussianMeanModel(3)
        theta = np.array([1.0, -2.0, 0.5])
        data = model.simulate(theta, 50000, stream(11))
        assert data.shape == (50000, 3)
        assert np.allclose(data.mean(axis=0), theta, atol=0.02)
        assert np.allclose(np.cov(data.T), np.eye(3), atol=0.03)

    def test_simulate_respects_covariance(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        model = GaussianMeanModel(2, covariance=cov)
        data = model.simulate(np.zeros(2), 100000, stream(12))
        assert np.allclose(np.cov(data.T), cov, atol=0.04)

    def test_closed_form_score(self):
        cov = np.diag([4.0, 1.0])
        model = GaussianMeanModel(2, covariance=cov)
        theta = np.array([1.0, 1.0])
        x = np.array([3.0, 0.0])
        # Sigma^-1 (x - theta) = [0.5, -1.0]
        assert np.allclose(model.closed_form_score(theta, x), [0.5, -1.0])

    def test_score_matches_log_density_gradient(self):
        model = GaussianMeanModel(2, covariance=np.array([[1.5, 0.3], [0.3, 0.8]]))
        theta = np.array([0.2, -0.4])
        x = np.array([1.0, 0.5])
        h = 1e-6
        fd = np.array([
            (model.log_density(theta + h * e, x) - model.log_density(theta - h * e, x)) / (2 * h)
            for e in np.eye(2)
        ])
        assert np.allclose(model.closed_form_score(theta, x), fd, atol=1e-6)

    def test_exact_mle_is_sample_mean(self):
        model = GaussianMeanModel(2)
        data = stream(13).normal(size=(17, 2))
        assert np.allclose(model.exact_mle(data), data.mean(axis=0))

    def test_simulate_deterministic_per_seed(self):
        model = GaussianMeanModel(2)
        a = model.simulate(np.zeros(2), 10, stream(7, 1))
        b = model.simulate(np.zeros(2), 10, stream(7, 1))
        c = model.simulate(np.zeros(2), 10, stream(7, 2))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestShiftedExponentialModel:
    def test_support_and_moments(self):
        model = ShiftedExponentialModel(rate=2.0)
        data = model.simulate(np.array([3.0]), 100000, stream(21))
        assert data.min() >= 3.0
        # mean = shift + 1/rate
        assert data.mean() == pytest.approx(3.5, abs=0.01)

    def test_exact_mle_is_minimum(self):
        model = ShiftedExponentialModel(rate=1.0)
        data = np.array([[4.2], [1.7], [2.9]])
        assert model.exact_mle(data) == pytest.approx([1.7])

    def test_log_density(self):
        model = ShiftedExponentialModel(rate=2.0)
        theta = np.array([1.0])
        assert model.log_density(theta, np.array([2.0])) == pytest.approx(
            np.log(2.0) - 2.0
        )
        assert model.log_density(theta, np.array([0.5])) == -np.inf

    def test_score_inside_support_is_rate(self):
        model = ShiftedExponentialModel(rate=3.0)
        s = model.closed_form_score(np.array([0.0]), np.array([1.0]))
        assert s == pytest.approx([3.0])

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError):
            ShiftedExponentialModel(rate=0.0)


def test_model_from_config():
    m = model_from_config({"id": "gaussian", "dim": 4})
    assert isinstance(m, GaussianMeanModel)
    assert m.param_dim == 4
    e = model_from_config({"id": "shifted_exp", "rate": 2.5})
    assert isinstance(e, ShiftedExponentialModel)
    with pytest.raises(ModelError):
        model_from_config({"id": "unknown"})
