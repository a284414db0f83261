import numpy as np
import pytest

from asyncbo.errors import UnsupportedDimensionError
from asyncbo.gp import Dataset, KernelHyperparams, fit_posterior, kernel_eval, predict
from asyncbo.sampling import (
    PathSample,
    RngStream,
    draw_posterior_path,
    eval_path,
    eval_path_many,
    eval_path_with_grad,
    halton_points,
    halton_sequence,
    mvn_sample,
)


# ---------------------------------------------------------------------------
# RNG streams


def test_same_stream_reproduces_sequence():
    a = RngStream(42, "init")
    b = RngStream(42, "init")
    va = [a.next_generator().random(3) for _ in range(4)]
    vb = [b.next_generator().random(3) for _ in range(4)]
    assert all(np.array_equal(x, y) for x, y in zip(va, vb))


def test_distinct_streams_are_decoupled():
    a = RngStream(42, "init")
    other = RngStream(42, "ts")
    first = a.next_generator().random(5)
    other.next_generator().random(100)  # consuming another stream changes nothing
    b = RngStream(42, "init")
    assert np.array_equal(first, b.next_generator().random(5))
    assert not np.array_equal(first, RngStream(42, "ts").next_generator().random(5))


def test_unknown_stream_id_rejected():
    with pytest.raises(ValueError):
        RngStream(1, "bogus")


# ---------------------------------------------------------------------------
# Halton


def test_halton_base_two_prefix():
    pts = halton_sequence(3, 1)
    assert np.allclose(pts[:, 0], [0.5, 0.25, 0.75])


def test_halton_points_in_unit_box_high_dim():
    pts = halton_points(10_000, 10, RngStream(0, "init"))
    assert pts.shape == (10_000, 10)
    assert pts.min() >= 0.0
    assert pts.max() < 1.0


def test_halton_deterministic_per_stream():
    a = halton_points(50, 4, RngStream(9, "init"))
    b = halton_points(50, 4, RngStream(9, "init"))
    assert np.array_equal(a, b)
    c = halton_points(50, 4, RngStream(10, "init"))
    assert not np.array_equal(a, c)


def test_halton_dimension_bound():
    with pytest.raises(UnsupportedDimensionError):
        halton_sequence(10, 101)


def test_halton_stratification_proxy():
    # 256 rotated points in 2-d: every cell of a 4x4 grid holds >= 8 points
    for seed in range(3):
        pts = halton_points(256, 2, RngStream(seed, "init"))
        cells = np.floor(pts * 4).astype(int)
        counts = np.zeros((4, 4), dtype=int)
        for i, j in cells:
            counts[i, j] += 1
        assert counts.min() >= 8


# ---------------------------------------------------------------------------
# multivariate normal


def test_mvn_zero_covariance_returns_mean():
    mean = np.array([1.0, -2.0, 0.5])
    samples = mvn_sample(mean, np.zeros((3, 3)), 7, RngStream(1, "fantasies"))
    assert np.array_equal(samples, np.tile(mean, (7, 1)))


def test_mvn_law_of_large_numbers():
    samples = mvn_sample(np.zeros(1), np.eye(1), 100_000, RngStream(2, "fantasies"))
    assert abs(samples.var() - 1.0) < 0.05
    assert abs(samples.mean()) < 0.05


def test_mvn_deterministic_and_correlated():
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    a = mvn_sample(np.zeros(2), cov, 2000, RngStream(3, "fantasies"))
    b = mvn_sample(np.zeros(2), cov, 2000, RngStream(3, "fantasies"))
    assert np.array_equal(a, b)
    corr = np.corrcoef(a.T)[0, 1]
    assert corr == pytest.approx(0.9, abs=0.05)


# ---------------------------------------------------------------------------
# pathwise posterior samples


def _model_1d(noise=1e-6):
    X = np.array([[0.2], [0.5], [0.8]])
    data = Dataset.from_observations(X, np.array([0.1, 1.0, -0.3]))
    return fit_posterior(data, KernelHyperparams(np.array([0.2]), 1.0, noise))


def test_path_evaluation_is_deterministic():
    model = _model_1d()
    path = draw_posterior_path(model, 256, RngStream(4, "ts"))
    x = np.array([0.4])
    assert eval_path(path, x) == eval_path(path, x)
    again = draw_posterior_path(model, 256, RngStream(4, "ts"))
    assert eval_path(again, x) == eval_path(path, x)


def test_prior_path_variance_matches_signal_variance():
    model = fit_posterior(Dataset.empty(1), KernelHyperparams(np.ones(1), 1.3, 1e-6))
    stream = RngStream(5, "ts")
    x = np.array([0.3])
    values = np.array(
        [eval_path(draw_posterior_path(model, 512, stream), x) for _ in range(2000)]
    )
    assert abs(values.var() - 1.3) / 1.3 < 0.10


def test_path_mean_matches_posterior_mean():
    model = _model_1d(noise=1e-4)
    stream = RngStream(6, "ts")
    x = np.array([0.35])
    values = np.array(
        [eval_path(draw_posterior_path(model, 512, stream), x) for _ in range(2000)]
    )
    mu, var = predict(model, x)
    se = values.std() / np.sqrt(len(values))
    assert abs(values.mean() - mu) <= 3 * se


def test_prior_paths_reproduce_kernel_covariance():
    hyper = KernelHyperparams(np.array([0.4, 0.4]), 1.0, 1e-6)
    model = fit_posterior(Dataset.empty(2), hyper)
    points = np.array([[0.1, 0.1], [0.3, 0.5], [0.5, 0.9], [0.7, 0.2], [0.9, 0.6]])
    stream = RngStream(7, "ts")
    values = np.vstack(
        [
            eval_path_many(draw_posterior_path(model, 4096, stream), points)
            for _ in range(2000)
        ]
    )
    emp_cov = np.cov(values.T)
    kernel_cov = np.array(
        [[kernel_eval(hyper, a, b) for b in points] for a in points]
    )
    assert np.max(np.abs(emp_cov - kernel_cov)) <= 0.1


def test_path_gradient_matches_finite_differences():
    model = _model_1d()
    path = draw_posterior_path(model, 128, RngStream(8, "ts"))
    x = np.array([0.45])
    value, grad = eval_path_with_grad(path, x)
    assert value == pytest.approx(eval_path(path, x), abs=1e-12)
    step = 1e-7
    fd = (eval_path(path, x + step) - eval_path(path, x - step)) / (2 * step)
    assert grad[0] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_path_requires_positive_feature_count():
    model = _model_1d()
    with pytest.raises(ValueError):
        draw_posterior_path(model, 0, RngStream(9, "ts"))
