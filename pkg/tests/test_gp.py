import math

import numpy as np
import pytest

from asyncbo.errors import NumericalError
from asyncbo.gp import (
    Dataset,
    KernelHyperparams,
    LengthscalePrior,
    condition_on_fantasies,
    fit_hyperparameters,
    fit_posterior,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    predict,
    predict_joint,
    predict_many,
    predict_with_grad,
    posterior_mean_grad_many,
)
from asyncbo.sampling import RngStream


def random_model(gen, n, d, noise=None):
    X = gen.random((n, d))
    y = gen.standard_normal(n) * 2.0 + 0.3
    data = Dataset.from_observations(X, y)
    hyper = KernelHyperparams(
        lengthscales=gen.uniform(0.15, 1.2, d),
        signal_variance=float(gen.uniform(0.4, 2.5)),
        noise_variance=noise if noise is not None else float(gen.uniform(1e-4, 1e-2)),
    )
    return fit_posterior(data, hyper)


def dense_predict(model, x):
    """O(n^3) direct-solve oracle for the posterior equations."""
    h = model.hyper
    K = kernel_matrix(h, model.data.inputs)
    K[np.diag_indices_from(K)] += h.noise_variance + model.jitter
    kv = kernel_cross(h, np.atleast_2d(x), model.data.inputs)[0]
    weights = np.linalg.solve(K, model.data.outputs_std)
    mu = kv @ weights
    var = h.signal_variance - kv @ np.linalg.solve(K, kv)
    return mu, max(var, 0.0)


# ---------------------------------------------------------------------------
# kernel


def test_kernel_at_identical_points_is_signal_variance():
    h = KernelHyperparams(np.ones(3), 1.0, 1e-6)
    x = np.array([0.2, 0.5, 0.9])
    assert kernel_eval(h, x, x) == pytest.approx(1.0, abs=1e-15)
    h2 = KernelHyperparams(np.array([0.3, 2.0]), 1.7, 1e-6)
    assert kernel_eval(h2, np.zeros(2), np.zeros(2)) == pytest.approx(1.7, abs=1e-15)


def test_kernel_unit_lengthscales_diagonal_pair():
    h = KernelHyperparams(np.ones(2), 1.0, 1e-6)
    got = kernel_eval(h, np.zeros(2), np.ones(2))
    assert got == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_kernel_anisotropic_pair():
    h = KernelHyperparams(np.array([0.5, 2.0]), 2.0, 1e-6)
    got = kernel_eval(h, np.zeros(2), np.ones(2))
    assert got == pytest.approx(2.0 * math.exp(-2.125), rel=1e-14)


def test_kernel_symmetry_and_dimension_error():
    gen = np.random.default_rng(0)
    h = KernelHyperparams(gen.uniform(0.1, 1, 4), 1.3, 1e-6)
    a, b = gen.random(4), gen.random(4)
    assert kernel_eval(h, a, b) == kernel_eval(h, b, a)
    with pytest.raises(ValueError):
        kernel_eval(h, a[:3], b)


# ---------------------------------------------------------------------------
# posterior


def test_single_point_factor_is_scalar_sqrt():
    data = Dataset.from_observations(np.array([[0.5]]), np.array([2.0]))
    h = KernelHyperparams(np.ones(1), 1.5, 0.1)
    model = fit_posterior(data, h)
    expected = math.sqrt(1.5 + 0.1 + model.jitter)
    assert model.chol.shape == (1, 1)
    assert model.chol[0, 0] == pytest.approx(expected, rel=1e-12)


def test_duplicate_rows_factorize_with_noise():
    X = np.array([[0.3, 0.3], [0.3, 0.3], [0.7, 0.1]])
    data = Dataset.from_observations(X, np.array([1.0, 1.1, 0.2]))
    model = fit_posterior(data, KernelHyperparams(np.ones(2), 1.0, 1e-2))
    assert np.all(np.isfinite(model.alpha))


def test_factorization_reconstructs_noisy_kernel():
    gen = np.random.default_rng(1)
    model = random_model(gen, 20, 3)
    K = kernel_matrix(model.hyper, model.data.inputs)
    K[np.diag_indices_from(K)] += model.hyper.noise_variance + model.jitter
    recon = model.chol @ model.chol.T
    assert np.allclose(recon, K, atol=1e-10)


def test_predictions_match_dense_oracle():
    gen = np.random.default_rng(2)
    for _ in range(25):
        n, d = int(gen.integers(2, 40)), int(gen.integers(1, 8))
        model = random_model(gen, n, d)
        x = gen.random(d)
        mu, var = predict(model, x)
        mu_ref, var_ref = dense_predict(model, x)
        assert mu == pytest.approx(mu_ref, rel=1e-8, abs=1e-8)
        assert var == pytest.approx(var_ref, rel=1e-8, abs=1e-8)


def test_empty_model_returns_prior():
    model = fit_posterior(Dataset.empty(3), KernelHyperparams(np.ones(3), 1.4, 1e-4))
    mu, var = predict(model, np.full(3, 0.2))
    assert mu == 0.0
    assert var == 1.4


def test_interpolation_limit_at_training_point():
    gen = np.random.default_rng(3)
    X = gen.random((8, 2))
    y = gen.standard_normal(8)
    data = Dataset.from_observations(X, y)
    model = fit_posterior(data, KernelHyperparams(np.full(2, 0.5), 1.0, 1e-12))
    mu, var = predict(model, X[4])
    assert abs(mu - data.outputs_std[4]) < 1e-4
    assert var <= 1e-6


def test_variance_clamped_nonnegative_and_bounded():
    gen = np.random.default_rng(4)
    model = random_model(gen, 30, 2, noise=1e-9)
    _, var = predict_many(model, gen.random((200, 2)))
    assert np.all(var >= 0.0)
    assert np.all(var <= model.hyper.signal_variance + 1e-15)


def test_joint_single_point_agrees_with_predict():
    gen = np.random.default_rng(5)
    model = random_model(gen, 12, 3)
    x = gen.random(3)
    mu, cov = predict_joint(model, x[None, :])
    mu1, var1 = predict(model, x)
    assert mu[0] == pytest.approx(mu1, abs=1e-12)
    assert cov[0, 0] == pytest.approx(var1, abs=1e-12)


def test_joint_duplicate_points_rank_one_prior():
    model = fit_posterior(Dataset.empty(2), KernelHyperparams(np.ones(2), 1.0, 1e-6))
    Xq = np.array([[0.4, 0.6], [0.4, 0.6]])
    _, cov = predict_joint(model, Xq)
    eigvals = np.linalg.eigvalsh(cov)
    assert eigvals[-1] == pytest.approx(2.0, rel=1e-12)  # rank-1: 2 = sv * 2
    assert abs(eigvals[0]) < 1e-12


def test_joint_matches_dense_oracle():
    gen = np.random.default_rng(6)
    model = random_model(gen, 15, 2)
    Xq = gen.random((4, 2))
    mu, cov = predict_joint(model, Xq)
    h = model.hyper
    K = kernel_matrix(h, model.data.inputs)
    K[np.diag_indices_from(K)] += h.noise_variance + model.jitter
    Kc = kernel_cross(h, Xq, model.data.inputs)
    mu_ref = Kc @ np.linalg.solve(K, model.data.outputs_std)
    cov_ref = kernel_matrix(h, Xq) - Kc @ np.linalg.solve(K, Kc.T)
    assert np.allclose(mu, mu_ref, rtol=1e-8, atol=1e-8)
    assert np.allclose(cov, cov_ref, rtol=1e-8, atol=1e-8)


def test_variance_never_increases_when_conditioning_at_point():
    gen = np.random.default_rng(7)
    for _ in range(20):
        model = random_model(gen, int(gen.integers(2, 25)), 2)
        x = gen.random(2)
        _, var_before = predict(model, x)
        fantasy_y = float(gen.standard_normal())  # any value: variance is y-free
        conditioned = condition_on_fantasies(model, x[None, :], [fantasy_y])
        _, var_after = predict(conditioned, x)
        assert var_after <= var_before + 1e-10


# ---------------------------------------------------------------------------
# marginal likelihood


def test_mll_closed_form_single_observation():
    data = Dataset(
        inputs=np.array([[0.5]]),
        outputs_raw=np.array([0.0]),
        outputs_std=np.array([0.0]),
        mean=0.0,
        stddev=1.0,
    )
    h = KernelHyperparams(np.ones(1), 1.0, 1e-6)
    value, _ = log_marginal_likelihood(data, h)
    jittered = 1.0 + 1e-6 + 1e-8 * (1.0 + 1e-6)
    expected = -0.5 * math.log(2 * math.pi) - 0.5 * math.log(jittered)
    assert value == pytest.approx(expected, rel=1e-10)


def test_mll_gradient_matches_central_differences():
    gen = np.random.default_rng(8)
    for _ in range(8):
        n, d = 12, int(gen.integers(1, 4))
        X = gen.random((n, d))
        y = gen.standard_normal(n)
        data = Dataset.from_observations(X, y)
        h = KernelHyperparams(gen.uniform(0.3, 1.0, d), 1.0, 1e-2)
        theta = h.to_log_vector()
        _, grad = log_marginal_likelihood(data, h)
        step = 1e-5
        for j in range(len(theta)):
            up, down = theta.copy(), theta.copy()
            up[j] += step
            down[j] -= step
            v_up, _ = log_marginal_likelihood(data, KernelHyperparams.from_log_vector(up))
            v_dn, _ = log_marginal_likelihood(data, KernelHyperparams.from_log_vector(down))
            fd = (v_up - v_dn) / (2 * step)
            assert grad[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_mll_finite_on_random_valid_inputs():
    gen = np.random.default_rng(9)
    for _ in range(20):
        n, d = int(gen.integers(1, 30)), int(gen.integers(1, 5))
        data = Dataset.from_observations(gen.random((n, d)), gen.standard_normal(n))
        h = KernelHyperparams(gen.uniform(0.05, 2.0, d), float(gen.uniform(0.1, 3)), 1e-3)
        value, grad = log_marginal_likelihood(data, h)
        assert np.isfinite(value)
        assert np.all(np.isfinite(grad))


# ---------------------------------------------------------------------------
# hyperparameter fitting


def _grid_dataset(ell_true, n=40, seed=10):
    gen = np.random.default_rng(seed)
    X = np.linspace(0, 1, n)[:, None]
    h = KernelHyperparams(np.array([ell_true]), 1.0, 1e-6)
    K = kernel_matrix(h, X) + 1e-8 * np.eye(n)
    y = np.linalg.cholesky(K) @ gen.standard_normal(n)
    return Dataset.from_observations(X, y)


def test_lengthscale_recovery_on_synthetic_data():
    data = _grid_dataset(0.2)
    prior = LengthscalePrior.for_dimension(1)
    init = KernelHyperparams.default(1)
    fit = fit_hyperparameters(data, init, prior, RngStream(0, "hyper_restarts"))
    recovered = fit.hyper.lengthscales[0]
    assert 0.2 / 1.5 <= recovered <= 0.2 * 1.5


def test_fit_is_deterministic_for_same_stream():
    data = _grid_dataset(0.3, seed=11)
    prior = LengthscalePrior.for_dimension(1)
    init = KernelHyperparams.default(1)
    a = fit_hyperparameters(data, init, prior, RngStream(5, "hyper_restarts"))
    b = fit_hyperparameters(data, init, prior, RngStream(5, "hyper_restarts"))
    assert np.array_equal(a.hyper.to_log_vector(), b.hyper.to_log_vector())


def test_fit_never_decreases_posterior_objective():
    gen = np.random.default_rng(12)
    prior = LengthscalePrior.for_dimension(2)

    def objective(data, h):
        value, _ = log_marginal_likelihood(data, h)
        pv, _ = prior.log_density_and_grad(h.to_log_vector())
        return value + pv

    for seed in range(4):
        data = Dataset.from_observations(gen.random((15, 2)), gen.standard_normal(15))
        init = KernelHyperparams(gen.uniform(0.2, 2.0, 2), 1.0, 1e-2)
        fit = fit_hyperparameters(data, init, prior, RngStream(seed, "hyper_restarts"))
        assert objective(data, fit.hyper) >= objective(data, init) - 1e-9


# ---------------------------------------------------------------------------
# fantasy conditioning


def test_conditioning_on_posterior_means_preserves_mean():
    gen = np.random.default_rng(13)
    model = random_model(gen, 18, 3)
    Xb = gen.random((4, 3))
    mu_b, _ = predict_many(model, Xb)
    conditioned = condition_on_fantasies(model, Xb, mu_b)
    # direct refit oracle on the combined data, same hyperparameters
    combined = Dataset(
        inputs=np.vstack([model.data.inputs, Xb]),
        outputs_raw=np.concatenate(
            [model.data.outputs_raw, model.data.destandardize(mu_b)]
        ),
        outputs_std=np.concatenate([model.data.outputs_std, mu_b]),
        mean=model.data.mean,
        stddev=model.data.stddev,
    )
    refit = fit_posterior(combined, model.hyper)
    test_points = gen.random((200, 3))
    mu_conditioned, _ = predict_many(conditioned, test_points)
    mu_refit, _ = predict_many(refit, test_points)
    mu_original, _ = predict_many(model, test_points)
    assert np.allclose(mu_conditioned, mu_refit, atol=1e-12)
    assert np.allclose(mu_conditioned, mu_original, atol=1e-8)
    # variance is reduced at the conditioning points
    _, var_before = predict_many(model, Xb)
    _, var_after = predict_many(conditioned, Xb)
    assert np.all(var_after <= var_before + 1e-12)


def test_conditioning_interpolates_fantasies_with_small_noise():
    X = np.array([[0.1, 0.1], [0.9, 0.2], [0.5, 0.8]])
    data = Dataset.from_observations(X, np.array([1.0, -0.5, 0.3]))
    model = fit_posterior(data, KernelHyperparams(np.full(2, 0.3), 1.0, 1e-10))
    Xb = np.array([[0.2, 0.7], [0.8, 0.8]])
    yb = np.array([0.7, -0.4])
    conditioned = condition_on_fantasies(model, Xb, yb)
    mu, _ = predict_many(conditioned, Xb)
    assert np.allclose(mu, yb, atol=1e-3)


def test_conditioning_requires_nonempty_fantasies():
    gen = np.random.default_rng(15)
    model = random_model(gen, 5, 2)
    with pytest.raises(ValueError):
        condition_on_fantasies(model, np.zeros((0, 2)), np.zeros(0))


# ---------------------------------------------------------------------------
# gradients used by acquisition surfaces


def test_predict_gradients_match_finite_differences():
    gen = np.random.default_rng(16)
    model = random_model(gen, 14, 3)
    x = gen.uniform(0.1, 0.9, 3)
    mu, var, gmu, gvar = predict_with_grad(model, x)
    step = 1e-6
    for j in range(3):
        up, dn = x.copy(), x.copy()
        up[j] += step
        dn[j] -= step
        mu_u, var_u = predict(model, up)
        mu_d, var_d = predict(model, dn)
        assert gmu[j] == pytest.approx((mu_u - mu_d) / (2 * step), rel=1e-4, abs=1e-6)
        assert gvar[j] == pytest.approx((var_u - var_d) / (2 * step), rel=1e-4, abs=1e-6)
    mu_b, grads = posterior_mean_grad_many(model, x[None, :])
    assert mu_b[0] == pytest.approx(mu, abs=1e-12)
    assert np.allclose(grads[0], gmu, atol=1e-12)


# ---------------------------------------------------------------------------
# dataset plumbing


def test_dataset_standardization_roundtrip_and_fallback():
    data = Dataset.from_observations(np.array([[0.1], [0.9]]), np.array([3.0, 5.0]))
    assert data.outputs_std == pytest.approx([-1.0, 1.0])
    assert data.destandardize(data.outputs_std[0]) == pytest.approx(3.0)
    flat = Dataset.from_observations(np.array([[0.1], [0.9]]), np.array([2.0, 2.0]))
    assert flat.stddev == 1.0
    assert np.all(flat.outputs_std == 0.0)


def test_dataset_rejects_points_outside_cube():
    with pytest.raises(ValueError):
        Dataset.from_observations(np.array([[1.2, 0.0]]), np.array([1.0]))
