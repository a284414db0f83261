"""Command-line property checks (`asyncbo verify`).

Each check exercises one of the toolkit's executable claims against an
independent oracle at a size that finishes in seconds. The test suite
runs the same claims at full acceptance scale.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cholesky, cho_solve

from .acquisitions import BusySet, kriging_believer, log_ei_values, ucb
from .gp import Dataset, KernelHyperparams, fit_posterior, kernel_cross, kernel_matrix, predict
from .metrics import mann_whitney_u, win_rate
from .objectives import DurationModel, HALF_NORMAL_SCALE, sample_duration
from .sampling import RngStream, halton_sequence


def _random_model(gen, n, d, noise=1e-3):
    X = gen.random((n, d))
    y = gen.standard_normal(n)
    data = Dataset.from_observations(X, y)
    hyper = KernelHyperparams(
        lengthscales=gen.uniform(0.2, 1.0, d),
        signal_variance=float(gen.uniform(0.5, 2.0)),
        noise_variance=noise,
    )
    return fit_posterior(data, hyper)


def check_gp_dense_oracle(cases=20, seed=0):
    """Factorized predictions vs a dense direct solve."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n, d = int(gen.integers(2, 30)), int(gen.integers(1, 6))
        model = _random_model(gen, n, d)
        x = gen.random(d)
        mu, var = predict(model, x)
        K = kernel_matrix(model.hyper, model.data.inputs)
        K[np.diag_indices_from(K)] += model.hyper.noise_variance + model.jitter
        kv = kernel_cross(model.hyper, x[None, :], model.data.inputs)[0]
        weights = np.linalg.solve(K, model.data.outputs_std)
        mu_ref = kv @ weights
        var_ref = model.hyper.signal_variance - kv @ np.linalg.solve(K, kv)
        scale = max(1.0, abs(mu_ref))
        worst = max(worst, abs(mu - mu_ref) / scale, abs(var - max(var_ref, 0.0)))
    ok = worst < 1e-8
    return "gp-dense-oracle", ok, f"max deviation {worst:.2e}"


def check_expected_ucb_is_believer(cases=10, draws=2000, seed=1):
    """Monte-Carlo mean of UCB over fantasies vs the Kriging Believer."""
    gen = np.random.default_rng(seed)
    hits = 0
    for _ in range(cases):
        n, d = int(gen.integers(3, 15)), int(gen.integers(1, 5))
        m = int(gen.integers(1, 5))
        model = _random_model(gen, n, d)
        busy = BusySet(gen.random((m, d)))
        x = gen.random(d)
        kb = kriging_believer("ucb", model, busy, x)
        mc_mean, mc_se = _mc_expected_ucb(model, busy, x, draws, gen)
        if abs(mc_mean - kb) <= 3.0 * max(mc_se, 1e-12):
            hits += 1
    ok = hits >= cases - 1
    return "expected-ucb-is-believer", ok, f"{hits}/{cases} within 3 MC standard errors"


def _mc_expected_ucb(model, busy, x, draws, gen, beta=2.0):
    """Textbook-formula Monte Carlo oracle, independent of the KB path."""
    from .gp import predict_joint

    h = model.hyper
    mu_b, cov_b = predict_joint(model, busy.locations)
    chol_b = cholesky(cov_b + 1e-12 * np.eye(len(mu_b)), lower=True)
    fantasies = mu_b[None, :] + gen.standard_normal((draws, len(mu_b))) @ chol_b.T

    X_aug = np.vstack([model.data.inputs, busy.locations])
    K = kernel_matrix(h, X_aug)
    K[np.diag_indices_from(K)] += h.noise_variance + 1e-10
    L = cholesky(K, lower=True)
    kv = kernel_cross(h, np.asarray(x, float)[None, :], X_aug)[0]
    n = model.data.n
    Y = np.empty((len(X_aug), draws))
    Y[:n] = model.data.outputs_std[:, None]
    Y[n:] = fantasies.T
    mus = kv @ cho_solve((L, True), Y)
    v = np.linalg.solve(L, kv)
    sigma = math.sqrt(max(h.signal_variance - v @ v, 0.0))
    values = mus + math.sqrt(beta) * sigma
    return float(np.mean(values)), float(np.std(values) / math.sqrt(draws))


def check_logei_stability(points=10000):
    """LogEI sweep: finite everywhere, closed form at z = 0."""
    z = np.linspace(-30.0, 5.0, points)
    values = log_ei_values(z, 1.0, 0.0)
    finite = np.all(np.isfinite(values))
    at_zero = float(log_ei_values(np.array([0.0]), 1.0, 0.0)[0])
    closed = -0.5 * math.log(2.0 * math.pi)
    ok = finite and abs(at_zero - closed) < 1e-12
    return "logei-stability", ok, f"sweep finite={finite}, z=0 error {abs(at_zero - closed):.1e}"


def check_duration_model(draws=100000, seed=3):
    model = DurationModel(HALF_NORMAL_SCALE)
    stream = RngStream(seed, "durations")
    samples = np.array([sample_duration(model, stream) for _ in range(draws)])
    ok = np.all(samples >= 0.0) and abs(samples.mean() - 1.0) <= 0.02
    return "duration-model", ok, f"mean {samples.mean():.4f}, min {samples.min():.2e}"


def check_statistics():
    p = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
    exact = 1.0 / 3.0
    gen = np.random.default_rng(4)
    a, b = gen.standard_normal(17), gen.standard_normal(17)
    complement = win_rate(a, b) + win_rate(b, a)
    ok = abs(p - exact) < 1e-12 and mann_whitney_u(a, a) == 1.0 and complement == 1.0
    return "statistics", ok, f"tiny-case p {p:.6f} (exact {exact:.6f})"


def check_halton():
    base = halton_sequence(3, 1)[:, 0]
    ok = np.allclose(base, [0.5, 0.25, 0.75])
    return "halton-base", ok, f"first base-2 points {base.tolist()}"


ALL_CHECKS = (
    check_gp_dense_oracle,
    check_expected_ucb_is_believer,
    check_logei_stability,
    check_duration_model,
    check_statistics,
    check_halton,
)


def run_all(verbose_print=print):
    failures = 0
    for check in ALL_CHECKS:
        name, ok, detail = check()
        verbose_print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    return failures
