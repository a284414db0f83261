"""Zero-mean Gaussian-process regression with an ARD-RBF kernel.

Provides posterior prediction from a cached Cholesky factorization,
marginal-likelihood hyperparameter fitting with log-normal hyperpriors,
and fantasy conditioning (appending hypothesized observations with the
hyperparameters and output standardization frozen).

All model values are immutable; fitting and conditioning return new
objects, so models can be shared freely between concurrent run replicas.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import NumericalError

if TYPE_CHECKING:
    from .sampling import RngStream

LOG_2PI = math.log(2.0 * math.pi)

# Cholesky stabilization: relative jitter ladder, in units of mean(diag K).
_JITTER_FACTORS = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)

# Box constraints for the hyperparameter search, in log space.
LOG_LENGTHSCALE_BOUNDS = (math.log(1e-3), math.log(1e3))
LOG_VARIANCE_BOUNDS = (math.log(1e-6), math.log(1e3))


def _as_matrix(X, dimension=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if dimension is not None and X.shape[1] != dimension:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match model dimension {dimension}"
        )
    return X


@dataclass(frozen=True)
class Dataset:
    """Completed observations in the unit cube plus standardization state.

    `outputs_std` are the values the surrogate actually regresses on;
    `outputs_raw` keep the original units for regret computations.
    """

    inputs: np.ndarray  # (n, d)
    outputs_raw: np.ndarray  # (n,)
    outputs_std: np.ndarray  # (n,)
    mean: float
    stddev: float

    def __post_init__(self):
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=float))
        object.__setattr__(self, "outputs_raw", np.asarray(self.outputs_raw, dtype=float))
        object.__setattr__(self, "outputs_std", np.asarray(self.outputs_std, dtype=float))
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a (n, d) array")
        n = self.inputs.shape[0]
        if len(self.outputs_raw) != n or len(self.outputs_std) != n:
            raise ValueError("inputs and outputs must have equal length")
        if self.stddev <= 0.0:
            raise ValueError("stddev must be positive")
        if n and (self.inputs.min() < -1e-9 or self.inputs.max() > 1 + 1e-9):
            raise ValueError("inputs must lie in the unit cube")

    @classmethod
    def from_observations(cls, inputs, outputs):
        inputs = _as_matrix(inputs) if len(outputs) else np.asarray(inputs, float)
        outputs = np.asarray(outputs, dtype=float)
        mean = float(np.mean(outputs)) if outputs.size else 0.0
        stddev = float(np.std(outputs)) if outputs.size else 0.0
        if stddev <= 0.0:
            stddev = 1.0
        return cls(
            inputs=inputs,
            outputs_raw=outputs,
            outputs_std=(outputs - mean) / stddev,
            mean=mean,
            stddev=stddev,
        )

    @classmethod
    def empty(cls, dimension):
        return cls(
            inputs=np.zeros((0, dimension)),
            outputs_raw=np.zeros(0),
            outputs_std=np.zeros(0),
            mean=0.0,
            stddev=1.0,
        )

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def dimension(self):
        return self.inputs.shape[1]

    def standardize(self, value):
        return (value - self.mean) / self.stddev

    def destandardize(self, value):
        return value * self.stddev + self.mean

    def with_observation(self, x, y):
        """New dataset with (x, y) appended and standardization recomputed."""
        inputs = np.vstack([self.inputs, np.asarray(x, float)[None, :]])
        outputs = np.append(self.outputs_raw, float(y))
        return Dataset.from_observations(inputs, outputs)


@dataclass(frozen=True)
class KernelHyperparams:
    """ARD-RBF hyperparameters; all components strictly positive."""

    lengthscales: np.ndarray  # (d,)
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", np.asarray(self.lengthscales, dtype=float)
        )
        if np.any(self.lengthscales <= 0.0):
            raise ValueError("lengthscales must be strictly positive")
        if self.signal_variance <= 0.0 or self.noise_variance <= 0.0:
            raise ValueError("variances must be strictly positive")

    @property
    def dimension(self):
        return len(self.lengthscales)

    def to_log_vector(self):
        return np.concatenate(
            [
                np.log(self.lengthscales),
                [math.log(self.signal_variance), math.log(self.noise_variance)],
            ]
        )

    @classmethod
    def from_log_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(
            lengthscales=np.exp(theta[:-2]),
            signal_variance=float(math.exp(theta[-2])),
            noise_variance=float(math.exp(theta[-1])),
        )

    @classmethod
    def default(cls, dimension):
        prior = LengthscalePrior.for_dimension(dimension)
        return cls(
            lengthscales=np.full(dimension, math.exp(prior.loc)),
            signal_variance=1.0,
            noise_variance=1e-2,
        )


def _scaled_sqdist(A, B, lengthscales):
    """Sum_j ((a_j - b_j) / ell_j)^2, accumulated per dimension.

    Per-dimension accumulation avoids the cancellation of the usual
    |a|^2 + |b|^2 - 2ab expansion; exactness matters for oracle tests.
    """
    As = A / lengthscales
    Bs = B / lengthscales
    out = np.zeros((A.shape[0], B.shape[0]))
    tmp = np.empty_like(out)
    for j in range(A.shape[1]):
        np.subtract.outer(As[:, j], Bs[:, j], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        out += tmp
    return out


def kernel_eval(hyper, x1, x2):
    """ARD-RBF kernel value between two points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.shape != (hyper.dimension,):
        raise ValueError("kernel inputs must both be d-vectors")
    z = (x1 - x2) / hyper.lengthscales
    return hyper.signal_variance * math.exp(-0.5 * float(z @ z))


def kernel_matrix(hyper, X):
    return hyper.signal_variance * np.exp(
        -0.5 * _scaled_sqdist(X, X, hyper.lengthscales)
    )


def kernel_cross(hyper, A, B):
    return hyper.signal_variance * np.exp(
        -0.5 * _scaled_sqdist(A, B, hyper.lengthscales)
    )


def _cholesky_with_jitter(K):
    base = float(np.mean(np.diag(K)))
    jitter = 0.0
    for factor in _JITTER_FACTORS:
        jitter = factor * base
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky factorization failed at jitter {jitter:g}", jitter=jitter
    )


@dataclass(frozen=True)
class GpModel:
    """Factorized GP posterior over a dataset; immutable after construction."""

    data: Dataset
    hyper: KernelHyperparams
    chol: np.ndarray  # lower-triangular factor of K_XX + noise*I + jitter
    alpha: np.ndarray  # (K_XX + noise*I)^{-1} y_std
    jitter: float

    @property
    def dimension(self):
        return self.hyper.dimension


def fit_posterior(data, hyper):
    """Factorize the noisy kernel matrix and cache the weight vector."""
    if data.n and data.dimension != hyper.dimension:
        raise ValueError("dataset and hyperparameter dimensions differ")
    if data.n == 0:
        return GpModel(data, hyper, np.zeros((0, 0)), np.zeros(0), 0.0)
    K = kernel_matrix(hyper, data.inputs)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L, jitter = _cholesky_with_jitter(K)
    alpha = cho_solve((L, True), data.outputs_std)
    return GpModel(data, hyper, L, alpha, jitter)


def predict(model, x):
    """Posterior mean and variance at one point, in standardized units."""
    mu, var = predict_many(model, np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(var[0])


def predict_many(model, X):
    X = _as_matrix(X, model.dimension)
    sv = model.hyper.signal_variance
    if model.data.n == 0:
        return np.zeros(len(X)), np.full(len(X), sv)
    Kc = kernel_cross(model.hyper, X, model.data.inputs)
    mu = Kc @ model.alpha
    V = solve_triangular(model.chol, Kc.T, lower=True)
    var = sv - np.einsum("ij,ij->j", V, V)
    return mu, np.clip(var, 0.0, sv)


def predict_joint(model, Xq):
    """Joint posterior mean vector and covariance matrix at query points.

    The covariance is symmetrized and its diagonal clamped at zero so it
    can be handed straight to a Cholesky-based sampler.
    """
    Xq = _as_matrix(Xq, model.dimension)
    if len(Xq) == 0:
        raise ValueError("query set must be non-empty")
    Kq = kernel_matrix(model.hyper, Xq)
    if model.data.n == 0:
        cov = 0.5 * (Kq + Kq.T)
        return np.zeros(len(Xq)), cov
    Kc = kernel_cross(model.hyper, Xq, model.data.inputs)
    mu = Kc @ model.alpha
    V = solve_triangular(model.chol, Kc.T, lower=True)
    cov = Kq - V.T @ V
    cov = 0.5 * (cov + cov.T)
    diag = np.diag_indices_from(cov)
    cov[diag] = np.maximum(cov[diag], 0.0)
    return mu, cov


def predict_with_grad(model, x):
    """Mean, variance, and their gradients at one point."""
    x = np.asarray(x, dtype=float)
    h = model.hyper
    if model.data.n == 0:
        zero = np.zeros_like(x)
        return 0.0, h.signal_variance, zero, zero
    X = model.data.inputs
    kv = kernel_cross(h, x[None, :], X)[0]
    v = solve_triangular(model.chol, kv, lower=True)
    w = solve_triangular(model.chol.T, v, lower=False)
    var = float(np.clip(h.signal_variance - v @ v, 0.0, h.signal_variance))
    inv_sq = 1.0 / h.lengthscales**2
    scaled = (X - x) * inv_sq  # (n, d)
    gmu = (model.alpha * kv) @ scaled
    gvar = -2.0 * (w * kv) @ scaled
    return float(kv @ model.alpha), var, gmu, gvar


def posterior_mean_grad_many(model, X):
    """Batched posterior mean and its gradient (used by Lipschitz estimates)."""
    X = _as_matrix(X, model.dimension)
    h = model.hyper
    if model.data.n == 0:
        return np.zeros(len(X)), np.zeros_like(X)
    Xtr = model.data.inputs
    Kc = kernel_cross(h, X, Xtr)
    mu = Kc @ model.alpha
    inv_sq = 1.0 / h.lengthscales**2
    KA = Kc * model.alpha  # (m, n)
    grads = (KA @ Xtr) * inv_sq - KA.sum(axis=1)[:, None] * (X * inv_sq)
    return mu, grads


def log_marginal_likelihood(data, hyper):
    """Marginal log likelihood and its gradient w.r.t. log-hyperparameters."""
    closure = _mll_closure(data)
    return closure(hyper.to_log_vector())


def _mll_closure(data):
    """Precompute per-dimension squared differences for repeated MLL evals."""
    if data.n < 1:
        raise ValueError("marginal likelihood needs at least one observation")
    X = data.inputs
    y = data.outputs_std
    n, d = X.shape
    diffs_sq = np.empty((d, n, n))
    for j in range(d):
        diff = np.subtract.outer(X[:, j], X[:, j])
        diffs_sq[j] = diff * diff
    eye = np.eye(n)

    def closure(theta):
        ell = np.exp(theta[:d])
        sv = math.exp(theta[d])
        nv = math.exp(theta[d + 1])
        sq = np.tensordot(1.0 / ell**2, diffs_sq, axes=([0], [0]))
        Ksig = sv * np.exp(-0.5 * sq)
        K = Ksig + nv * eye
        L, jitter = _cholesky_with_jitter(K)
        alpha = cho_solve((L, True), y)
        value = (
            -0.5 * float(y @ alpha)
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * n * LOG_2PI
        )
        Kinv = cho_solve((L, True), eye)
        W = np.outer(alpha, alpha) - Kinv
        WK = W * Ksig
        trace_w = float(np.trace(W))
        # The jitter scales with mean(diag K) = sv + nv, so it carries its
        # own (small but not negligible) derivative on ill-conditioned fits.
        jitter_share = jitter / (sv + nv)
        grad = np.empty(d + 2)
        for j in range(d):
            grad[j] = 0.5 * float(np.sum(WK * diffs_sq[j])) / ell[j] ** 2
        grad[d] = 0.5 * (float(np.sum(WK)) + jitter_share * sv * trace_w)
        grad[d + 1] = 0.5 * nv * (1.0 + jitter_share) * trace_w
        return value, grad

    return closure


@dataclass(frozen=True)
class LengthscalePrior:
    """Log-normal hyperpriors used when maximizing the hyperparameter posterior.

    Lengthscales get the dimensionality-scaled prior (location grows with
    log d); both variances get a weak log-normal centered at 1.
    """

    loc: float
    scale: float
    variance_loc: float = 0.0
    variance_scale: float = 2.0

    @classmethod
    def for_dimension(cls, dimension):
        return cls(loc=math.sqrt(2.0) + 0.5 * math.log(dimension), scale=math.sqrt(3.0))

    def _locs_scales(self, dimension):
        locs = np.concatenate(
            [np.full(dimension, self.loc), [self.variance_loc, self.variance_loc]]
        )
        scales = np.concatenate(
            [np.full(dimension, self.scale), [self.variance_scale, self.variance_scale]]
        )
        return locs, scales

    def log_density_and_grad(self, theta):
        """Log density of the positive-space prior, evaluated at log params."""
        theta = np.asarray(theta, dtype=float)
        d = len(theta) - 2
        locs, scales = self._locs_scales(d)
        dev = (theta - locs) / scales
        value = float(
            np.sum(-theta - np.log(scales) - 0.5 * LOG_2PI - 0.5 * dev**2)
        )
        grad = -1.0 - dev / scales
        return value, grad

    def sample(self, dimension, rng):
        gen = rng.next_generator()
        theta = np.empty(dimension + 2)
        theta[:dimension] = self.loc + self.scale * gen.standard_normal(dimension)
        theta[dimension:] = self.variance_loc + self.variance_scale * gen.standard_normal(2)
        lo_ell, hi_ell = LOG_LENGTHSCALE_BOUNDS
        lo_var, hi_var = LOG_VARIANCE_BOUNDS
        theta[:dimension] = np.clip(theta[:dimension], lo_ell, hi_ell)
        theta[dimension:] = np.clip(theta[dimension:], lo_var, hi_var)
        return KernelHyperparams.from_log_vector(theta)


class HyperFit(NamedTuple):
    hyper: KernelHyperparams
    degraded: bool  # True when every restart failed and `init` was returned


def fit_hyperparameters(
    data,
    init,
    prior,
    rng,
    num_prior_starts=4,
    max_iters=100,
    grad_tol=1e-6,
):
    """Multi-restart bounded quasi-Newton MAP fit of the hyperparameters.

    Restarts are the warm start `init` plus `num_prior_starts` prior
    draws; the best restart by posterior objective wins, and the result
    is never worse than `init` itself (ascent guarantee). Deterministic
    given the state of `rng`.
    """
    if data.n < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    d = data.dimension
    mll = _mll_closure(data)

    def objective(theta):
        try:
            value, grad = mll(theta)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        pv, pg = prior.log_density_and_grad(theta)
        return -(value + pv), -(grad + pg)

    bounds = [LOG_LENGTHSCALE_BOUNDS] * d + [LOG_VARIANCE_BOUNDS] * 2
    starts = [init.to_log_vector()]
    starts += [prior.sample(d, rng).to_log_vector() for _ in range(num_prior_starts)]

    best_theta = starts[0]
    best_value = -objective(starts[0])[0]
    any_success = False
    for theta0 in starts:
        try:
            res = minimize(
                objective,
                np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds]),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iters, "gtol": grad_tol},
            )
        except Exception:
            continue
        any_success = True
        value = -float(res.fun)
        if value > best_value:
            best_value = value
            best_theta = res.x
    if not any_success:
        warnings.warn("all hyperparameter restarts failed; keeping previous values")
        return HyperFit(init, True)
    return HyperFit(KernelHyperparams.from_log_vector(best_theta), False)


def condition_on_fantasies(model, Xb, yb):
    """Posterior after appending hypothesized observations (standardized).

    Equivalent to refitting on the enlarged dataset with the kernel
    hyperparameters and the output standardizer both frozen.
    """
    Xb = _as_matrix(Xb, model.dimension)
    yb = np.asarray(yb, dtype=float)
    if len(Xb) != len(yb) or len(Xb) < 1:
        raise ValueError("fantasy inputs and outputs must be non-empty and equal length")
    base = model.data
    combined = Dataset(
        inputs=np.vstack([base.inputs, Xb]),
        outputs_raw=np.concatenate([base.outputs_raw, base.destandardize(yb)]),
        outputs_std=np.concatenate([base.outputs_std, yb]),
        mean=base.mean,
        stddev=base.stddev,
    )
    return fit_posterior(combined, model.hyper)
