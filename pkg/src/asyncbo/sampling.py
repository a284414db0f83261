"""Randomness utilities: splittable RNG streams, perturbed Halton points,
multivariate-normal draws, and pathwise GP posterior function samples.

Every consumer draws from a named :class:`RngStream` so that the order in
which simulator events fire can never perturb an unrelated sampling
sequence. Streams are value-like; cloning one replays its sequence.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import NumericalError, UnsupportedDimensionError

STREAM_IDS = (
    "init",
    "fantasies",
    "ts",
    "durations",
    "acq_restarts",
    "hyper_restarts",
)

_MAX_HALTON_DIM = 100


def _first_primes(count):
    primes = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    return primes


_PRIMES = _first_primes(_MAX_HALTON_DIM)


@dataclass
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id, draw_index).

    Each call to :meth:`next_generator` derives a fresh Philox generator
    from a stable hash of the key triple, so the same (seed, stream_id)
    pair always reproduces the same sequence of generators regardless of
    what any other stream does in between.
    """

    seed: int
    stream_id: str
    draw_index: int = field(default=0)

    def __post_init__(self):
        if self.stream_id not in STREAM_IDS:
            raise ValueError(
                f"unknown stream_id {self.stream_id!r}; expected one of {STREAM_IDS}"
            )

    def generator_at(self, index):
        tag = f"{self.seed}:{self.stream_id}:{index}".encode()
        digest = hashlib.blake2b(tag, digest_size=16).digest()
        key = int.from_bytes(digest, "little")
        return np.random.Generator(np.random.Philox(key=key))

    def next_generator(self):
        gen = self.generator_at(self.draw_index)
        self.draw_index += 1
        return gen

    def clone(self):
        return RngStream(self.seed, self.stream_id, self.draw_index)


def halton_sequence(count, dimension, start=1):
    """Unshifted Halton points (bases = first `dimension` primes)."""
    if count < 1 or dimension < 1:
        raise ValueError("count and dimension must be >= 1")
    if dimension > _MAX_HALTON_DIM:
        raise UnsupportedDimensionError(
            f"Halton generator supports at most {_MAX_HALTON_DIM} dimensions"
        )
    indices = np.arange(start, start + count, dtype=np.int64)
    points = np.empty((count, dimension))
    for j in range(dimension):
        points[:, j] = _radical_inverse(indices, _PRIMES[j])
    return points


def _radical_inverse(indices, base):
    out = np.zeros(len(indices))
    remaining = indices.copy()
    scale = 1.0 / base
    while np.any(remaining > 0):
        out += scale * (remaining % base)
        remaining //= base
        scale /= base
    return out


def halton_points(count, dimension, rng):
    """Halton points with a Cranley-Patterson rotation drawn from `rng`.

    The whole point set is shifted by one uniform vector modulo 1, which
    preserves the low-discrepancy structure while decorrelating repeated
    draws. All outputs lie in [0, 1)^d.
    """
    base = halton_sequence(count, dimension)
    shift = rng.next_generator().random(dimension)
    return np.mod(base + shift, 1.0)


def mvn_sample(mean, cov, count, rng):
    """Draw `count` joint-normal vectors via a jittered Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = mean.shape[0]
    if cov.shape != (k, k):
        raise ValueError("covariance shape does not match mean")
    if count < 1:
        raise ValueError("count must be >= 1")
    if not np.any(cov):
        return np.tile(mean, (count, 1))
    scale = float(np.mean(np.diag(cov)))
    if scale <= 0.0:
        scale = float(np.max(np.abs(cov)))
    last = None
    for factor in (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
        last = factor * scale
        try:
            chol = cholesky(cov + last * np.eye(k), lower=True)
            break
        except np.linalg.LinAlgError:
            chol = None
    if chol is None:
        raise NumericalError(
            "covariance factorization failed", jitter=last
        )
    z = rng.next_generator().standard_normal((count, k))
    return mean[None, :] + z @ chol.T


@dataclass(frozen=True)
class PathSample:
    """One pathwise (decoupled) draw from a GP posterior.

    The prior part is a random-Fourier-feature expansion of the ARD-RBF
    kernel; `update_coeffs` hold the Matheron correction against the
    model's training data. Evaluation is deterministic and smooth in x.
    """

    frequencies: np.ndarray  # (m, d), already scaled by 1/lengthscale
    phases: np.ndarray  # (m,)
    weights: np.ndarray  # (m,)
    amplitude: float  # sqrt(2 * signal_variance / m)
    train_inputs: np.ndarray  # (n, d)
    update_coeffs: np.ndarray  # (n,)
    lengthscales: np.ndarray
    signal_variance: float


def draw_posterior_path(model, num_features, rng):
    """Sample one posterior function path from `model`.

    Draw order from the generator is fixed (frequencies, phases, weights,
    noise) so a cloned stream reproduces the identical path.
    """
    if num_features < 1:
        raise ValueError("num_features must be >= 1")
    h = model.hyper
    d = h.dimension
    gen = rng.next_generator()
    frequencies = gen.standard_normal((num_features, d)) / h.lengthscales
    phases = gen.uniform(0.0, 2.0 * math.pi, num_features)
    weights = gen.standard_normal(num_features)
    amplitude = math.sqrt(2.0 * h.signal_variance / num_features)

    X = model.data.inputs
    n = model.data.n
    if n:
        noise = math.sqrt(h.noise_variance) * gen.standard_normal(n)
        prior_at_train = amplitude * (
            np.cos(X @ frequencies.T + phases) @ weights
        )
        residual = model.data.outputs_std - prior_at_train - noise
        update = cho_solve((model.chol, True), residual)
    else:
        update = np.zeros(0)
    return PathSample(
        frequencies=frequencies,
        phases=phases,
        weights=weights,
        amplitude=amplitude,
        train_inputs=X,
        update_coeffs=update,
        lengthscales=h.lengthscales.copy(),
        signal_variance=h.signal_variance,
    )


def eval_path(path, x):
    return float(eval_path_many(path, np.asarray(x, dtype=float)[None, :])[0])


def eval_path_many(path, X):
    X = np.asarray(X, dtype=float)
    values = path.amplitude * (
        np.cos(X @ path.frequencies.T + path.phases) @ path.weights
    )
    if path.update_coeffs.size:
        values = values + _cross_kernel(path, X) @ path.update_coeffs
    return values


def eval_path_with_grad(path, x):
    x = np.asarray(x, dtype=float)
    angles = path.frequencies @ x + path.phases
    value = path.amplitude * (np.cos(angles) @ path.weights)
    grad = -path.amplitude * (
        (np.sin(angles) * path.weights) @ path.frequencies
    )
    if path.update_coeffs.size:
        kv = _cross_kernel(path, x[None, :])[0]
        value += kv @ path.update_coeffs
        scaled = (path.train_inputs - x) / path.lengthscales**2
        grad = grad + (path.update_coeffs * kv) @ scaled
    return float(value), grad


def _cross_kernel(path, X):
    from .gp import _scaled_sqdist  # local import avoids a cycle at import time

    sq = _scaled_sqdist(X, path.train_inputs, path.lengthscales)
    return path.signal_variance * np.exp(-0.5 * sq)
