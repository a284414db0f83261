"""Acquisition rules for sequential and asynchronous proposals.

Covers the standard rules (UCB, LogEI, random, Thompson sampling) and the
busy-location-aware ones (Kriging Believer, expected LogEI, Lipschitz
penalization in global and local flavors, and the epsilon-greedy AEGIS
mixture), behind one `propose` entry point. Standard rules ignore the
busy set by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr, logsumexp, ndtr

from .gp import (
    condition_on_fantasies,
    kernel_cross,
    kernel_matrix,
    predict,
    predict_joint,
    predict_many,
    predict_with_grad,
    posterior_mean_grad_many,
    _cholesky_with_jitter,
)
from .optimize import maximize
from .sampling import RngStream, draw_posterior_path, eval_path, eval_path_many, \
    eval_path_with_grad, halton_points, mvn_sample

RULE_NAMES = (
    "ucb",
    "logei",
    "random",
    "ts",
    "kb-ucb",
    "kb-logei",
    "e-logei",
    "lp-ucb",
    "llp-ucb",
    "aegis",
)

DEFAULT_BETA = 2.0
DEFAULT_NUM_FANTASIES = 500
DEFAULT_GAMMA = 1.0
DEFAULT_POWER = -5.0
DEFAULT_NUM_FEATURES = 1024

LOG_EI_FLOOR = -700.0
_LOG_2PI = math.log(2.0 * math.pi)
_SIGMA_TINY = 1e-12
_LIPSCHITZ_FLOOR = 1e-6
_LLP_LOCAL_CANDIDATES = 200


@dataclass(frozen=True)
class BusySet:
    """Locations currently under evaluation by other workers."""

    locations: np.ndarray  # (m, d)
    worker_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "locations", np.atleast_2d(np.asarray(self.locations, dtype=float))
        )

    @classmethod
    def empty(cls, dimension):
        return cls(np.zeros((0, dimension)))

    @property
    def size(self):
        return self.locations.shape[0]


@dataclass(frozen=True)
class AcquisitionRule:
    """Tagged acquisition rule with its parameters."""

    kind: str
    beta: float = DEFAULT_BETA
    num_fantasies: int = DEFAULT_NUM_FANTASIES
    gamma: float = DEFAULT_GAMMA
    power: float = DEFAULT_POWER
    num_features: int = DEFAULT_NUM_FEATURES

    def __post_init__(self):
        if self.kind not in RULE_NAMES:
            raise ValueError(
                f"unknown acquisition rule {self.kind!r}; valid: {', '.join(RULE_NAMES)}"
            )
        if self.beta <= 0 or self.num_fantasies < 1 or self.num_features < 1:
            raise ValueError("rule parameters out of range")
        if self.power >= 0 or self.gamma < 0:
            raise ValueError("penalizer parameters require p < 0 and gamma >= 0")

    @classmethod
    def from_name(cls, name):
        return cls(kind=name)


@dataclass
class AcqStreams:
    """The RNG streams an acquisition proposal may consume."""

    acq: RngStream
    fantasies: RngStream
    ts: RngStream

    @classmethod
    def for_seed(cls, seed):
        return cls(
            acq=RngStream(seed, "acq_restarts"),
            fantasies=RngStream(seed, "fantasies"),
            ts=RngStream(seed, "ts"),
        )

    def clone(self):
        return AcqStreams(self.acq.clone(), self.fantasies.clone(), self.ts.clone())


def incumbent_std(model):
    """Best completed observation, in standardized units."""
    if model.data.n < 1:
        raise ValueError("incumbent requires at least one observation")
    return float(np.max(model.data.outputs_std))


# ---------------------------------------------------------------------------
# UCB


def ucb(model, x, beta=DEFAULT_BETA):
    if beta <= 0:
        raise ValueError("beta must be positive")
    mu, var = predict(model, x)
    return mu + math.sqrt(beta) * math.sqrt(max(var, 0.0))


def ucb_values(model, X, beta=DEFAULT_BETA):
    mu, var = predict_many(model, X)
    return mu + math.sqrt(beta) * np.sqrt(np.maximum(var, 0.0))


class UcbSurface:
    def __init__(self, model, beta=DEFAULT_BETA):
        self.model = model
        self.sqrt_beta = math.sqrt(beta)

    def value(self, x):
        mu, var = predict(self.model, x)
        return mu + self.sqrt_beta * math.sqrt(max(var, 0.0))

    def batch(self, X):
        mu, var = predict_many(self.model, X)
        return mu + self.sqrt_beta * np.sqrt(np.maximum(var, 0.0))

    def value_and_grad(self, x):
        mu, var, gmu, gvar = predict_with_grad(self.model, x)
        sigma = math.sqrt(max(var, 0.0))
        if sigma < _SIGMA_TINY:
            return mu, gmu
        return mu + self.sqrt_beta * sigma, gmu + self.sqrt_beta * gvar / (2.0 * sigma)


# ---------------------------------------------------------------------------
# LogEI


def _log_h(z):
    """log(pdf(z) + z * cdf(z)), stable for very negative z.

    Below the branch point the direct form cancels catastrophically, so an
    asymptotic expansion of the Mills-ratio tail is used instead.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    direct = z > -8.0
    zd = z[direct]
    h = np.exp(-0.5 * zd * zd) / math.sqrt(2.0 * math.pi) + zd * ndtr(zd)
    with np.errstate(divide="ignore"):
        out[direct] = np.log(h)
    zt = z[~direct]
    if zt.size:
        # h(z) ~ pdf(z)/z^2 * (1 - 3/z^2 + 15/z^4 - ...), coefficients
        # (-1)^k (2k+1)!!
        inv2 = 1.0 / (zt * zt)
        series = np.zeros_like(zt)
        power = np.ones_like(zt)
        coeff = 1.0
        for k in range(1, 9):
            coeff *= -(2 * k + 1)
            power *= inv2
            series += coeff * power
        out[~direct] = -0.5 * zt * zt - 0.5 * _LOG_2PI - np.log(zt * zt) + np.log1p(series)
    return out


def log_ei_values(mu, sigma, incumbent):
    """Stable elementwise log expected improvement over `incumbent`.

    Degenerate sigmas fall back to the deterministic improvement, and all
    results are floored at LOG_EI_FLOOR instead of -inf.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape).copy()
    improvement = mu - incumbent
    degenerate = sigma < _SIGMA_TINY
    safe_sigma = np.where(degenerate, 1.0, sigma)
    z = improvement / safe_sigma
    values = np.log(safe_sigma) + _log_h(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        deterministic = np.where(improvement > 0.0, np.log(np.maximum(improvement, 1e-300)), -np.inf)
    values = np.where(degenerate, deterministic, values)
    return np.maximum(values, LOG_EI_FLOOR)


def log_ei(model, x, incumbent):
    mu, var = predict(model, x)
    return float(log_ei_values(np.array([mu]), np.array([math.sqrt(max(var, 0.0))]), incumbent)[0])


class LogEiSurface:
    def __init__(self, model, incumbent):
        self.model = model
        self.incumbent = incumbent

    def value(self, x):
        return log_ei(self.model, x, self.incumbent)

    def batch(self, X):
        mu, var = predict_many(self.model, X)
        return log_ei_values(mu, np.sqrt(np.maximum(var, 0.0)), self.incumbent)

    def value_and_grad(self, x):
        mu, var, gmu, gvar = predict_with_grad(self.model, x)
        sigma = math.sqrt(max(var, 0.0))
        if sigma < _SIGMA_TINY:
            improvement = mu - self.incumbent
            value = math.log(improvement) if improvement > 0 else LOG_EI_FLOOR
            return max(value, LOG_EI_FLOOR), np.zeros_like(gmu)
        z = (mu - self.incumbent) / sigma
        log_h = float(_log_h(z))
        value = max(math.log(sigma) + log_h, LOG_EI_FLOOR)
        gsigma = gvar / (2.0 * sigma)
        d_mu = math.exp(float(log_ndtr(z)) - log_h) / sigma
        d_sigma = math.exp(-0.5 * z * z - 0.5 * _LOG_2PI - log_h) / sigma
        return value, d_mu * gmu + d_sigma * gsigma


# ---------------------------------------------------------------------------
# Thompson sampling


class PathSurface:
    def __init__(self, path):
        self.path = path

    def value(self, x):
        return eval_path(self.path, x)

    def batch(self, X):
        return eval_path_many(self.path, X)

    def value_and_grad(self, x):
        return eval_path_with_grad(self.path, x)


def thompson_propose(model, opt_cfg, ts_rng, acq_rng, num_features=DEFAULT_NUM_FEATURES):
    """Maximize one pathwise posterior sample."""
    path = draw_posterior_path(model, num_features, ts_rng)
    surface = PathSurface(path)
    result = maximize(
        surface.value,
        model.dimension,
        opt_cfg,
        acq_rng,
        batch_fn=surface.batch,
        value_and_grad=surface.value_and_grad,
    )
    return np.clip(result.x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Kriging Believer


def believer_model(model, busy):
    """Condition on posterior means at the busy locations.

    Returns the conditioned model together with the incumbent of the
    *completed* observations (fantasy values never move the incumbent).
    """
    ystar = incumbent_std(model)
    if busy.size == 0:
        return model, ystar
    mu_b, _ = predict_many(model, busy.locations)
    return condition_on_fantasies(model, busy.locations, mu_b), ystar


def kriging_believer(base, model, busy, x, beta=DEFAULT_BETA):
    """Evaluate `base` ("ucb" or "logei") under the believer posterior."""
    cond, ystar = believer_model(model, busy)
    if base == "ucb":
        return ucb(cond, x, beta)
    if base == "logei":
        return log_ei(cond, x, ystar)
    raise ValueError(f"kriging believer supports 'ucb' and 'logei', got {base!r}")


# ---------------------------------------------------------------------------
# Expected LogEI (Monte Carlo over fantasy outcomes)


class ExpectedLogEiSurface:
    """log of the fantasy-averaged EI, with common random numbers.

    Fantasies are drawn once at construction, so the Monte Carlo surface
    is deterministic and smooth during one acquisition optimization. The
    log-mean is computed by log-sum-exp over per-fantasy LogEI values.
    """

    def __init__(self, model, busy, num_fantasies, rng, fantasies=None):
        if busy.size == 0:
            raise ValueError("use LogEiSurface when no locations are busy")
        if num_fantasies < 1:
            raise ValueError("num_fantasies must be >= 1")
        self.incumbent = incumbent_std(model)
        h = model.hyper
        if fantasies is None:
            mu_b, cov_b = predict_joint(model, busy.locations)
            fantasies = mvn_sample(mu_b, cov_b, num_fantasies, rng)  # (N, m)

        X_aug = np.vstack([model.data.inputs, busy.locations])
        K = kernel_matrix(h, X_aug)
        K[np.diag_indices_from(K)] += h.noise_variance
        self.chol, _ = _cholesky_with_jitter(K)
        n = model.data.n
        Y = np.empty((X_aug.shape[0], num_fantasies))
        Y[:n] = model.data.outputs_std[:, None]
        Y[n:] = fantasies.T
        self.alphas = cho_solve((self.chol, True), Y)  # (n+m, N)
        self.inputs = X_aug
        self.hyper = h
        self.log_n = math.log(num_fantasies)

    def fantasy_log_improvements(self, x):
        """Per-fantasy LogEI values at one point."""
        kv = kernel_cross(self.hyper, np.asarray(x, float)[None, :], self.inputs)[0]
        mus = kv @ self.alphas
        v = solve_triangular(self.chol, kv, lower=True)
        var = np.clip(self.hyper.signal_variance - v @ v, 0.0, None)
        return log_ei_values(mus, math.sqrt(var), self.incumbent)

    def value(self, x):
        return float(logsumexp(self.fantasy_log_improvements(x)) - self.log_n)

    def batch(self, X):
        Kc = kernel_cross(self.hyper, X, self.inputs)
        MU = Kc @ self.alphas  # (c, N)
        V = solve_triangular(self.chol, Kc.T, lower=True)
        var = np.clip(self.hyper.signal_variance - np.einsum("ij,ij->j", V, V), 0.0, None)
        sigma = np.sqrt(var)[:, None]
        values = log_ei_values(MU, sigma, self.incumbent)
        return logsumexp(values, axis=1) - self.log_n


def expected_log_ei(model, busy, x, num_fantasies=DEFAULT_NUM_FANTASIES, rng=None):
    """Monte-Carlo expected-EI acquisition evaluated at one point."""
    if busy.size == 0:
        return log_ei(model, x, incumbent_std(model))
    if rng is None:
        raise ValueError("an RNG stream is required when locations are busy")
    surface = ExpectedLogEiSurface(model, busy, num_fantasies, rng)
    return surface.value(x)


# ---------------------------------------------------------------------------
# Lipschitz penalization (LP / LLP)


def soft_min_one(z, power=DEFAULT_POWER):
    """Differentiable surrogate for min(z, 1) with z >= 0: (z^p + 1)^(1/p).

    Written as z / (1 + z^r)^(1/r) with r = -p, which is exact at z = 0
    and stable for large z.
    """
    r = -float(power)
    z = np.asarray(z, dtype=float)
    return z / (1.0 + z**r) ** (1.0 / r)


def _soft_min_one_grad(z, power=DEFAULT_POWER):
    r = -float(power)
    return (1.0 + z**r) ** (-1.0 / r - 1.0)


def estimate_lipschitz(model, candidates):
    """Global posterior-mean gradient bound over a candidate set."""
    _, grads = posterior_mean_grad_many(model, candidates)
    return max(float(np.max(np.linalg.norm(grads, axis=1))), _LIPSCHITZ_FLOOR)


def _local_lipschitz(model, center, rng):
    half = 0.5 * model.hyper.lengthscales
    lo = np.clip(center - half, 0.0, 1.0)
    hi = np.clip(center + half, 0.0, 1.0)
    base = halton_points(_LLP_LOCAL_CANDIDATES, model.dimension, rng)
    return estimate_lipschitz(model, lo + base * (hi - lo))


class PenalizedUcbSurface:
    """UCB multiplied by soft exclusion cones around busy locations.

    The UCB is shifted to be non-negative over the candidate grid before
    multiplying by the penalizers, so the product preserves the argmax
    even when the raw UCB is negative.
    """

    def __init__(self, model, busy, beta, gamma, power, shift, lipschitz, candidates):
        self.model = model
        self.busy = busy.locations
        self.beta = beta
        self.sqrt_beta = math.sqrt(beta)
        self.power = power
        self.shift = shift
        self.lipschitz = np.asarray(lipschitz, dtype=float)  # (m,)
        self.candidates = candidates
        mu_j, var_j = predict_many(model, self.busy)
        ystar = incumbent_std(model)
        denom = np.abs(mu_j - ystar) + gamma * np.sqrt(np.maximum(var_j, 0.0))
        self.denominators = np.maximum(denom, 1e-12)

    @classmethod
    def build(
        cls,
        model,
        busy,
        mode,
        rng,
        beta=DEFAULT_BETA,
        gamma=DEFAULT_GAMMA,
        power=DEFAULT_POWER,
        num_candidates=None,
        lipschitz=None,
    ):
        if busy.size == 0:
            raise ValueError("use UcbSurface when no locations are busy")
        if mode not in ("lp", "llp"):
            raise ValueError("mode must be 'lp' or 'llp'")
        d = model.dimension
        count = num_candidates or 1000 * d
        candidates = halton_points(count, d, rng)
        shift = float(np.min(ucb_values(model, candidates, beta)))
        if lipschitz is None:
            if mode == "lp":
                lipschitz = np.full(busy.size, estimate_lipschitz(model, candidates))
            else:
                lipschitz = np.array(
                    [_local_lipschitz(model, xj, rng) for xj in busy.locations]
                )
        else:
            lipschitz = np.broadcast_to(np.asarray(lipschitz, float), (busy.size,))
        return cls(model, busy, beta, gamma, power, shift, lipschitz, candidates)

    def _penalizers(self, dists):
        z = dists * (self.lipschitz / self.denominators)
        return soft_min_one(z, self.power)

    def value(self, x):
        mu, var = predict(self.model, x)
        shifted = mu + self.sqrt_beta * math.sqrt(max(var, 0.0)) - self.shift
        dists = np.linalg.norm(self.busy - np.asarray(x, float), axis=1)
        return float(shifted * np.prod(self._penalizers(dists)))

    def batch(self, X):
        shifted = ucb_values(self.model, X, self.beta) - self.shift
        diff = X[:, None, :] - self.busy[None, :, :]
        dists = np.sqrt(np.einsum("cmd,cmd->cm", diff, diff))
        z = dists * (self.lipschitz / self.denominators)[None, :]
        return shifted * np.prod(soft_min_one(z, self.power), axis=1)

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        mu, var, gmu, gvar = predict_with_grad(self.model, x)
        sigma = math.sqrt(max(var, 0.0))
        shifted = mu + self.sqrt_beta * sigma - self.shift
        gshifted = gmu if sigma < _SIGMA_TINY else gmu + self.sqrt_beta * gvar / (2.0 * sigma)

        diff = x[None, :] - self.busy  # (m, d)
        dists = np.linalg.norm(diff, axis=1)
        if np.any(dists < 1e-12):
            return 0.0, np.zeros_like(x)  # exact busy hit: hard zero of the surface
        rate = self.lipschitz / self.denominators
        z = dists * rate
        pens = soft_min_one(z, self.power)
        total = float(np.prod(pens))
        value = shifted * total
        # d(prod)/dx = sum_j prod_{k != j} pen_k * pen'_j * rate_j * (x - x_j)/dist_j
        others = total / pens  # pens > 0 since dists > 0
        weights = others * _soft_min_one_grad(z, self.power) * rate / dists
        gprod = weights @ diff
        return value, gshifted * total + shifted * gprod


def penalized_ucb(
    model,
    busy,
    x,
    gamma=DEFAULT_GAMMA,
    power=DEFAULT_POWER,
    mode="lp",
    beta=DEFAULT_BETA,
    rng=None,
    lipschitz=None,
    num_candidates=None,
):
    """Penalized-UCB acquisition at one point (plain UCB when B is empty)."""
    if busy.size == 0:
        return ucb(model, x, beta)
    if rng is None:
        raise ValueError("an RNG stream is required when locations are busy")
    surface = PenalizedUcbSurface.build(
        model, busy, mode, rng, beta=beta, gamma=gamma, power=power,
        num_candidates=num_candidates, lipschitz=lipschitz,
    )
    return surface.value(x)


# ---------------------------------------------------------------------------
# AEGIS


class MeanSurface:
    def __init__(self, model):
        self.model = model

    def value(self, x):
        return predict(self.model, x)[0]

    def batch(self, X):
        return predict_many(self.model, X)[0]

    def value_and_grad(self, x):
        mu, _, gmu, _ = predict_with_grad(self.model, x)
        return mu, gmu


def aegis_epsilon(dimension):
    return min(2.0 / math.sqrt(dimension), 1.0)


def _aegis_branch(u, epsilon):
    if u < 0.5 * epsilon:
        return "ts"
    if u < epsilon:
        return "pareto"
    return "exploit"


def pareto_front_mask(mu, sigma):
    """Non-dominated mask for jointly maximizing (mu, sigma)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = len(mu)
    mask = np.ones(n, dtype=bool)
    chunk = 512
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        ge_mu = mu[None, :] >= mu[sl, None]
        ge_sig = sigma[None, :] >= sigma[sl, None]
        strict = (mu[None, :] > mu[sl, None]) | (sigma[None, :] > sigma[sl, None])
        mask[sl] = ~np.any(ge_mu & ge_sig & strict, axis=1)
    return mask


def aegis_propose(model, opt_cfg, streams, num_features=DEFAULT_NUM_FEATURES):
    """Probabilistic mixture of TS, Pareto-front sampling, and mean exploitation."""
    d = model.dimension
    epsilon = aegis_epsilon(d)
    u = float(streams.ts.next_generator().random())
    branch = _aegis_branch(u, epsilon)
    if branch == "ts":
        return thompson_propose(model, opt_cfg, streams.ts, streams.acq, num_features)
    if branch == "pareto":
        candidates = halton_points(1000 * d, d, streams.ts)
        mu, var = predict_many(model, candidates)
        mask = pareto_front_mask(mu, np.sqrt(np.maximum(var, 0.0)))
        front = np.flatnonzero(mask)
        pick = front[int(streams.ts.next_generator().integers(len(front)))]
        return candidates[pick].copy()
    surface = MeanSurface(model)
    result = maximize(
        surface.value, d, opt_cfg, streams.acq,
        batch_fn=surface.batch, value_and_grad=surface.value_and_grad,
    )
    return np.clip(result.x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Unified dispatch


def propose(rule, model, busy, opt_cfg, streams):
    """Propose the next query location for `rule`; always in [0, 1]^d."""
    d = model.dimension
    kind = rule.kind
    if kind == "random":
        return streams.acq.next_generator().random(d)
    if kind == "ts":
        return thompson_propose(model, opt_cfg, streams.ts, streams.acq, rule.num_features)
    if kind == "aegis":
        return aegis_propose(model, opt_cfg, streams, rule.num_features)

    if kind == "ucb":
        surface = UcbSurface(model, rule.beta)
    elif kind == "logei":
        surface = LogEiSurface(model, incumbent_std(model))
    elif kind in ("kb-ucb", "kb-logei"):
        cond, ystar = believer_model(model, busy)
        surface = (
            UcbSurface(cond, rule.beta) if kind == "kb-ucb" else LogEiSurface(cond, ystar)
        )
    elif kind == "e-logei":
        if busy.size == 0:
            surface = LogEiSurface(model, incumbent_std(model))
        else:
            surface = ExpectedLogEiSurface(model, busy, rule.num_fantasies, streams.fantasies)
    elif kind in ("lp-ucb", "llp-ucb"):
        if busy.size == 0:
            surface = UcbSurface(model, rule.beta)
        else:
            surface = PenalizedUcbSurface.build(
                model, busy, "lp" if kind == "lp-ucb" else "llp", streams.acq,
                beta=rule.beta, gamma=rule.gamma, power=rule.power,
            )
    else:  # pragma: no cover - guarded by AcquisitionRule validation
        raise ValueError(f"unknown rule {kind!r}")

    candidates = getattr(surface, "candidates", None)
    result = maximize(
        surface.value,
        d,
        opt_cfg,
        streams.acq,
        batch_fn=surface.batch,
        value_and_grad=getattr(surface, "value_and_grad", None),
        candidates=candidates,
    )
    return np.clip(result.x, 0.0, 1.0)
