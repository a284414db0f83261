"""Quantitative analyses over run traces: log simple regret, query
distances, cross-seed aggregation, lengthscale diagnostics, win rates,
and the Mann-Whitney U test.

Everything here is a pure function of trace data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

REGRET_FLOOR = 1e-12
TIME_GRID_POINTS = 200


@dataclass(frozen=True)
class RegretCurve:
    times: np.ndarray  # (g,)
    per_seed: np.ndarray  # (s, g)
    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray


def log_regret(trace, f_star=None):
    """Per-completion log simple regret, floored to dodge -inf at zero gap."""
    if f_star is None:
        f_star = trace.f_star
    gaps = np.abs(f_star - trace.incumbents())
    return np.log(np.maximum(gaps, REGRET_FLOOR))


def initial_log_regret(trace, f_star=None):
    if f_star is None:
        f_star = trace.f_star
    return math.log(max(abs(f_star - trace.initial_incumbent), REGRET_FLOOR))


def busy_distance(x, busy):
    """Euclidean distance from x to the nearest busy location."""
    locations = getattr(busy, "locations", busy)
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if locations.shape[0] == 0:
        raise ValueError("distance to an empty busy set is undefined")
    return float(np.min(np.linalg.norm(locations - np.asarray(x, float), axis=1)))


def step_interpolate(times, values, initial_value, grid):
    """Piecewise-constant (carry-forward) interpolation onto a time grid.

    Grid points before the first completion take `initial_value`, the
    incumbent of the initial data.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if len(values) == 0:
        return np.full(len(grid), float(initial_value))
    idx = np.searchsorted(times, grid, side="right")  # 0 means "before first"
    padded = np.concatenate([[initial_value], values])
    return padded[idx]


def aggregate(curves, grid):
    """Pointwise median and quartiles of per-seed step series on a grid.

    `curves` holds (times, values, initial_value) triples, one per seed.
    """
    if not curves:
        raise ValueError("at least one per-seed series is required")
    grid = np.asarray(grid, dtype=float)
    per_seed = np.vstack(
        [step_interpolate(t, v, v0, grid) for t, v, v0 in curves]
    )
    return RegretCurve(
        times=grid,
        per_seed=per_seed,
        median=np.median(per_seed, axis=0),
        q1=np.percentile(per_seed, 25, axis=0),
        q3=np.percentile(per_seed, 75, axis=0),
    )


def time_grid(horizon, points=TIME_GRID_POINTS):
    return np.linspace(0.0, horizon, points)


def win_rate(final_regrets_a, final_regrets_b):
    """Fraction of paired seeds where a beats b; ties count one half."""
    a = np.asarray(final_regrets_a, dtype=float)
    b = np.asarray(final_regrets_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("win_rate requires samples paired by seed")
    wins = np.sum(a < b) + 0.5 * np.sum(a == b)
    return float(wins / len(a))


def _rank_with_ties(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_u_cdf(n1, n2, u):
    """P(U <= u) under the null, by counting rank arrangements.

    Uses the classic recurrence f(u; m, n) = f(u - n; m-1, n) + f(u; m, n-1).
    """
    max_u = n1 * n2
    prev = [np.zeros(max_u + 1) for _ in range(n2 + 1)]
    for n in range(n2 + 1):
        prev[n][0] = 1.0  # zero elements in the first sample
    for _m in range(1, n1 + 1):
        cur = [np.zeros(max_u + 1) for _ in range(n2 + 1)]
        cur[0][0] = 1.0
        for n in range(1, n2 + 1):
            cur[n][:] = cur[n - 1]
            cur[n][n:] += prev[n][: max_u + 1 - n]
        prev = cur
    counts = prev[n2]
    total = math.comb(n1 + n2, n1)
    return float(np.sum(counts[: int(round(u)) + 1]) / total)


def mann_whitney_u(sample_a, sample_b):
    """Two-sided Mann-Whitney U p-value.

    Uses the exact null distribution for small tie-free samples and the
    tie-corrected, continuity-corrected normal approximation otherwise.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = _rank_with_ties(pooled)
    r1 = float(np.sum(ranks[:n1]))
    u1 = n1 * n2 + n1 * (n1 + 1) / 2.0 - r1
    u2 = n1 * n2 - u1
    u_min = min(u1, u2)

    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = np.any(tie_counts > 1)
    if not has_ties and max(n1, n2) <= 20:
        p = 2.0 * _exact_u_cdf(n1, n2, u_min)
        return float(min(p, 1.0))

    n = n1 + n2
    tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1)) if n > 1 else 0.0
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if variance <= 0.0:
        return 1.0  # all values identical across both samples
    z = (u_min - n1 * n2 / 2.0 + 0.5) / math.sqrt(variance)
    return float(min(2.0 * ndtr(z), 1.0))


def lengthscale_stats(trace):
    """Per-iteration mean lengthscale and mean absolute successive change.

    The change series starts at NaN: there is no previous within-trace
    snapshot for the first completion.
    """
    snapshots = [record.lengthscales for record in trace.records]
    if not snapshots:
        return np.zeros(0), np.zeros(0)
    means = np.array([float(np.mean(ls)) for ls in snapshots])
    changes = np.full(len(snapshots), math.nan)
    for i in range(1, len(snapshots)):
        changes[i] = float(np.mean(np.abs(snapshots[i] - snapshots[i - 1])))
    return means, changes
