"""Shared bounded maximizer for acquisition surfaces.

Screens a quasi-random candidate set, refines the top scorers with
bounded quasi-Newton (L-BFGS-B), and returns the best point found. The
result is never worse than the best raw candidate, every iterate stays
inside the unit box, and the whole procedure is deterministic given the
RNG stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .sampling import halton_points

# Value used in place of -inf sentinels while refining, so finite-difference
# gradients stay bounded near screened-out regions.
_CLAMP_FLOOR = -1e12


@dataclass(frozen=True)
class OptimizerConfig:
    num_candidates_per_dim: int = 1000
    num_restarts: int = 10
    max_iters: int = 100
    grad_tol: float = 1e-8
    finite_diff_step: float = 1e-6

    def __post_init__(self):
        if min(self.num_candidates_per_dim, self.num_restarts, self.max_iters) < 1:
            raise ValueError("optimizer counts must be positive")
        if self.grad_tol <= 0 or self.finite_diff_step <= 0:
            raise ValueError("optimizer tolerances must be positive")


class MaximizeResult(NamedTuple):
    x: np.ndarray
    value: float
    degraded: bool  # True when every quasi-Newton restart failed


def maximize(fn, dimension, cfg, rng, batch_fn=None, value_and_grad=None, candidates=None):
    """Maximize a scalar field over [0, 1]^d.

    `fn` maps a point to a float (may return -inf in sentinel regions);
    `batch_fn`, when given, evaluates a (m, d) array at once for cheap
    screening; `value_and_grad`, when given, supplies analytic gradients
    for the refinement stage, otherwise central finite differences are
    used. `candidates` overrides the screened set (drawn from the Halton
    stream by default).
    """
    if candidates is None:
        count = cfg.num_candidates_per_dim * dimension
        candidates = halton_points(count, dimension, rng)
    if batch_fn is not None:
        values = np.asarray(batch_fn(candidates), dtype=float)
    else:
        values = np.array([fn(x) for x in candidates], dtype=float)

    finite = np.isfinite(values)
    if not np.any(finite):
        return MaximizeResult(candidates[0].copy(), float(values[0]), True)
    order = np.argsort(-np.where(finite, values, -np.inf), kind="stable")
    best_raw_idx = order[0]
    best_x = candidates[best_raw_idx].copy()
    best_value = float(values[best_raw_idx])

    starts = [candidates[i] for i in order[: cfg.num_restarts] if finite[i]]
    bounds = [(0.0, 1.0)] * dimension

    if value_and_grad is not None:

        def neg(x):
            v, g = value_and_grad(x)
            if not np.isfinite(v):
                return -_CLAMP_FLOOR, np.zeros(dimension)
            return -v, -np.asarray(g, dtype=float)

        jac = True
    else:

        def neg(x):
            v = fn(x)
            return -_CLAMP_FLOOR if not np.isfinite(v) else -v

        jac = "3-point"

    any_success = False
    for x0 in starts:
        try:
            res = minimize(
                neg,
                x0,
                jac=jac,
                method="L-BFGS-B",
                bounds=bounds,
                options={
                    "maxiter": cfg.max_iters,
                    "gtol": cfg.grad_tol,
                    "eps": cfg.finite_diff_step,
                },
            )
        except Exception:
            continue
        any_success = True
        x = np.clip(res.x, 0.0, 1.0)
        value = float(fn(x))
        if np.isfinite(value) and value > best_value:
            best_value = value
            best_x = x
    return MaximizeResult(best_x, best_value, not any_success)
