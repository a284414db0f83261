"""Deterministic discrete-event simulation of the asynchronous BO loop.

One simulation replays the q-worker loop: initial data observed at time
zero, workers started at quasi-random points, and on each completion the
surrogate is refit, a replacement query proposed with the current busy
set, and its (simulated) completion scheduled. A sequential baseline runs
the same engine with a single worker and tracks distances to the most
recent queries instead of busy locations.

Everything is keyed off named RNG streams, so reruns of the same config
reproduce bit-identical traces.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .acquisitions import AcqStreams, AcquisitionRule, BusySet, propose
from .errors import EvaluationError
from .gp import Dataset, KernelHyperparams, LengthscalePrior, fit_hyperparameters, fit_posterior
from .metrics import busy_distance
from .objectives import (
    DurationModel,
    HALF_NORMAL_SCALE,
    evaluate,
    get_objective,
    sample_duration,
)
from .optimize import OptimizerConfig
from .sampling import RngStream, halton_points

MODES = ("async", "seq")


@dataclass(frozen=True)
class RunConfig:
    """One benchmark run: objective, rule, worker count, budgets, seed."""

    objective: str
    q: int
    rule: str
    seed: int
    time_budget: float | None = None
    max_evals: int | None = None
    initial_points: int | None = None  # defaults to 3 * d
    duration_scale: float = HALF_NORMAL_SCALE

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.time_budget is None and self.max_evals is None:
            raise ValueError("set a time budget and/or a max evaluation count")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time budget must be positive")
        if self.max_evals is not None and self.max_evals < 0:
            raise ValueError("max_evals must be >= 0")
        AcquisitionRule.from_name(self.rule)  # validates the name

    def acquisition_rule(self):
        return AcquisitionRule.from_name(self.rule)

    def to_dict(self):
        return {
            "objective": self.objective,
            "q": self.q,
            "rule": self.rule,
            "seed": self.seed,
            "time_budget": self.time_budget,
            "max_evals": self.max_evals,
            "initial_points": self.initial_points,
            "duration_scale": self.duration_scale,
        }


@dataclass(frozen=True)
class SimEvent:
    completion_time: float
    worker_id: int
    x: np.ndarray
    y_raw: float


@dataclass(frozen=True)
class TraceRecord:
    sim_time: float
    worker_id: int
    x: np.ndarray
    y_raw: float
    incumbent: float  # best raw value so far, in the objective's orientation
    delta: float  # distance diagnostic of the proposal made at this step
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float


@dataclass
class RunTrace:
    config: RunConfig
    mode: str
    dimension: int
    minimize: bool
    f_star: float
    initial_inputs: np.ndarray
    initial_outputs: np.ndarray  # raw units
    initial_incumbent: float
    initial_incumbent_x: np.ndarray
    initial_hyper: KernelHyperparams
    records: list = field(default_factory=list)
    fit_fallbacks: int = 0
    aborted: bool = False
    abort_reason: str | None = None
    # Initial evaluations seed the dataset but do not count against budgets.
    budget_note: str = "initial points excluded from completion budget"

    @property
    def num_completions(self):
        return len(self.records)

    def final_incumbent(self):
        """(x, y_raw) of the best observation, initial data included."""
        best_x = self.initial_incumbent_x
        best_y = self.initial_incumbent
        for record in self.records:
            if _is_better(record.y_raw, best_y, self.minimize):
                best_x, best_y = record.x, record.y_raw
        return best_x, best_y

    def incumbents(self):
        return np.array([record.incumbent for record in self.records])

    def deltas(self):
        return np.array([record.delta for record in self.records])

    def times(self):
        return np.array([record.sim_time for record in self.records])


def _is_better(candidate, reference, minimize):
    return candidate < reference if minimize else candidate > reference


def run_async(cfg, opt_cfg=None):
    """Asynchronous loop with q simulated workers."""
    return _run(cfg, mode="async", opt_cfg=opt_cfg)


def run_seq(cfg, opt_cfg=None):
    """Single-worker baseline; every observation lands before each proposal.

    Distances are measured against the q - 1 most recent proposals so the
    series is comparable with the asynchronous busy-set distances.
    """
    return _run(cfg, mode="seq", opt_cfg=opt_cfg)


def _run(cfg, mode, opt_cfg=None):
    objective = get_objective(cfg.objective)
    d = objective.dimension
    rule = cfg.acquisition_rule()
    opt_cfg = opt_cfg or OptimizerConfig()
    durations = DurationModel(cfg.duration_scale)
    n_workers = cfg.q if mode == "async" else 1
    n0 = cfg.initial_points if cfg.initial_points is not None else 3 * d

    init_stream = RngStream(cfg.seed, "init")
    duration_stream = RngStream(cfg.seed, "durations")
    hyper_stream = RngStream(cfg.seed, "hyper_restarts")
    streams = AcqStreams.for_seed(cfg.seed)
    prior = LengthscalePrior.for_dimension(d)

    points = halton_points(n0 + n_workers, d, init_stream)
    try:
        initial_raw = np.array([evaluate(objective, x) for x in points[:n0]])
    except EvaluationError as err:
        return _aborted_trace(cfg, mode, objective, points[:n0], str(err))

    def to_score(y_raw):
        return -y_raw if objective.minimize else y_raw

    data = Dataset.from_observations(points[:n0], to_score(initial_raw))
    fit = fit_hyperparameters(data, KernelHyperparams.default(d), prior, hyper_stream)
    hyper = fit.hyper
    model = fit_posterior(data, hyper)

    best_idx = int(np.argmin(initial_raw) if objective.minimize else np.argmax(initial_raw))
    trace = RunTrace(
        config=cfg,
        mode=mode,
        dimension=d,
        minimize=objective.minimize,
        f_star=objective.optimum_value,
        initial_inputs=points[:n0].copy(),
        initial_outputs=initial_raw,
        initial_incumbent=float(initial_raw[best_idx]),
        initial_incumbent_x=points[best_idx].copy(),
        initial_hyper=hyper,
        fit_fallbacks=int(fit.degraded),
    )

    def reached_max(count):
        return cfg.max_evals is not None and count >= cfg.max_evals

    if reached_max(0):
        return trace

    heap = []
    inflight = {}

    def start(worker, x, now):
        y_raw = evaluate(objective, x)
        duration = sample_duration(durations, duration_stream)
        event = SimEvent(now + duration, worker, np.asarray(x, float), float(y_raw))
        inflight[worker] = event
        heapq.heappush(heap, (event.completion_time, worker))

    try:
        for worker in range(n_workers):
            start(worker, points[n0 + worker], 0.0)
    except EvaluationError as err:
        trace.aborted = True
        trace.abort_reason = str(err)
        return trace

    incumbent = trace.initial_incumbent
    recent_proposals = []  # sequential-mode distance window

    while heap:
        completion_time, worker = heapq.heappop(heap)
        if cfg.time_budget is not None and completion_time >= cfg.time_budget:
            break  # deadline: in-flight evaluations are discarded
        event = inflight.pop(worker)
        assert len(inflight) == n_workers - 1

        data = data.with_observation(event.x, to_score(event.y_raw))
        fit = fit_hyperparameters(data, hyper, prior, hyper_stream)
        trace.fit_fallbacks += int(fit.degraded)
        hyper = fit.hyper
        model = fit_posterior(data, hyper)
        if _is_better(event.y_raw, incumbent, objective.minimize):
            incumbent = event.y_raw

        completed = trace.num_completions + 1
        delta = math.nan
        if not reached_max(completed):
            busy_ids = sorted(inflight)
            busy = BusySet(
                np.array([inflight[w].x for w in busy_ids]).reshape(len(busy_ids), d),
                tuple(busy_ids),
            )
            x_next = propose(rule, model, busy, opt_cfg, streams)
            if mode == "seq":
                window = recent_proposals[-(cfg.q - 1):] if cfg.q > 1 else []
                if window:
                    delta = busy_distance(x_next, np.array(window))
            elif busy.size:
                delta = busy_distance(x_next, busy)
            recent_proposals.append(x_next)
            try:
                start(worker, x_next, completion_time)
            except EvaluationError as err:
                trace.aborted = True
                trace.abort_reason = str(err)

        trace.records.append(
            TraceRecord(
                sim_time=completion_time,
                worker_id=worker,
                x=event.x,
                y_raw=event.y_raw,
                incumbent=incumbent,
                delta=delta,
                lengthscales=hyper.lengthscales.copy(),
                signal_variance=hyper.signal_variance,
                noise_variance=hyper.noise_variance,
            )
        )
        if trace.aborted or reached_max(trace.num_completions):
            break
    return trace


def _aborted_trace(cfg, mode, objective, initial_inputs, reason):
    d = objective.dimension
    hyper = KernelHyperparams.default(d)
    trace = RunTrace(
        config=cfg,
        mode=mode,
        dimension=d,
        minimize=objective.minimize,
        f_star=objective.optimum_value,
        initial_inputs=np.asarray(initial_inputs, float),
        initial_outputs=np.zeros(0),
        initial_incumbent=math.nan,
        initial_incumbent_x=np.full(d, math.nan),
        initial_hyper=hyper,
    )
    trace.aborted = True
    trace.abort_reason = reason
    return trace
