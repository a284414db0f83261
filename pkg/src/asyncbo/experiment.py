"""Experiment driver: grid expansion, batch execution, and table emission.

An experiment is the Cartesian product of objectives, rules, worker
counts, seeds, and modes. Each run writes one trace file; a manifest
records the spec hash and per-run status. `analyze` turns a directory of
traces into the summary tables consumed by the plotting component.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import storage
from .acquisitions import RULE_NAMES
from .metrics import mann_whitney_u, step_interpolate, time_grid, win_rate
from .objectives import HALF_NORMAL_SCALE, get_objective
from .simulator import MODES, RunConfig, run_async, run_seq

REGRET_FLOOR = 1e-12


@dataclass(frozen=True)
class ExperimentSpec:
    objectives: tuple
    rules: tuple
    workers: tuple
    num_seeds: int
    seed_base: int = 0
    time_budget: float | None = None
    max_evals: int | None = None
    modes: tuple = ("async",)
    initial_points: int | None = None
    duration_scale: float = HALF_NORMAL_SCALE
    out_dir: str = "results"
    jobs: int = 1

    def __post_init__(self):
        if not self.objectives or not self.rules or not self.workers:
            raise ValueError("objectives, rules, and workers must be non-empty")
        for rule in self.rules:
            if rule not in RULE_NAMES:
                raise ValueError(
                    f"unknown rule {rule!r}; valid rules: {', '.join(RULE_NAMES)}"
                )
        for objective in self.objectives:
            get_objective(objective)  # raises with the valid families listed
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown mode {mode!r}; valid modes: {MODES}")
        if self.num_seeds < 0:
            raise ValueError("num_seeds must be >= 0")
        if self.time_budget is None and self.max_evals is None:
            raise ValueError("set a time budget and/or a max evaluation count")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def seeds(self):
        return tuple(range(self.seed_base, self.seed_base + self.num_seeds))

    def expand(self):
        """Full Cartesian product, one (RunConfig, mode) per run."""
        runs = []
        for objective, rule, q, seed, mode in itertools.product(
            self.objectives, self.rules, self.workers, self.seeds, self.modes
        ):
            cfg = RunConfig(
                objective=objective,
                q=q,
                rule=rule,
                seed=seed,
                time_budget=self.time_budget,
                max_evals=self.max_evals,
                initial_points=self.initial_points,
                duration_scale=self.duration_scale,
            )
            runs.append((cfg, mode))
        return runs

    def to_dict(self):
        return {
            "objectives": list(self.objectives),
            "rules": list(self.rules),
            "workers": list(self.workers),
            "num_seeds": self.num_seeds,
            "seed_base": self.seed_base,
            "time_budget": self.time_budget,
            "max_evals": self.max_evals,
            "modes": list(self.modes),
            "initial_points": self.initial_points,
            "duration_scale": self.duration_scale,
        }


_SPEC_KEYS = {
    "objectives", "rules", "workers", "num_seeds", "seed_base", "time_budget",
    "max_evals", "modes", "initial_points", "duration_scale", "out_dir", "jobs",
}


def spec_from_dict(payload, out_dir=None, jobs=None):
    unknown = set(payload) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(payload)
    for key in ("objectives", "rules", "workers", "modes"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if out_dir is not None:
        kwargs["out_dir"] = out_dir
    if jobs is not None:
        kwargs["jobs"] = jobs
    return ExperimentSpec(**kwargs)


def parse_config(path, out_dir=None, jobs=None):
    """Load an ExperimentSpec from a JSON config file."""
    import json

    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: malformed config (line {err.lineno}): {err.msg}")
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    try:
        return spec_from_dict(payload, out_dir=out_dir, jobs=jobs)
    except (TypeError, ValueError) as err:
        raise ValueError(f"{path}: {err}")


@dataclass
class ExecutionReport:
    manifest_path: Path
    statuses: list = field(default_factory=list)

    @property
    def ok(self):
        return all(status == "ok" for _, status in self.statuses)


def _execute_one(args):
    cfg_dict, mode, out_path = args
    cfg = RunConfig(**cfg_dict)
    trace = run_seq(cfg) if mode == "seq" else run_async(cfg)
    storage.write_trace(trace, out_path)
    if trace.aborted:
        return f"failed: {trace.abort_reason}"
    return "ok"


def execute(spec):
    """Run every config in the spec, writing traces and a manifest.

    Individual run failures are recorded and the batch continues; an
    interrupted batch leaves the remaining runs marked incomplete.
    """
    out_dir = Path(spec.out_dir)
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    expanded = spec.expand()

    entries = []
    for cfg, mode in expanded:
        filename = storage.trace_filename(cfg.objective, cfg.rule, cfg.q, cfg.seed, mode)
        entries.append(
            {
                "file": f"runs/{filename}",
                "objective": cfg.objective,
                "rule": cfg.rule,
                "q": cfg.q,
                "seed": cfg.seed,
                "mode": mode,
                "status": "incomplete",
            }
        )

    report = ExecutionReport(manifest_path=out_dir / "manifest.json")
    jobs = [
        (cfg.to_dict(), mode, runs_dir / Path(entry["file"]).name)
        for (cfg, mode), entry in zip(expanded, entries)
    ]
    try:
        if spec.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
                futures = {pool.submit(_execute_one, job): i for i, job in enumerate(jobs)}
                for future in as_completed(futures):
                    i = futures[future]
                    try:
                        entries[i]["status"] = future.result()
                    except Exception as err:  # single-run failure: batch continues
                        entries[i]["status"] = f"failed: {err}"
        else:
            for entry, job in zip(entries, jobs):
                try:
                    entry["status"] = _execute_one(job)
                except Exception as err:
                    entry["status"] = f"failed: {err}"
    finally:
        # an interrupted batch leaves later runs marked incomplete
        storage.write_manifest(report.manifest_path, spec.to_dict(), entries)
    report.statuses = [(entry["file"], entry["status"]) for entry in entries]
    return report


# ---------------------------------------------------------------------------
# Analysis tables


def _group_traces(out_dir):
    out_dir = Path(out_dir)
    manifest = storage.read_manifest(out_dir / "manifest.json")
    groups = {}
    for entry in manifest["runs"]:
        if entry["status"] != "ok":
            continue
        key = (entry["objective"], entry["rule"], entry["q"], entry["mode"])
        trace = storage.load_trace(out_dir / entry["file"])
        groups.setdefault(key, []).append((entry["seed"], trace))
    for key in groups:
        groups[key].sort(key=lambda pair: pair[0])
    return manifest, groups


def _regret_steps(trace):
    f_star = trace.meta["f_star"]
    times = trace.column("sim_time")
    gaps = np.abs(f_star - trace.column("incumbent"))
    values = np.log(np.maximum(gaps, REGRET_FLOOR))
    initial_gap = abs(f_star - trace.meta["initial"]["incumbent"])
    initial = np.log(max(initial_gap, REGRET_FLOOR))
    return times, values, initial


def _quartile_rows(stack):
    """nan-aware (median, q1, q3) rows per column of a ragged stack."""
    med = np.nanmedian(stack, axis=0)
    q1 = np.nanpercentile(stack, 25, axis=0)
    q3 = np.nanpercentile(stack, 75, axis=0)
    return med, q1, q3


def analyze(out_dir, pairs=None, analysis_dir=None):
    """Build the summary tables from a directory of traces.

    Emits regret (time grid), distance and lengthscale (query index)
    tables with median/IQR per rule, plus win-rate and Mann-Whitney U
    matrices over final log regrets in the row-vs-column layout.
    """
    out_dir = Path(out_dir)
    analysis_dir = Path(analysis_dir) if analysis_dir else out_dir / "analysis"
    _, groups = _group_traces(out_dir)

    regret_rows = []
    distance_rows = []
    lengthscale_rows = []
    finals = {}

    for (objective, rule, q, mode), seeded in sorted(groups.items()):
        traces = [trace for _, trace in seeded]
        horizon = max(
            (t.meta["config"]["time_budget"] or (t.column("sim_time")[-1] if t.num_records else 0.0))
            for t in traces
        )
        grid = time_grid(horizon)
        curves = np.vstack(
            [_step_curve(trace, grid) for trace in traces]
        )
        med, q1, q3 = _quartile_rows(curves)
        for t, m, a, b in zip(grid, med, q1, q3):
            regret_rows.append([objective, rule, mode, q, t, m, a, b])

        max_n = max(t.num_records for t in traces)
        if max_n:
            deltas = np.full((len(traces), max_n), np.nan)
            mls = np.full((len(traces), max_n), np.nan)
            dls = np.full((len(traces), max_n), np.nan)
            for i, t in enumerate(traces):
                deltas[i, : t.num_records] = t.column("delta")
                mls[i, : t.num_records] = t.column("mean_lengthscale")
                dls[i, : t.num_records] = t.column("delta_lengthscale")
            import warnings as _warnings

            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore", RuntimeWarning)  # all-nan slices
                dmed, dq1, dq3 = _quartile_rows(deltas)
                lmed, lq1, lq3 = _quartile_rows(mls)
                cmed, cq1, cq3 = _quartile_rows(dls)
            for i in range(max_n):
                distance_rows.append(
                    [objective, rule, mode, q, i + 1, dmed[i], dq1[i], dq3[i]]
                )
                lengthscale_rows.append(
                    [objective, rule, mode, q, i + 1,
                     lmed[i], lq1[i], lq3[i], cmed[i], cq1[i], cq3[i]]
                )

        finals[(objective, rule, q, mode)] = np.array(
            [t.final_log_regret(REGRET_FLOOR) for t in traces]
        )

    storage.write_table(
        analysis_dir / "regret.csv",
        storage.ANALYSIS_SCHEMAS["regret"],
        ["objective", "rule", "mode", "q", "time", "median", "q1", "q3"],
        regret_rows,
    )
    storage.write_table(
        analysis_dir / "distance.csv",
        storage.ANALYSIS_SCHEMAS["distance"],
        ["objective", "rule", "mode", "q", "query_index", "median", "q1", "q3"],
        distance_rows,
    )
    storage.write_table(
        analysis_dir / "lengthscale.csv",
        storage.ANALYSIS_SCHEMAS["lengthscale"],
        ["objective", "rule", "mode", "q", "query_index",
         "mean_ls_median", "mean_ls_q1", "mean_ls_q3",
         "delta_ls_median", "delta_ls_q1", "delta_ls_q3"],
        lengthscale_rows,
    )

    winrate_rows = []
    mwu_rows = []
    async_groups = sorted({k for k in finals if k[3] == "async"})
    by_obj_q = {}
    for objective, rule, q, _mode in async_groups:
        by_obj_q.setdefault((objective, q), []).append(rule)
    skipped = []
    for (objective, q), rules in sorted(by_obj_q.items()):
        wanted = pairs if pairs is not None else [
            (a, b) for a in rules for b in rules if a != b
        ]
        for rule_a, rule_b in wanted:
            key_a = (objective, rule_a, q, "async")
            key_b = (objective, rule_b, q, "async")
            if key_a not in finals or key_b not in finals:
                skipped.append((objective, q, rule_a, rule_b))
                continue
            a, b = finals[key_a], finals[key_b]
            if len(a) != len(b):
                skipped.append((objective, q, rule_a, rule_b))
                continue
            winrate_rows.append([objective, q, rule_a, rule_b, win_rate(a, b)])
            mwu_rows.append([objective, q, rule_a, rule_b, mann_whitney_u(a, b)])

    storage.write_table(
        analysis_dir / "winrate.csv",
        storage.ANALYSIS_SCHEMAS["winrate"],
        ["objective", "q", "row_rule", "col_rule", "win_rate"],
        winrate_rows,
    )
    storage.write_table(
        analysis_dir / "mwu.csv",
        storage.ANALYSIS_SCHEMAS["mwu"],
        ["objective", "q", "row_rule", "col_rule", "p_value"],
        mwu_rows,
    )
    return analysis_dir, skipped


def _step_curve(trace, grid):
    times, values, initial = _regret_steps(trace)
    return step_interpolate(times, values, initial, grid)
