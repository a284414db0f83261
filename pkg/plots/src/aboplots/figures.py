"""Paper-style figures from analysis tables.

Three figure kinds: median/IQR log-regret against simulated time,
query-distance panels against query index (asynchronous distances plus
the sequential baseline when present), and lengthscale trajectories.
Rendering depends only on the table contents, so re-rendering the same
input reproduces identical plotted data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .tables import read_analysis_table

FIGURE_KINDS = ("regret", "distance", "lengthscale")

# One fixed color per rule so every figure uses the same mapping.
RULE_COLORS = {
    "ucb": "#1f77b4",
    "logei": "#ff7f0e",
    "random": "#7f7f7f",
    "ts": "#2ca02c",
    "kb-ucb": "#d62728",
    "kb-logei": "#9467bd",
    "e-logei": "#8c564b",
    "lp-ucb": "#e377c2",
    "llp-ucb": "#bcbd22",
    "aegis": "#17becf",
}
_FALLBACK_COLORS = ("#aec7e8", "#ffbb78", "#98df8a", "#ff9896")


def rule_color(rule):
    if rule in RULE_COLORS:
        return RULE_COLORS[rule]
    return _FALLBACK_COLORS[hash(rule) % len(_FALLBACK_COLORS)]


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    table_path: str
    output_path: str
    rules: tuple = field(default_factory=tuple)  # empty tuple = all rules

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"kind must be one of {FIGURE_KINDS}, got {self.kind!r}")


def _pick_rules(table, requested):
    available = table.unique("rule")
    rules = list(requested) if requested else available
    missing = [r for r in rules if r not in available]
    if missing:
        raise ValueError(f"rules not present in table: {missing}; available: {available}")
    if not rules:
        raise ValueError("table holds no rules to plot")
    return rules


def _band(ax, x, med, lo, hi, rule, linestyle="-"):
    color = rule_color(rule)
    label = rule if linestyle == "-" else f"{rule} (seq)"
    ax.plot(x, med, color=color, linestyle=linestyle, linewidth=1.6, label=label)
    ax.fill_between(x, lo, hi, color=color, alpha=0.18, linewidth=0)


def build_figure(spec):
    """Build the matplotlib figure for a spec (used by render and tests)."""
    table = read_analysis_table(spec.table_path, spec.kind)
    rules = _pick_rules(table, spec.rules)

    if spec.kind == "regret":
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for rule in rules:
            rows = table.select(rule=rule, mode="async")
            if not rows:
                rows = table.select(rule=rule)
            x = table.floats(rows, "time")
            _band(ax, x, table.floats(rows, "median"),
                  table.floats(rows, "q1"), table.floats(rows, "q3"), rule)
        ax.set_xlabel("simulated time")
        ax.set_ylabel("log simple regret")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        return fig

    if spec.kind == "distance":
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for rule in rules:
            for mode, style in (("async", "-"), ("seq", "--")):
                rows = table.select(rule=rule, mode=mode)
                if not rows:
                    continue
                x = table.floats(rows, "query_index")
                med = table.floats(rows, "median")
                keep = np.isfinite(med)
                _band(ax, x[keep], med[keep],
                      table.floats(rows, "q1")[keep],
                      table.floats(rows, "q3")[keep], rule, linestyle=style)
        ax.set_xlabel("query index")
        ax.set_ylabel("distance to busy / recent queries")
        ax.set_yscale("log")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        return fig

    fig, (ax_top, ax_bottom) = plt.subplots(2, 1, figsize=(6.0, 6.0), sharex=True)
    for rule in rules:
        rows = table.select(rule=rule, mode="async")
        if not rows:
            rows = table.select(rule=rule)
        x = table.floats(rows, "query_index")
        med = table.floats(rows, "mean_ls_median")
        _band(ax_top, x, med, table.floats(rows, "mean_ls_q1"),
              table.floats(rows, "mean_ls_q3"), rule)
        dmed = table.floats(rows, "delta_ls_median")
        keep = np.isfinite(dmed)
        _band(ax_bottom, x[keep], dmed[keep],
              table.floats(rows, "delta_ls_q1")[keep],
              table.floats(rows, "delta_ls_q3")[keep], rule)
    ax_top.set_ylabel("mean lengthscale")
    ax_top.set_yscale("log")
    ax_bottom.set_ylabel("mean abs lengthscale change")
    ax_bottom.set_xlabel("query index")
    ax_top.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def render(spec):
    """Render a figure spec to its output path and return the path."""
    fig = build_figure(spec)
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        # strip renderer metadata so identical inputs give identical bytes
        fig.savefig(out, dpi=150, metadata={"Software": None})
    finally:
        plt.close(fig)
    return out
