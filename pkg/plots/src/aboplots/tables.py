"""Readers for the delimiter-separated analysis tables.

The tables carry a versioned schema comment on their first line; the
expected versions are pinned here and a mismatch is a hard error rather
than a best-effort parse.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXPECTED_SCHEMAS = {
    "regret": "asyncbo-analysis-regret/1",
    "distance": "asyncbo-analysis-distance/1",
    "lengthscale": "asyncbo-analysis-lengthscale/1",
}


class SchemaMismatch(ValueError):
    pass


@dataclass
class AnalysisTable:
    schema: str
    columns: list
    rows: list  # list of dicts, strings preserved

    def unique(self, column):
        seen = []
        for row in self.rows:
            if row[column] not in seen:
                seen.append(row[column])
        return seen

    def select(self, **filters):
        out = [
            row
            for row in self.rows
            if all(row[key] == value for key, value in filters.items())
        ]
        return out

    @staticmethod
    def floats(rows, column):
        return np.array([float(row[column]) for row in rows])


def read_analysis_table(path, kind):
    if kind not in EXPECTED_SCHEMAS:
        raise ValueError(f"unknown table kind {kind!r}")
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise SchemaMismatch(f"{path} has no schema header")
    schema = lines[0][2:].strip()
    if schema != EXPECTED_SCHEMAS[kind]:
        raise SchemaMismatch(
            f"{path}: expected {EXPECTED_SCHEMAS[kind]}, found {schema}"
        )
    columns = lines[1].split(",")
    rows = [dict(zip(columns, line.split(","))) for line in lines[2:] if line]
    return AnalysisTable(schema=schema, columns=columns, rows=rows)
