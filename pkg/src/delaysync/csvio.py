"""Deterministic CSV emission shared by every experiment artifact."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DelaySyncError


class OutputError(DelaySyncError, OSError):
    """Raised when an artifact cannot be written."""


def format_value(value, precision: int = 6) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == int(v) and abs(v) < 10**precision:
            return str(int(v))
        return f"{v:.{precision}g}"
    if value is None:
        return ""
    return str(value)


def emit_csv(
    rows: Iterable[Sequence], schema: Sequence[str], path: str | Path, precision: int = 6
) -> Path:
    """Write ``rows`` under a header exactly equal to ``schema``.

    Floats use ``precision`` significant digits; every line ends with a
    newline.  Rows whose width differs from the schema are rejected.
    """
    path = Path(path)
    lines = [",".join(schema)]
    width = len(schema)
    for row in rows:
        row = tuple(row)
        if len(row) != width:
            raise ValueError(f"row has {len(row)} fields, schema has {width}: {row!r}")
        lines.append(",".join(format_value(v, precision) for v in row))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def histogram_rows(values, bin_width: float, lo: float | None = None, hi: float | None = None):
    """``(bin_low, bin_high, count)`` rows on a fixed grid of ``bin_width``."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if lo is None:
        lo = math.floor(values.min() / bin_width) * bin_width if len(values) else 0.0
    if hi is None:
        hi = (math.floor(values.max() / bin_width) + 1) * bin_width if len(values) else bin_width
    n_bins = max(1, int(round((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)]


HISTOGRAM_SCHEMA = ("bin_low_ms", "bin_high_ms", "count")
