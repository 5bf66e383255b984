"""CSV and figure output for experiment tables."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .style import PNG_METADATA, REPORT_STYLE, SVG_METADATA  # noqa: E402

__all__ = ["format_value", "table_to_csv", "write_csv", "line_figure", "save_figure"]


def format_value(v):
    """Shortest round-trip text for floats; ``true``/``false`` for flags."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    if hasattr(v, "item"):
        return format_value(v.item())
    return str(v)


def table_to_csv(table):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([format_value(row.get(c)) for c in table.columns])
    return buf.getvalue()


def write_csv(table, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(table_to_csv(table))
    return path


def line_figure(x, series, xlabel, ylabel, title=None, logx=False, ylim=None):
    """Figure with one line per ``(label, values)`` in ``series``."""
    with matplotlib.rc_context(REPORT_STYLE):
        fig, ax = plt.subplots()
        for label, y in series:
            ax.plot(x, y, label=label)
        if logx:
            ax.set_xscale("log")
        if ylim is not None:
            ax.set_ylim(*ylim)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(loc="best")
        fig.tight_layout()
    return fig


def save_figure(fig, stem, formats=("svg",)):
    """Write ``stem.<fmt>`` for each format with deterministic metadata."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context(REPORT_STYLE):
        for fmt in formats:
            meta = SVG_METADATA if fmt == "svg" else PNG_METADATA
            path = stem.with_suffix("." + fmt)
            fig.savefig(path, format=fmt, metadata=meta)
            written.append(path)
    plt.close(fig)
    return written
