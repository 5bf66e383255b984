"""Matplotlib settings for report figures.

Kept as a plain rc dictionary so figures can be rendered without touching the
global state: ``with matplotlib.rc_context(REPORT_STYLE): ...``. The SVG hash
salt makes element ids stable, which together with a blank ``Date`` keeps the
written SVG byte-identical across runs.
"""

REPORT_STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9.0,
    "font.family": "DejaVu Sans",
    "axes.titlesize": 10.0,
    "axes.labelsize": 9.0,
    "axes.grid": True,
    "grid.color": "#DDDDDD",
    "grid.linewidth": 0.6,
    "axes.edgecolor": "#888888",
    "axes.linewidth": 0.8,
    "axes.prop_cycle": "cycler('color', ['#1b6ca8', '#d1495b', '#66a182', '#edae49', "
                       "'#6b4e71', '#00798c', '#8d96a3', '#2e4057'])",
    "lines.linewidth": 1.4,
    "legend.fontsize": 8.0,
    "legend.frameon": False,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "svg.fonttype": "none",
    "svg.hashsalt": "panorm-report",
    "path.simplify": False,
}

SVG_METADATA = {"Date": None, "Creator": None}
PNG_METADATA = {"Software": None}
