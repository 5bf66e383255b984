"""``panorm`` command line.

Subcommands print CSV (or JSON for ``solve``) to stdout unless ``--out DIR``
is given, in which case tables are written there and ``--svg``/``--png`` add
figures. Exit status: 0 success, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..acoustic_cov import CovarianceSpec, mixture_cov
from ..circular import CircularDistribution
from ..errors import FitError, PanormError, SolverError
from ..normalize import MODES, DistanceModel, build_normalization
from ..opse import FORMS, PanningProblem, solve, solve_relaxed
from ..speaker_field import (ParametricDirectivity, TabulatedDirectivity,
                             log_frequency_grid, normalization_angle)
from . import report
from .layouts import layout_from_spec, load_layout, load_mapping
from .scenarios import (ScenarioConfig, Table, run_bayes_walkthrough, run_center_distribution,
                        run_circular_sweep, run_diffuse_sweep)

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _float_or_inf(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _range3(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric range {text!r}") from None


def _common(p):
    p.add_argument("--out", type=Path, help="directory for CSV/JSON (and figures)")
    p.add_argument("--svg", action="store_true", help="also write SVG figures to --out")
    p.add_argument("--png", action="store_true", help="also write PNG figures to --out")
    p.add_argument("--seed", type=int, default=0, help="seed for Monte-Carlo estimates")
    p.add_argument("--config", type=Path, help="scenario config (JSON or TOML)")


def build_parser():
    parser = _Parser(prog="panorm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"panorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("center-dist", help="ITU 5.0 center distribution versus power target")
    _common(p)
    p.add_argument("--rhos", type=_range3, help="power targets start:stop:step (0.25:25:0.25)")
    p.add_argument("--power-mode", choices=("equality", "inequality"))
    p.add_argument("--tau", type=float)

    p = sub.add_parser("diffuse-sweep", help="ITU 3.0 covariance-mixture sweep")
    _common(p)
    p.add_argument("--alphas", type=_range3, help="mixture weights start:stop:step (0:1:0.01)")
    p.add_argument("--kr", type=_float_or_inf, default=math.inf,
                   help="kappa * radius of the listening disc (default inf: identity)")
    p.add_argument("--mc-samples", type=int, default=0,
                   help="estimate the disc covariance by Monte-Carlo with this many samples")
    p.add_argument("--power-mode", choices=("equality", "inequality"))
    p.add_argument("--rho", type=float)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("circular-sweep", help="sensitivity versus steering azimuth")
    _common(p)
    p.add_argument("--layout", default="pentagon", help="built-in name or layout file")
    p.add_argument("--cov", choices=("anechoic", "diffuse", "mixture"), default="anechoic")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--kr", type=_float_or_inf, default=math.inf)
    p.add_argument("--steer", type=_range3, help="azimuths start:stop:step (0:180:1)")
    p.add_argument("--power-mode", choices=("equality", "inequality"))
    p.add_argument("--rho", type=float)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("bayes-demo", help="sequential normalization-angle calibration")
    _common(p)
    p.add_argument("--grid-points", type=int, default=96)

    p = sub.add_parser("normalize", help="normalization filters for a layout")
    _common(p)
    p.add_argument("--layout", required=True, help="built-in name or layout file")
    p.add_argument("--directivity", type=Path, help="tabulated directivity CSV")
    p.add_argument("--mode", choices=MODES, default="power")
    p.add_argument("--fwhm", type=float, default=90.22,
                   help="FWHM (deg) of the angle belief around each geometric angle")
    p.add_argument("--dc", type=_float_or_inf, default=1.0, help="critical distance (m)")
    p.add_argument("--gamma", type=float, default=0.0, help="reverberant decay (dB/doubling)")
    p.add_argument("--reference", type=float, help="reference distance D (m); median by default")
    p.add_argument("--order", type=int, nargs=2, default=(8, 8), metavar=("ZEROS", "POLES"))
    p.add_argument("--lawson", type=int, default=0, help="minimax refinement passes")
    p.add_argument("--grid-points", type=int, default=96)
    p.add_argument("--fmin", type=float, default=20.0)
    p.add_argument("--fmax", type=float, default=20000.0)
    p.add_argument("--sample-rate", type=float, default=48000.0)

    p = sub.add_parser("solve", help="one panning problem, printed as JSON")
    _common(p)
    p.add_argument("--problem", type=Path, help="problem file (JSON/TOML)")
    p.add_argument("--layout", default="itu_5_0")
    p.add_argument("--steer", type=float, default=0.0, help="steering azimuth (deg)")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--cov", choices=("anechoic", "diffuse", "mixture"), default="anechoic")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--kr", type=_float_or_inf, default=math.inf)
    p.add_argument("--power-mode", choices=("equality", "inequality"), default="inequality")
    p.add_argument("--form", choices=FORMS, default="nullspace")
    p.add_argument("--fallback", action="store_true",
                   help="solve the relaxed program when the direction is infeasible")
    return parser


def _config(args, **fields):
    cfg = ScenarioConfig()
    if args.config is not None:
        cfg = ScenarioConfig.from_mapping(load_mapping(args.config))
    for key, val in fields.items():
        if val is not None:
            setattr(cfg, key, val)
    cfg.seed = args.seed
    return cfg


def _emit(args, tables, figures=()):
    """Write ``{name: Table}`` to --out or stdout; ``figures`` are (stem, factory)."""
    if args.out is None:
        for i, table in enumerate(tables.values()):
            if i:
                sys.stdout.write("\n")
            sys.stdout.write(report.table_to_csv(table))
        return
    for name, table in tables.items():
        report.write_csv(table, args.out / f"{name}.csv")
    formats = [f for f, on in (("svg", args.svg), ("png", args.png)) if on]
    if formats:
        for stem, factory in figures:
            report.save_figure(factory(), args.out / stem, formats)


def _gain_series(table):
    return [(c[2:], table.column(c)) for c in table.columns if c.startswith("x_")]


def cmd_center_dist(args):
    cfg = _config(args, rhos=args.rhos, power_mode=args.power_mode, tau=args.tau)
    t = run_center_distribution(cfg)
    x = t.column("rho")
    figs = [("center_dist_gains", lambda: report.line_figure(
                x, _gain_series(t), "power target rho", "gain")),
            ("center_dist_sensitivity", lambda: report.line_figure(
                x, [("sensitivity", t.column("sensitivity"))], "power target rho",
                "sensitivity"))]
    _emit(args, {"center_dist": t}, figs)
    return EXIT_OK


def cmd_diffuse_sweep(args):
    cfg = _config(args, alphas=args.alphas, kr=args.kr, mc_samples=args.mc_samples,
                  power_mode=args.power_mode, rho=args.rho, tau=args.tau)
    t = run_diffuse_sweep(cfg)
    thr = t.meta["alpha_threshold"]
    summary = Table(["alpha_threshold"], [{"alpha_threshold": math.nan if thr is None else thr}])
    x = t.column("alpha")
    figs = [("diffuse_sweep_gains", lambda: report.line_figure(
                x, _gain_series(t), "mixture alpha", "gain")),
            ("diffuse_sweep_efficiency", lambda: report.line_figure(
                x, [("acoustic", t.column("efficiency_acoustic")),
                    ("electric", t.column("efficiency_electric"))],
                "mixture alpha", "efficiency"))]
    _emit(args, {"diffuse_sweep": t, "diffuse_threshold": summary}, figs)
    return EXIT_OK


def cmd_circular_sweep(args):
    cfg = _config(args, layout=args.layout, cov=args.cov, alpha=args.alpha, kr=args.kr,
                  steer=args.steer, power_mode=args.power_mode, rho=args.rho, tau=args.tau)
    t = run_circular_sweep(cfg)
    stem = f"circular_{t.meta['layout']}_{t.meta['cov']}"
    figs = [(stem, lambda: report.line_figure(
        t.column("theta_deg"), [("sensitivity", t.column("sensitivity"))],
        "steering azimuth (deg)", "sensitivity", title=f"{t.meta['layout']} ({t.meta['cov']})",
        ylim=(-1.05, 1.05)))]
    _emit(args, {stem: t}, figs)
    return EXIT_OK


def cmd_bayes_demo(args):
    cfg = _config(args, grid_points=args.grid_points)
    steps, curves = run_bayes_walkthrough(cfg)
    f = curves.column("freq_hz")
    series = [(c, list(20 * np.log10(curves.column(c)))) for c in curves.columns[1:]]
    figs = [("bayes_quotients", lambda: report.line_figure(
        f, series, "frequency (Hz)", "quotient (dB)", logx=True))]
    _emit(args, {"bayes_steps": steps, "bayes_quotients": curves}, figs)
    return EXIT_OK


def cmd_normalize(args):
    layout = load_layout(args.layout)
    model = (TabulatedDirectivity.from_csv(args.directivity) if args.directivity
             else ParametricDirectivity())
    grid = log_frequency_grid(args.grid_points, args.fmin, args.fmax)
    dists = [CircularDistribution.from_fwhm(normalization_angle(s), math.radians(args.fwhm))
             for s in layout]
    dm = DistanceModel(d_c=args.dc, gamma=args.gamma, D=args.reference)
    res = build_normalization(layout, model, dists=dists, distance_model=dm, grid=grid,
                              mode=args.mode, order=tuple(args.order),
                              sample_rate=args.sample_rate, lawson=args.lawson)
    G = res.response()
    names = layout.names
    cols = ["freq_hz"]
    for n in names:
        cols += [f"gain_db_{n}", f"phase_rad_{n}", f"headroom_{n}"]
    rows = []
    for k, f in enumerate(grid):
        row = {"freq_hz": float(f)}
        for i, n in enumerate(names):
            row[f"gain_db_{n}"] = float(20 * np.log10(abs(G[i, k])))
            row[f"phase_rad_{n}"] = float(np.angle(G[i, k]))
            row[f"headroom_{n}"] = float(res.headroom[i, k])
        rows.append(row)
    table = Table(cols, rows)
    summary = Table(["speaker", "angle_deg", "fit_residual", "distance_gain", "delay_s",
                     "unstable_poles", "lcm_poles_removed"],
                    [{"speaker": n,
                      "angle_deg": math.degrees(normalization_angle(s)),
                      "fit_residual": float(sp.fit_residual),
                      "distance_gain": float(sp.distance_gain),
                      "delay_s": float(sp.delay),
                      "unstable_poles": sum(k for _, k in sp.factorization.unstable_allpass.factors),
                      "lcm_poles_removed": sum(k for _, k in sp.remainder.factors)}
                     for n, s, sp in zip(names, layout, res.speakers)])
    figs = [("normalize_headroom", lambda: report.line_figure(
        list(grid), [(n, list(20 * np.log10(res.headroom[i]))) for i, n in enumerate(names)],
        "frequency (Hz)", "headroom (dB)", logx=True))]
    _emit(args, {"normalize": table, "normalize_summary": summary}, figs)
    return EXIT_OK


def _problem_from_file(path, defaults):
    data = load_mapping(path)
    if not isinstance(data, dict):
        raise PanormError("problem file must hold an object")
    layout = data.get("layout", defaults.layout)
    layout = load_layout(layout) if isinstance(layout, str) else layout_from_spec(layout)
    V = layout.directions
    return _problem(V, data.get("steer_deg", defaults.steer), data.get("rho", defaults.rho),
                    data.get("tau", defaults.tau), data.get("cov", defaults.cov),
                    data.get("alpha", defaults.alpha), float(data.get("kr", defaults.kr)),
                    data.get("power_mode", defaults.power_mode), data.get("K"))


def _problem(V, steer, rho, tau, cov, alpha, kr, mode, K=None):
    n = V.shape[1]
    if K is not None:
        K = np.asarray(K, dtype=float)
    elif cov == "anechoic":
        K = np.ones((n, n))
    elif cov == "diffuse":
        K = np.eye(n)
    elif cov == "mixture":
        K = mixture_cov(CovarianceSpec.from_kr(V, kr, alpha=alpha))
    else:
        raise PanormError(f"unknown covariance {cov!r}")
    t = math.radians(float(steer))
    return PanningProblem(V, np.array([math.cos(t), math.sin(t)]), K, float(rho), tau, mode)


def cmd_solve(args):
    if args.problem is not None:
        problem = _problem_from_file(args.problem, args)
    else:
        layout = load_layout(args.layout)
        problem = _problem(layout.directions, args.steer, args.rho, args.tau, args.cov,
                           args.alpha, args.kr, args.power_mode)
    sol = solve(problem, form=args.form)
    if sol.status == "infeasible_direction" and args.fallback:
        sol = solve_relaxed(problem)
    text = json.dumps(sol.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "solution.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_SOLVER if sol.status == "inaccurate" else EXIT_OK


COMMANDS = {
    "center-dist": cmd_center_dist,
    "diffuse-sweep": cmd_diffuse_sweep,
    "circular-sweep": cmd_circular_sweep,
    "bayes-demo": cmd_bayes_demo,
    "normalize": cmd_normalize,
    "solve": cmd_solve,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SolverError, FitError) as err:
        print(f"panorm: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (PanormError, ValueError) as err:
        print(f"panorm: error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
