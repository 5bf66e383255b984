"""The experiments: center distribution, diffuse sweep, circular sweep, Bayes walk-through.

Each runner returns a :class:`Table` (ordered columns, one dict per row) plus
whatever summary values the experiment defines. Sweeps run their independent
solves on a thread pool capped by the ``OPSE_THREADS`` environment variable;
rows are always assembled in sweep order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..acoustic_cov import CovarianceSpec, mixture_cov, montecarlo_cov
from ..circular import AngleMeasurement, CircularDistribution, bayes_update, fwhm_to_ell
from ..errors import InvalidArgument, InvalidScenario
from ..normalize import AXIAL_FWHM, POWER_FWHM_FLOOR, quotient_power
from ..opse import PanningProblem, feasibility, rayleigh_max, solve, solve_relaxed
from ..speaker_field import Layout, ParametricDirectivity, log_frequency_grid
from .layouts import builtin_layout, layout_from_spec, load_layout

__all__ = [
    "Table",
    "ScenarioConfig",
    "worker_count",
    "run_center_distribution",
    "run_diffuse_sweep",
    "run_circular_sweep",
    "run_bayes_walkthrough",
    "DEFAULT_MEASUREMENTS",
]

#: (measured angle, FWHM) in degrees for the calibration walk-through.
DEFAULT_MEASUREMENTS = ((-60.0, 90.0), (75.0, 45.0), (90.0, 30.0))
PRIOR_FWHM_DEG = 90.22


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return [r[name] for r in self.rows]

    def __len__(self):
        return len(self.rows)


@dataclass
class ScenarioConfig:
    """Knobs shared by the experiment runners; unset fields take per-experiment defaults."""

    layout: object = None
    steer: tuple | None = None          # (start, stop, step) in degrees
    rhos: tuple | None = None           # (start, stop, step)
    alphas: tuple | None = None         # (start, stop, step)
    cov: str | None = None              # anechoic | diffuse | mixture
    alpha: float = 1.0
    kr: float = math.inf
    rho: float | None = None
    tau: float | None = None
    power_mode: str | None = None
    mc_samples: int = 0
    seed: int = 0
    measurements: tuple = DEFAULT_MEASUREMENTS
    grid_points: int = 96

    @classmethod
    def from_mapping(cls, data):
        if not isinstance(data, dict):
            raise InvalidScenario("scenario config must be an object")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise InvalidScenario(f"unknown scenario field(s): {sorted(extra)}")
        kw = dict(data)
        for key in ("steer", "rhos", "alphas"):
            if kw.get(key) is not None:
                kw[key] = tuple(float(v) for v in kw[key])
        if "measurements" in kw:
            kw["measurements"] = tuple(tuple(float(v) for v in m) for m in kw["measurements"])
        if "kr" in kw and isinstance(kw["kr"], str):
            kw["kr"] = float(kw["kr"])
        return cls(**kw)


def worker_count():
    env = os.environ.get("OPSE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidArgument(f"OPSE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidArgument("OPSE_THREADS must be >= 1")
        return n
    return min(8, os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _sweep(rng, what):
    start, stop, step = rng
    if not step > 0:
        raise InvalidScenario(f"{what} step must be positive")
    if stop < start:
        raise InvalidScenario(f"{what} stop must not precede start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _resolve_layout(layout, default):
    if layout is None:
        return default, builtin_layout(default)
    if isinstance(layout, Layout):
        return "custom", layout
    if isinstance(layout, str):
        return layout, load_layout(layout)
    return "custom", layout_from_spec(layout)


def _unit(deg):
    t = math.radians(deg)
    return np.array([math.cos(t), math.sin(t)])


def _gain_columns(names):
    return [f"x_{n}" for n in names]


def _solution_row(sol, names):
    row = {f"x_{n}": float(v) for n, v in zip(names, sol.x)}
    row.update(sensitivity=sol.sensitivity, efficiency_electric=sol.efficiency_electric,
               efficiency_acoustic=sol.efficiency_acoustic, power=sol.power)
    return row


def _check_mode(mode):
    if mode not in ("equality", "inequality"):
        raise InvalidScenario(f"power mode must be 'equality' or 'inequality', got {mode!r}")
    return mode


def run_center_distribution(config=None):
    """Center content spread across ITU 5.0 as the power target grows.

    Anechoic covariance ``1 1^T``, headroom 1, steering to the front. Regimes:
    center only up to ``rho = 1``, center plus a growing L/R pair up to
    ``rho = 9``, then (equality mode) the surrounds engage up to ``rho = 25``.
    """
    cfg = config or ScenarioConfig()
    name, layout = _resolve_layout(cfg.layout, "itu_5_0")
    if cfg.cov not in (None, "anechoic"):
        raise InvalidScenario("the center-distribution experiment uses the anechoic covariance")
    mode = _check_mode(cfg.power_mode or "equality")
    tau = 1.0 if cfg.tau is None else cfg.tau
    rhos = _sweep(cfg.rhos or (0.25, 25.0, 0.25), "rho")
    if rhos[0] <= 0:
        raise InvalidScenario("power targets must be positive")
    names = layout.names
    V = layout.directions
    K = np.ones((len(layout), len(layout)))
    s = _unit(0.0)

    def one(rho):
        p = PanningProblem(V, s, K, rho, tau, mode)
        sol = solve(p)
        row = {"rho": float(rho), "status": sol.status, "lambda": sol.lam}
        row.update(_solution_row(sol, names))
        return row

    cols = ["rho"] + _gain_columns(names) + ["lambda", "sensitivity", "efficiency_electric",
                                            "efficiency_acoustic", "power", "status"]
    return Table(cols, _map(one, rhos), {"layout": name, "power_mode": mode, "tau": tau})


def _diffuse_K(V, alpha, kr, mc_samples, seed):
    spec = CovarianceSpec.from_kr(V, kr, alpha=alpha)
    if mc_samples and not math.isinf(kr):
        mean, _ = montecarlo_cov(spec, n_samples=mc_samples, seed=seed)
        Kbar = 0.5 * (mean.real + mean.real.T)
        np.fill_diagonal(Kbar, 1.0)
        return (1 - alpha) * np.ones_like(Kbar) + alpha * Kbar
    return mixture_cov(spec)


def run_diffuse_sweep(config=None, bisect_tol=1e-7):
    """Mixture sweep ``alpha in [0, 1]`` for ITU 3.0 steering to the center speaker.

    ``rho = 1`` in equality mode and headroom 10. The returned table carries the
    activation threshold (first ``alpha`` where the L/R gains leave zero,
    located by bisection) in ``meta["alpha_threshold"]``.
    """
    cfg = config or ScenarioConfig()
    name, layout = _resolve_layout(cfg.layout, "itu_3_0")
    mode = _check_mode(cfg.power_mode or "equality")
    rho = 1.0 if cfg.rho is None else cfg.rho
    tau = 10.0 if cfg.tau is None else cfg.tau
    alphas = _sweep(cfg.alphas or (0.0, 1.0, 0.01), "alpha")
    if alphas[0] < 0 or alphas[-1] > 1 + 1e-12:
        raise InvalidScenario("alpha must lie in [0, 1]")
    alphas = [min(a, 1.0) for a in alphas]
    names = layout.names
    V = layout.directions
    s = _unit(0.0)
    c = V.T @ s
    front = int(np.argmax(c))

    def one(alpha):
        K = _diffuse_K(V, alpha, cfg.kr, cfg.mc_samples, cfg.seed)
        sol = solve(PanningProblem(V, s, K, rho, tau, mode))
        rmax, _ = rayleigh_max(V, K)
        row = {"alpha": float(alpha), "status": sol.status}
        row.update(_solution_row(sol, names))
        row["rayleigh_max"] = rmax
        row["rayleigh_gap"] = rmax - sol.efficiency_acoustic if math.isfinite(rmax) else math.inf
        return row

    rows = _map(one, alphas)

    def side_active(alpha):
        K = _diffuse_K(V, alpha, cfg.kr, cfg.mc_samples, cfg.seed)
        x = solve(PanningProblem(V, s, K, rho, tau, mode)).x
        others = np.delete(x, front)
        return others.size > 0 and others.max() > 1e-9 * max(x.max(), 1e-300)

    threshold = None
    if side_active(1.0) and not side_active(0.0):
        lo, hi = 0.0, 1.0
        while hi - lo > bisect_tol:
            mid = 0.5 * (lo + hi)
            if side_active(mid):
                hi = mid
            else:
                lo = mid
        threshold = hi
    cols = ["alpha"] + _gain_columns(names) + ["sensitivity", "efficiency_electric",
                                              "efficiency_acoustic", "power", "rayleigh_max",
                                              "rayleigh_gap", "status"]
    meta = {"layout": name, "alpha_threshold": threshold, "rho": rho, "tau": tau,
            "power_mode": mode}
    return Table(cols, rows, meta)


def _sweep_K(cov, n, V, alpha, kr):
    if cov == "anechoic":
        return np.ones((n, n))
    if cov == "diffuse":
        return np.eye(n)
    if cov == "mixture":
        return mixture_cov(CovarianceSpec.from_kr(V, kr, alpha=alpha))
    raise InvalidScenario(f"covariance must be anechoic, diffuse or mixture, got {cov!r}")


def run_circular_sweep(config=None):
    """Maximum sensitivity versus steering azimuth for one layout and covariance.

    Infeasible directions fall back to the relaxed program and are flagged.
    Default sweep 0..180 degrees in 1-degree steps, ``rho = 1``, headroom 10.
    """
    cfg = config or ScenarioConfig()
    name, layout = _resolve_layout(cfg.layout, "pentagon")
    cov = cfg.cov or "anechoic"
    mode = _check_mode(cfg.power_mode or "inequality")
    rho = 1.0 if cfg.rho is None else cfg.rho
    tau = 10.0 if cfg.tau is None else cfg.tau
    thetas = _sweep(cfg.steer or (0.0, 180.0, 1.0), "steering")
    names = layout.names
    V = layout.directions
    K = _sweep_K(cov, len(layout), V, cfg.alpha, cfg.kr)

    def one(theta):
        s = _unit(theta)
        p = PanningProblem(V, s, K, rho, tau, mode)
        feasible = feasibility(V, s)
        sol = solve(p) if feasible else solve_relaxed(p)
        row = {"theta_deg": float(theta), "feasible": bool(feasible), "status": sol.status,
               "active": ";".join(names[i] for i in sol.active())}
        row.update(_solution_row(sol, names))
        return row

    cols = ["theta_deg", "feasible", "sensitivity", "active"] + _gain_columns(names) + [
        "efficiency_electric", "efficiency_acoustic", "power", "status"]
    return Table(cols, _map(one, thetas), {"layout": name, "cov": cov, "rho": rho, "tau": tau})


def run_bayes_walkthrough(config=None, model=None):
    """Sequential calibration of one loudspeaker's normalization angle.

    Starts from the prior (0 deg, FWHM 90.22 deg) and folds in the configured
    measurements. After each step the power quotient is recomputed with the
    posterior as listener window, widened to FWHM 45 deg where needed.

    Returns ``(steps, curves)``: a per-step table and a per-frequency table of
    quotient magnitudes (``q_0`` uses the prior).
    """
    cfg = config or ScenarioConfig()
    model = ParametricDirectivity() if model is None else model
    grid = log_frequency_grid(cfg.grid_points)
    axial = CircularDistribution(0.0, fwhm_to_ell(AXIAL_FWHM))
    post = CircularDistribution.from_degrees(0.0, PRIOR_FWHM_DEG)
    floor_ell = fwhm_to_ell(POWER_FWHM_FLOOR)

    def quotient(window):
        return np.asarray(quotient_power(model, axial, window, grid))

    steps = []
    curves = {"q_0": quotient(post)}

    def step_row(t, prior, meas, posterior):
        used = max(posterior.ell, floor_ell)
        row = {"step": t,
               "prior_mu_deg": math.degrees(prior.mu) if prior else math.nan,
               "prior_fwhm_deg": math.degrees(prior.fwhm) if prior else math.nan,
               "meas_theta_deg": math.degrees(meas.theta) if meas else math.nan,
               "meas_fwhm_deg": math.degrees(CircularDistribution(0, meas.ell).fwhm) if meas else math.nan,
               "post_mu_deg": math.degrees(posterior.mu),
               "post_ell": posterior.ell,
               "post_fwhm_deg": math.degrees(posterior.fwhm),
               "window_fwhm_deg": math.degrees(CircularDistribution(0, used).fwhm),
               "floor_applied": bool(posterior.ell < floor_ell)}
        return row

    steps.append(step_row(0, None, None, post))
    for t, (theta_deg, fwhm_deg) in enumerate(cfg.measurements, start=1):
        meas = AngleMeasurement.from_degrees(theta_deg, fwhm_deg)
        prior = post
        post = bayes_update(prior, meas)
        steps.append(step_row(t, prior, meas, post))
        curves[f"q_{t}"] = quotient(post)
    step_cols = list(steps[0])
    curve_cols = ["freq_hz"] + list(curves)
    curve_rows = [dict({"freq_hz": float(f)}, **{k: float(v[i]) for k, v in curves.items()})
                  for i, f in enumerate(grid)]
    return Table(step_cols, steps), Table(curve_cols, curve_rows)
