"""Per-loudspeaker normalization filters toward a common on-axis reference.

Each loudspeaker gets a filter ``G_n`` so that its direct path at the listener
matches the on-axis response of the reference directivity, up to an all-pass
that is common to the whole layout:

    G_n = M_n * Abar_n * (Addot_n / Addot_lcm) * F(r_n, D, d_c) * exp(j kappa (r_n - d))

``M_n`` and ``Abar_n`` are the minimum-phase and stable all-pass parts of a
rational fit to a quotient target, ``Addot_n`` collects its unstable all-pass
factors and ``Addot_lcm`` is their least common multiple over the layout, so
``Addot_n / Addot_lcm`` is stable. ``F`` replaces the inverse-distance factor
with a room-aware power normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import filters
from .circular import CircularDistribution, fwhm_to_ell, wrap_angle
from .errors import (AmbiguousRootError, DegenerateWindowError, FitError,
                     InvalidArgument, NearNullError)
from .filters import (AllPassFactorSet, FilterFactorization, RationalFilter,
                      factorize, fit_rational, lcm_allpass, lcm_remainder)
from .speaker_field import (SPEED_OF_SOUND, Layout, log_frequency_grid,
                            normalization_angle)

__all__ = [
    "windowed_average",
    "quotient_deterministic",
    "quotient_wls",
    "quotient_power",
    "DistanceModel",
    "distance_gain",
    "estimate_delay",
    "NormalizedSpeaker",
    "NormalizationResult",
    "build_normalization",
    "AXIAL_FWHM",
    "POWER_FWHM_FLOOR",
    "MODES",
]

#: FWHM of the axial reference window f_0.
AXIAL_FWHM = math.radians(60.0)
#: Smallest listener-window FWHM used by the power quotient.
POWER_FWHM_FLOOR = math.radians(45.0)
MODES = ("deterministic", "wls", "power")

_NULL_RATIO = 1e-9
_TAIL_WIDTHS = 40.0


def _acoustic(model, nu, theta):
    return np.asarray(model.acoustic(nu, theta), dtype=complex)


def _window_points(model, window, half):
    pts = []
    for seg in getattr(model, "segments", lambda: ())():
        off = wrap_angle(seg - window.mu)
        if -half < off < half:
            pts.append(off)
    return sorted(set(pts)) or None


def windowed_average(model, window, nu, kind="response"):
    """Average of ``S_A`` (``kind="response"``) or ``|S_A|^2`` (``"power"``) under ``window``.

    The integral runs over ``theta = mu + phi`` with ``|phi| <= min(pi, 40 ell)``;
    beyond that the density is below ``exp(-800)`` of its peak. The density is
    integrated alongside and divided out, so a constant directivity averages to
    exactly its value.

    Parameters
    ----------
    model : directivity model
    window : CircularDistribution
    nu : float or array
        Frequencies in Hz.
    kind : {"response", "power"}

    Returns
    -------
    complex or float array shaped like ``nu``
    """
    if kind not in ("response", "power"):
        raise InvalidArgument(f"kind must be 'response' or 'power', got {kind!r}")
    nu_arr = np.atleast_1d(np.asarray(nu, dtype=float))
    half = math.pi if math.isinf(window.ell) else min(math.pi, _TAIL_WIDTHS * window.ell)
    # probe the range once so extrapolation errors surface before quadrature
    _acoustic(model, nu_arr, np.full(nu_arr.shape, window.mu))

    if math.isinf(window.ell):
        def dens(phi):
            return 1.0 / (2 * math.pi)
    else:
        centered = CircularDistribution(0.0, window.ell)

        def dens(phi):
            return centered.pdf(phi)

    def integrand(phi):
        s = _acoustic(model, nu_arr, np.full(nu_arr.shape, window.mu + phi))
        f = dens(phi)
        vals = s if kind == "response" else np.abs(s) ** 2
        return np.concatenate([(f * vals).real, (f * vals).imag, [f]])

    res, _ = integrate.quad_vec(integrand, -half, half, epsabs=0.0, epsrel=1e-11,
                                points=_window_points(model, window, half), limit=400)
    n = nu_arr.size
    mass = res[-1]
    out = (res[:n] + 1j * res[n:2 * n]) / mass
    if kind == "power":
        out = out.real
    if np.ndim(nu) == 0:
        return out[0]
    return out.reshape(np.shape(nu))


def quotient_deterministic(model, theta, nu):
    """``S_A(nu, 0) / S_A(nu, theta)``; the electrical part cancels."""
    nu = np.asarray(nu, dtype=float)
    num = _acoustic(model, nu, np.zeros(nu.shape))
    den = _acoustic(model, nu, np.full(nu.shape, float(theta)))
    if np.any(np.abs(den) < _NULL_RATIO * np.abs(num)):
        raise NearNullError(
            f"directivity is (near) null at {math.degrees(theta):.3f} deg; "
            "the quotient would exceed the gain cap")
    q = num / den
    return complex(q) if q.ndim == 0 else q


def quotient_wls(model, axial_window, listener_window, nu):
    """Weighted least-squares quotient ``Sbar(f0) conj(Sbar(fn)) / Shat(fn)``.

    Minimizes the window-averaged squared error between ``X S_A(theta)`` and the
    axial-window average. Corrects amplitude and phase.
    """
    s0 = windowed_average(model, axial_window, nu, "response")
    sn = windowed_average(model, listener_window, nu, "response")
    pn = windowed_average(model, listener_window, nu, "power")
    if np.any(np.asarray(pn) <= 0):
        raise DegenerateWindowError("listener window carries zero directivity power")
    return s0 * np.conj(sn) / pn


def _clamp_window(window, floor_fwhm):
    floor = fwhm_to_ell(floor_fwhm)
    if window.ell < floor:
        return CircularDistribution(window.mu, floor)
    return window


def quotient_power(model, axial_window, listener_window, nu, fwhm_floor=POWER_FWHM_FLOOR):
    """Zero-phase power quotient ``sqrt(Shat(f0) / Shat(fn))``.

    The listener window is widened to at least ``fwhm_floor`` (45 degrees)
    before averaging, which keeps the correction well conditioned once the
    posterior becomes sharp.
    """
    listener_window = _clamp_window(listener_window, fwhm_floor)
    p0 = windowed_average(model, axial_window, nu, "power")
    pn = windowed_average(model, listener_window, nu, "power")
    if np.any(np.asarray(p0) <= 0) or np.any(np.asarray(pn) <= 0):
        raise DegenerateWindowError("window carries zero directivity power")
    return np.sqrt(p0 / pn)


# -- distance compensation -----------------------------------------------------

@dataclass(frozen=True)
class DistanceModel:
    """Room attenuation: direct path plus a reverberant floor past ``d_c``.

    ``gamma`` is the reverberant decay in dB per distance doubling; ``D`` is the
    reference distance, ``None`` meaning the median loudspeaker distance.
    """

    d_c: float = 1.0
    gamma: float = 0.0
    D: float | None = None

    def __post_init__(self):
        if not self.d_c > 0:
            raise InvalidArgument("critical distance must be positive")
        if not -6.0 <= self.gamma <= 0.0:
            raise InvalidArgument("gamma must lie in [-6, 0] dB")
        if self.D is not None and not self.D > 0:
            raise InvalidArgument("reference distance must be positive")

    @classmethod
    def anechoic(cls, D=None):
        """Pure inverse-distance regime (critical distance at infinity)."""
        return cls(d_c=1e9, gamma=0.0, D=D)

    @property
    def beta(self):
        return 10.0 ** (self.gamma / 10.0)

    def with_reference(self, D):
        return DistanceModel(self.d_c, self.gamma, D)


def distance_gain(model, r, D=None):
    """``F = (r/D) sqrt((d_c^(2b) + D^(2b)) / (d_c^(2b) + r^(2b)))``.

    Normalizes the power received from distance ``r`` to that from ``D``.
    Evaluated in log space so ``d_c = 1e9`` and tiny ``d_c`` stay exact.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise InvalidArgument("distance must be positive")
    D = model.D if D is None else D
    if D is None or not D > 0:
        raise InvalidArgument("a positive reference distance is required")
    tb = 2 * model.beta
    lc = tb * math.log(model.d_c)
    num = np.logaddexp(lc, tb * math.log(D))
    den = np.logaddexp(lc, tb * np.log(r))
    out = (r / D) * np.exp(0.5 * (num - den))
    return float(out) if out.ndim == 0 else out


# -- assembly ------------------------------------------------------------------

def estimate_delay(samples, freqs):
    """Mean group delay (s) over the top octave of ``freqs``.

    The phase is unwrapped between neighbouring samples, so delays whose phase
    advances by more than pi from one grid point to the next alias low.
    """
    samples = np.asarray(samples, dtype=complex)
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size < 2:
        return 0.0
    phase = np.unwrap(np.angle(samples))
    sel = freqs >= freqs.max() / 2.0
    if sel.sum() < 2:
        sel = np.zeros_like(sel)
        sel[-2:] = True
    f, ph = freqs[sel], phase[sel]
    slope = np.polyfit(2 * np.pi * f, ph, 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class NormalizedSpeaker:
    """One loudspeaker's normalization filter in factored form."""

    factorization: FilterFactorization
    remainder: AllPassFactorSet
    distance_gain: float
    delay: float
    fit_residual: float
    target: np.ndarray

    def response(self, nu):
        nu = np.asarray(nu, dtype=float)
        f = self.factorization
        val = f.min_phase.response(nu) * f.stable_allpass.response(nu)
        val = val / self.remainder.response(nu)
        return self.distance_gain * val * np.exp(-2j * np.pi * nu * self.delay)

    __call__ = response


@dataclass(frozen=True)
class NormalizationResult:
    speakers: tuple
    grid: np.ndarray
    common_distance: float
    reference_distance: float
    lcm: AllPassFactorSet
    headroom: np.ndarray
    mode: str
    c: float = SPEED_OF_SOUND

    def response(self, nu=None):
        """N x F matrix of ``G_n`` on ``nu`` (the fitting grid by default)."""
        nu = self.grid if nu is None else np.asarray(nu, dtype=float)
        return np.vstack([s.response(nu) for s in self.speakers])

    def common_allpass(self, nu=None):
        nu = self.grid if nu is None else np.asarray(nu, dtype=float)
        return self.lcm.response(nu)


def _annotate(err, index):
    msg = f"speaker {index}: {err}"
    if isinstance(err, FitError):
        return FitError(msg, residual=err.residual)
    if isinstance(err, AmbiguousRootError):
        return AmbiguousRootError(msg, roots=err.roots)
    return type(err)(msg)


def build_normalization(layout, model, dists=None, distance_model=None, grid=None,
                        mode="power", order=(8, 8), sample_rate=filters.DEFAULT_SAMPLE_RATE,
                        axial_fwhm=AXIAL_FWHM, mean_distances=None, c=SPEED_OF_SOUND,
                        n_iter=20, lawson=0, max_residual=None,
                        match_tol=filters.MATCH_TOL, match_metric="hyperbolic"):
    """Synthesize normalization filters for every loudspeaker of ``layout``.

    Parameters
    ----------
    layout : Layout
    model : directivity model shared by all loudspeakers
    dists : sequence of CircularDistribution, optional
        Belief over each speaker's normalization angle. Required for the
        ``wls`` and ``power`` modes. In ``deterministic`` mode the means are
        used; without ``dists`` the angles toward the origin are taken.
    distance_model : DistanceModel, optional
        Defaults to ``DistanceModel()`` (``d_c = 1 m``, ``gamma = 0``).
    grid : array, optional
        Frequencies in Hz; 96 log-spaced points over 20 Hz - 20 kHz by default.
    mode : {"deterministic", "wls", "power"}
    order : (int, int)
        Rational fit order per speaker.
    mean_distances : sequence of float, optional
        Precomputed mean listener distance per speaker, replacing ``|u_n|``.
    lawson : int
        Minimax refinement passes for the rational fit.
    match_tol, match_metric
        LCM pole matching, see :func:`panorm.filters.lcm_allpass`. Matched
        poles are moved to their cluster centroid, so the hyperbolic metric
        keeps that move from disturbing the phase of poles near the circle.

    Returns
    -------
    NormalizationResult
    """
    if not isinstance(layout, Layout):
        layout = Layout(tuple(layout))
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    n = len(layout)
    grid = log_frequency_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise InvalidArgument("frequency grid must be 1D and strictly increasing")
    if dists is not None:
        dists = list(dists)
        if len(dists) != n:
            raise InvalidArgument("need one angle distribution per loudspeaker")
    elif mode != "deterministic":
        raise InvalidArgument(f"mode {mode!r} needs per-speaker angle distributions")
    if mean_distances is None:
        dist = layout.distances
    else:
        dist = np.asarray(mean_distances, dtype=float).reshape(-1)
        if dist.size != n or np.any(~(dist > 0)):
            raise InvalidArgument("mean distances must be positive, one per speaker")
    dm = DistanceModel() if distance_model is None else distance_model
    D = float(np.median(dist)) if dm.D is None else dm.D
    d = float(dist.max())
    axial = CircularDistribution(0.0, fwhm_to_ell(axial_fwhm))

    fits = []
    for i, spk in enumerate(layout):
        try:
            if mode == "deterministic":
                theta = dists[i].mu if dists is not None else normalization_angle(spk)
                target = quotient_deterministic(model, theta, grid)
            elif mode == "wls":
                target = quotient_wls(model, axial, dists[i], grid)
            else:
                target = quotient_power(model, axial, dists[i], grid).astype(complex)
            target = np.asarray(target, dtype=complex)
            tau = estimate_delay(target, grid)
            if abs(tau) * sample_rate < 1e-6:
                tau = 0.0
            flat = target * np.exp(2j * np.pi * grid * tau)
            filt = fit_rational(flat, grid, order=order, sample_rate=sample_rate,
                                n_iter=n_iter, lawson=lawson, max_residual=max_residual)
            fac = factorize(filt)
        except (FitError, AmbiguousRootError, NearNullError, DegenerateWindowError) as err:
            raise _annotate(err, i) from err
        fits.append((fac, tau, filt.residual, target))

    lcm = lcm_allpass([f[0].unstable_allpass for f in fits], match_tol=match_tol,
                      metric=match_metric)
    speakers = []
    for i, (fac, tau, res, target) in enumerate(fits):
        rem = lcm_remainder(fac.unstable_allpass, lcm, match_tol=match_tol,
                            metric=match_metric)
        gain = distance_gain(dm, float(dist[i]), D)
        delay = (d - float(dist[i])) / c + fac.min_phase.delay + tau
        mp = fac.min_phase
        mp = RationalFilter(mp.gain, mp.zeros, mp.poles, 0.0, mp.sample_rate)
        fac = FilterFactorization(mp, fac.stable_allpass, fac.unstable_allpass)
        speakers.append(NormalizedSpeaker(fac, rem, gain, delay, res, target))
    G = np.vstack([s.response(grid) for s in speakers])
    mag = np.abs(G)
    if np.any(mag == 0) or not np.all(np.isfinite(mag)):
        raise FitError("normalization filter has a zero or non-finite gain", residual=None)
    return NormalizationResult(tuple(speakers), grid, d, D, lcm, 1.0 / mag, mode, c)
