"""Squared-exponential chordal circular distributions and their conjugate updates.

The density over azimuth is

    f(theta) = exp((cos(theta - mu) - 1) / ell**2) / (2 pi exp(-1/ell**2) I0(1/ell**2))

which is a von Mises density with concentration ``1/ell**2`` written in terms of
the chordal distance ``d = 2 sin((theta - mu)/2)`` (``d**2/2 = 1 - cos``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InvalidArgument

__all__ = [
    "CircularDistribution",
    "AngleMeasurement",
    "wrap_angle",
    "pdf",
    "fwhm_to_ell",
    "ell_to_fwhm",
    "MAX_ELL",
    "interval_mass",
    "product",
    "bayes_update",
]

#: Dispersion reached at FWHM = 2 pi.
MAX_ELL = math.sqrt(2.0 / math.log(2.0))

_SERIES_MIN_ELL = 0.05
_SERIES_MAX_TERMS = 200
_SERIES_RTOL = 1e-12


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]; +-pi both map to +pi."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _check_ell(ell):
    if not (ell > 0) or math.isnan(ell):
        raise InvalidArgument(f"dispersion must be > 0, got {ell!r}")


@dataclass(frozen=True)
class CircularDistribution:
    """Mean azimuth ``mu`` (radians) and dispersion ``ell``.

    ``ell = inf`` is accepted and denotes the uniform distribution; the mean is
    then irrelevant.
    """

    mu: float
    ell: float

    def __post_init__(self):
        mu = float(self.mu)
        ell = float(self.ell)
        if not math.isfinite(mu):
            raise InvalidArgument(f"mean must be finite, got {self.mu!r}")
        _check_ell(ell)
        object.__setattr__(self, "mu", wrap_angle(mu))
        object.__setattr__(self, "ell", ell)

    @classmethod
    def from_fwhm(cls, mu, fwhm):
        return cls(mu, fwhm_to_ell(fwhm))

    @classmethod
    def from_degrees(cls, mu_deg, fwhm_deg):
        return cls.from_fwhm(math.radians(mu_deg), math.radians(fwhm_deg))

    @property
    def concentration(self):
        """Equivalent von Mises concentration ``1/ell**2``."""
        return 1.0 / self.ell**2

    @property
    def fwhm(self):
        return ell_to_fwhm(self.ell)

    def pdf(self, theta):
        return pdf(self, theta)

    def interval_mass(self, a):
        return interval_mass(self, a)


@dataclass(frozen=True)
class AngleMeasurement:
    """A reported normalization angle with its measurement dispersion.

    How a session's confidence interval maps to ``ell`` is left to the caller;
    :meth:`from_fwhm` is the usual way to supply it.
    """

    theta: float
    ell: float

    def __post_init__(self):
        if not math.isfinite(float(self.theta)):
            raise InvalidArgument(f"measured angle must be finite, got {self.theta!r}")
        _check_ell(float(self.ell))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "ell", float(self.ell))

    @classmethod
    def from_fwhm(cls, theta, fwhm):
        return cls(theta, fwhm_to_ell(fwhm))

    @classmethod
    def from_degrees(cls, theta_deg, fwhm_deg):
        return cls.from_fwhm(math.radians(theta_deg), math.radians(fwhm_deg))

    def as_distribution(self):
        return CircularDistribution(self.theta, self.ell)


def _log_norm(ell):
    """log of 2 pi exp(-1/ell^2) I0(1/ell^2)."""
    x = 1.0 / ell**2
    return math.log(2 * math.pi) + math.log(special.i0e(x))


def pdf(dist, theta):
    """Density of ``dist`` at ``theta`` (scalar or array, radians)."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidArgument("theta must be finite")
    x = 1.0 / dist.ell**2
    out = np.exp(x * (np.cos(theta - dist.mu) - 1.0) - _log_norm(dist.ell))
    if out.ndim == 0:
        return float(out)
    return out


def fwhm_to_ell(fwhm):
    """Dispersion whose density falls to half its peak at ``mu +- fwhm/2``."""
    fwhm = float(fwhm)
    if not (0.0 < fwhm <= 2 * math.pi + 1e-12):
        raise InvalidArgument(f"FWHM must lie in (0, 2 pi], got {fwhm!r}")
    fwhm = min(fwhm, 2 * math.pi)
    return 2.0 * math.sin(fwhm / 4.0) / math.sqrt(2.0 * math.log(2.0))


def ell_to_fwhm(ell):
    """Inverse of :func:`fwhm_to_ell`; ``2 pi`` for dispersions at or beyond the limit."""
    _check_ell(float(ell))
    arg = ell * math.sqrt(2.0 * math.log(2.0)) / 2.0
    if arg >= 1.0:
        return 2 * math.pi
    return 4.0 * math.asin(arg)


def _cos_power_integrals(a, n_max):
    """C_n = int_{-a}^{a} cos^n(t) dt for n = 0..n_max via the reduction formula."""
    c = np.empty(n_max + 1)
    ca, sa = math.cos(a), math.sin(a)
    c[0] = 2.0 * a
    if n_max >= 1:
        c[1] = 2.0 * sa
    for n in range(2, n_max + 1):
        c[n] = 2.0 * ca ** (n - 1) * sa / n + (n - 1) / n * c[n - 2]
    return c


def _mass_series(ell, a):
    x = 1.0 / ell**2
    c = _cos_power_integrals(a, _SERIES_MAX_TERMS)
    term_scale = math.exp(-x)  # x^n e^{-x} / n!, built recursively
    total = term_scale * c[0]
    for n in range(1, _SERIES_MAX_TERMS + 1):
        term_scale *= x / n
        term = term_scale * c[n]
        total += term
        if n > x and abs(term) < _SERIES_RTOL * abs(total):
            return total / (2 * math.pi * special.i0e(x))
    return None


def _mass_quadrature(ell, a):
    dist = CircularDistribution(0.0, ell)
    width = min(a, 40.0 * ell)
    val, _ = integrate.quad(lambda t: pdf(dist, t), -width, width,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def interval_mass(dist, a):
    """Probability that ``|theta - mu| <= a`` for ``0 <= a <= pi``.

    Uses the cosine-power series of the unnormalized density and falls back to
    adaptive quadrature for concentrated distributions (``ell < 0.05``) or when
    the series does not settle within 200 terms.
    """
    a = float(a)
    if not (0.0 <= a <= math.pi):
        raise InvalidArgument(f"half-width must lie in [0, pi], got {a!r}")
    if a == math.pi:
        return 1.0
    if a == 0.0:
        return 0.0
    if math.isinf(dist.ell):
        return a / math.pi
    mass = None
    if dist.ell >= _SERIES_MIN_ELL:
        mass = _mass_series(dist.ell, a)
    if mass is None:
        mass = _mass_quadrature(dist.ell, a)
    return min(max(mass, 0.0), 1.0)


def product(a, b):
    """Normalized product of two circular densities, itself circular.

    Mean is the direction of the concentration-weighted resultant
    ``e^{j mu_a}/ell_a^2 + e^{j mu_b}/ell_b^2``; the squared dispersion is
    ``ell_a^2 ell_b^2 / sqrt(ell_a^4 + 2 cos(mu_a - mu_b) ell_a^2 ell_b^2 + ell_b^4)``,
    i.e. the reciprocal length of that resultant.
    """
    ka, kb = a.concentration, b.concentration
    cx = ka * math.cos(a.mu) + kb * math.cos(b.mu)
    cy = ka * math.sin(a.mu) + kb * math.sin(b.mu)
    k = math.hypot(cx, cy)
    mu = math.atan2(cy, cx)
    ell = math.inf if k == 0.0 else 1.0 / math.sqrt(k)
    return CircularDistribution(mu, ell)


def bayes_update(prior, meas):
    """Posterior over the normalization angle after one measurement."""
    return product(prior, meas.as_distribution())
