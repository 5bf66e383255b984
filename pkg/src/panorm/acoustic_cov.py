"""Plane-wave acoustic covariance over a disc listening area.

For plane waves arriving from unit directions ``v_i`` the response at
``r`` is ``exp(-j kappa v_i . r)``. Averaging the cross products over a disc of
radius ``tau_r`` gives the Hansen-Bessel form

    Kbar_ij = |S|^2 * 2 J1(x) / x,   x = |v_i - v_j| kappa tau_r,

which is real, symmetric and positive semidefinite. At the listener point the
covariance is the rank-1 ``|S|^2 * 1 1^T``; :func:`mixture_cov` blends the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidArgument

__all__ = [
    "bessel_j",
    "jinc",
    "CovarianceSpec",
    "planewave_cov",
    "point_cov",
    "mixture_cov",
    "montecarlo_cov",
    "PSD_TOL",
]

PSD_TOL = 1e-10


def bessel_j(order, x):
    """Bessel function of the first kind, order 0 or 1."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("Bessel argument must be finite")
    if order == 0:
        out = special.j0(x)
    elif order == 1:
        out = special.j1(x)
    else:
        raise InvalidArgument("only orders 0 and 1 are provided")
    return float(out) if out.ndim == 0 else out


def jinc(x):
    """``2 J1(x)/x`` with the removable singularity filled (1 at x = 0)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    # 2 J1(x)/x rounds above 1 for tiny x; the series keeps the bound exact
    small = np.abs(x) < 1e-3
    x2 = x[small] ** 2
    out[small] = 1.0 - x2 / 8.0 + x2 * x2 / 192.0
    big = ~small
    out[big] = 2.0 * special.j1(x[big]) / x[big]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CovarianceSpec:
    """Inputs of the covariance mixture at one frequency.

    ``V`` holds one unit direction per column. ``radius`` may be ``inf`` (the
    fully diffuse limit, ``Kbar = |S|^2 I``).
    """

    V: np.ndarray
    alpha: float = 0.0
    radius: float = 0.0
    kappa: float = 0.0
    on_axis_power: float = 1.0

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2 or V.shape[0] != 2 or V.shape[1] < 1:
            raise InvalidArgument("V must be a 2 x N matrix with N >= 1")
        if not np.allclose(np.linalg.norm(V, axis=0), 1.0, atol=1e-10, rtol=0):
            raise InvalidArgument("columns of V must be unit vectors")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument("alpha must lie in [0, 1]")
        if not self.radius >= 0:
            raise InvalidArgument("radius must be >= 0")
        if not self.kappa >= 0 or math.isinf(self.kappa):
            raise InvalidArgument("wavenumber must be finite and >= 0")
        if not self.on_axis_power > 0:
            raise InvalidArgument("on-axis power must be positive")
        object.__setattr__(self, "V", V)

    @classmethod
    def from_kr(cls, V, kr, alpha=1.0, on_axis_power=1.0):
        """Spec from the product ``kappa * tau_r`` alone (radius set to it, kappa 1)."""
        return cls(V, alpha=alpha, radius=kr, kappa=1.0, on_axis_power=on_axis_power)

    @property
    def kr(self):
        if self.kappa == 0.0:
            return 0.0
        return self.kappa * self.radius

    @property
    def n(self):
        return self.V.shape[1]

    def direction_distances(self):
        diff = self.V[:, :, None] - self.V[:, None, :]
        return np.sqrt(np.sum(diff**2, axis=0))


def _clean_psd(K):
    """Symmetrize; clip eigenvalues in [-1e-10, 0) to zero, reject anything lower."""
    K = 0.5 * (K + K.T)
    w, U = np.linalg.eigh(K)
    scale = max(1.0, abs(w).max())
    if w.min() < -PSD_TOL * scale:
        raise InvalidArgument(
            f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
    # values at eigensolver round-off are left alone so exact inputs stay exact
    if w.min() < -64 * np.finfo(float).eps * scale * K.shape[0]:
        w = np.clip(w, 0.0, None)
        K = (U * w) @ U.T
        K = 0.5 * (K + K.T)
    return K


def planewave_cov(spec):
    """Disc-averaged plane-wave covariance ``Kbar`` (N x N)."""
    P = spec.on_axis_power
    kr = spec.kr
    if math.isinf(kr):
        return P * np.eye(spec.n)
    x = spec.direction_distances() * kr
    K = P * jinc(x)
    return _clean_psd(K)


def point_cov(spec):
    """Listener-point covariance ``|S|^2 1 1^T``."""
    return spec.on_axis_power * np.ones((spec.n, spec.n))


def mixture_cov(spec):
    """``K = (1 - alpha) Kpoint + alpha Kbar``."""
    a = spec.alpha
    if a == 0.0:
        return point_cov(spec)
    K = (1.0 - a) * point_cov(spec) + a * planewave_cov(spec)
    return _clean_psd(K)


def montecarlo_cov(spec, n_samples=1_000_000, seed=0, chunk=100_000):
    """Monte-Carlo estimate of ``E[exp(-j kappa (v_i - v_j) . r)]`` over the disc.

    Returns ``(mean, stderr)``; both complex/real N x N arrays scaled by the
    on-axis power. Sampling uses ``radius * sqrt(U)`` and angle ``2 pi U'``
    with a seeded generator.
    """
    if math.isinf(spec.kr):
        raise InvalidArgument("Monte-Carlo estimate needs a finite radius")
    rng = np.random.default_rng(seed)
    n = spec.n
    V = spec.V
    s1 = np.zeros((n, n), dtype=complex)
    s2 = np.zeros((n, n))
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        rad = spec.radius * np.sqrt(rng.random(m))
        ang = 2 * math.pi * rng.random(m)
        pts = np.vstack([rad * np.cos(ang), rad * np.sin(ang)])
        arg = spec.kappa * (V.T @ pts)  # N x m
        c, sn = np.cos(arg), np.sin(arg)
        # p = c - j s:  p_i conj(p_j) = (c_i c_j + s_i s_j) + j (c_i s_j - s_i c_j)
        re = c @ c.T + sn @ sn.T
        im = c @ sn.T - sn @ c.T
        s1 += re + 1j * im
        cc, ss, cs = c * c, sn * sn, c * sn
        s2 += cc @ cc.T + ss @ ss.T + 2.0 * (cs @ cs.T)
        done += m
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean.real**2, 0.0)
    stderr = np.sqrt(var / n_samples)
    P = spec.on_axis_power
    return P * mean, P * stderr
