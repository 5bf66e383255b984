"""Digital rational filters: fitting, minimum-phase/all-pass split, LCM all-pass.

Filters are kept in root form

    H(z) = g * prod(1 - q z^-1) / prod(1 - p z^-1) * z^(-delay * fs)

evaluated on the unit circle ``z = exp(j 2 pi nu / fs)``. Roots may sit on
either side of the unit circle; :func:`factorize` reflects the outside ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import AmbiguousRootError, ClusteringError, FitError, InvalidArgument

__all__ = [
    "RationalFilter",
    "AllPassFactorSet",
    "FilterFactorization",
    "fit_rational",
    "factorize",
    "lcm_allpass",
    "lcm_remainder",
    "pole_distance",
    "UNIT_CIRCLE_BAND",
    "MATCH_TOL",
]

UNIT_CIRCLE_BAND = 1e-6
MATCH_TOL = 1e-4
DEFAULT_SAMPLE_RATE = 48000.0


def _zinv(nu, fs):
    nu = np.asarray(nu, dtype=float)
    return np.exp(-2j * np.pi * nu / fs)


def _root_product(roots, zi):
    out = np.ones(np.shape(zi), dtype=complex)
    for r in roots:
        out = out * (1.0 - r * zi)
    return out


def _realify(g, rtol=1e-9):
    g = complex(g)
    if abs(g.imag) <= rtol * max(abs(g), 1e-300):
        return g.real
    return g


@dataclass(frozen=True)
class RationalFilter:
    gain: float
    zeros: tuple = ()
    poles: tuple = ()
    delay: float = 0.0
    sample_rate: float = DEFAULT_SAMPLE_RATE
    residual: float | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "zeros", tuple(complex(z) for z in self.zeros))
        object.__setattr__(self, "poles", tuple(complex(p) for p in self.poles))
        object.__setattr__(self, "gain", _realify(self.gain))
        if not self.sample_rate > 0:
            raise InvalidArgument("sample rate must be positive")

    def response(self, nu):
        zi = _zinv(nu, self.sample_rate)
        num = _root_product(self.zeros, zi)
        den = _root_product(self.poles, zi)
        phase = np.exp(-2j * np.pi * np.asarray(nu, dtype=float) * self.delay)
        return self.gain * num / den * phase

    __call__ = response

    @property
    def order(self):
        return len(self.zeros), len(self.poles)


@dataclass(frozen=True)
class AllPassFactorSet:
    """Causal all-pass ``prod((z^-1 - p*)/(1 - p z^-1))^k`` over unstable poles ``p``."""

    factors: tuple = ()
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        facs = []
        for p, k in self.factors:
            k = int(k)
            if k < 1:
                raise InvalidArgument("all-pass multiplicities must be >= 1")
            facs.append((complex(p), k))
        object.__setattr__(self, "factors", tuple(facs))

    def __len__(self):
        return len(self.factors)

    @property
    def poles(self):
        return tuple(p for p, _ in self.factors)

    def multiplicity(self, p):
        for q, k in self.factors:
            if q == p:
                return k
        return 0

    def response(self, nu, power=1):
        zi = _zinv(nu, self.sample_rate)
        out = np.ones(np.shape(zi), dtype=complex)
        for p, k in self.factors:
            out = out * ((zi - np.conj(p)) / (1.0 - p * zi)) ** (k * power)
        return out

    __call__ = response


@dataclass(frozen=True)
class FilterFactorization:
    min_phase: RationalFilter
    stable_allpass: RationalFilter
    unstable_allpass: AllPassFactorSet

    def response(self, nu):
        return (self.min_phase.response(nu) * self.stable_allpass.response(nu)
                * self.unstable_allpass.response(nu))

    __call__ = response


# -- fitting ------------------------------------------------------------------

def _initial_poles(omega, n):
    units = []
    lo, hi = float(np.min(omega)), float(np.max(omega))
    n_pairs = n // 2
    if n_pairs:
        if n_pairs == 1:
            centers = np.array([math.sqrt(lo * hi)])
        else:
            centers = np.geomspace(lo, hi, n_pairs)
        for w in centers:
            units.append(("c", np.exp(-w / 100.0) * np.exp(1j * w)))
    if n % 2:
        units.append(("r", math.exp(-lo)))
    return units


def _basis(units, z):
    cols = []
    for kind, p in units:
        if kind == "r":
            cols.append(1.0 / (z - p))
        else:
            a, b = 1.0 / (z - p), 1.0 / (z - np.conj(p))
            cols.append(a + b)
            cols.append(1j * a - 1j * b)
    if not cols:
        return np.zeros((z.size, 0), dtype=complex)
    return np.column_stack(cols)


def _realization(units):
    n = sum(1 if k == "r" else 2 for k, _ in units)
    A = np.zeros((n, n))
    bvec = np.zeros(n)
    i = 0
    for kind, p in units:
        if kind == "r":
            A[i, i] = p.real if isinstance(p, complex) else p
            bvec[i] = 1.0
            i += 1
        else:
            A[i, i] = A[i + 1, i + 1] = p.real
            A[i, i + 1] = p.imag
            A[i + 1, i] = -p.imag
            bvec[i] = 2.0
            i += 2
    return A, bvec


def _units_from_roots(roots):
    units = []
    for r in roots:
        if abs(r.imag) <= 1e-10 * max(1.0, abs(r)):
            units.append(("r", float(r.real)))
        elif r.imag > 0:
            units.append(("c", complex(r)))
    return units


def _real_lstsq(M, rhs, w):
    """Real least squares for complex rows weighted by ``w``."""
    Mw = M * w[:, None]
    rw = rhs * w
    A = np.vstack([Mw.real, Mw.imag])
    y = np.concatenate([rw.real, rw.imag])
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    sol, *_ = np.linalg.lstsq(A / scale, y, rcond=None)
    return sol / scale


def _conj_closed(roots):
    out = []
    for r in roots:
        if abs(r.imag) <= 1e-10 * max(1.0, abs(r)):
            out.append(complex(r.real))
        else:
            out.append(complex(r))
    return out


def _finite_zeros(A, bvec, cvec, d):
    n = A.shape[0]
    if n == 0:
        return []
    if d != 0 and abs(d) > 1e-14 * max(1.0, np.abs(cvec).max(initial=0.0)):
        return list(np.linalg.eigvals(A - np.outer(bvec, cvec) / d))
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = bvec
    M[n, :n] = cvec
    N = np.zeros_like(M)
    N[:n, :n] = np.eye(n)
    ev = linalg.eigvals(M, N)
    return [e for e in ev if np.isfinite(e) and abs(e) < 1e8]


def _fit_gain(shape, samples, w):
    """Best real gain for ``gain * shape ~ samples``."""
    num = np.sum(w**2 * (np.conj(shape) * samples)).real
    den = np.sum(w**2 * np.abs(shape) ** 2)
    return num / den if den > 0 else 0.0


def _rel_residual(fit, samples, w):
    den = np.linalg.norm(w * samples)
    return float(np.linalg.norm(w * (fit - samples)) / den) if den > 0 else float("inf")


def _prune(zeros, poles, tol):
    zeros, poles = list(zeros), list(poles)
    changed = True
    while changed and zeros and poles:
        changed = False
        best = None
        for i, z in enumerate(zeros):
            for j, p in enumerate(poles):
                dist = abs(z - p)
                if dist < tol * max(1.0, abs(p)) and (best is None or dist < best[0]):
                    best = (dist, i, j)
        if best is not None:
            zeros.pop(best[1])
            poles.pop(best[2])
            changed = True
    return zeros, poles


def _fit_once(samples, freqs, nz, npole, sample_rate, w, n_iter, prune_tol):
    omega = 2 * np.pi * freqs / sample_rate
    z = np.exp(1j * omega)
    zi = 1.0 / z

    if npole == 0:
        V = zi[:, None] ** np.arange(nz + 1)[None, :]
        b = _real_lstsq(V, samples, w)
        zeros = list(np.roots(b)) if nz > 0 and b[0] != 0 else []
        zeros = _conj_closed(zeros)
        poles = []
        extra_delay = 0
        if nz > 0 and b[0] == 0:
            zeros, extra_delay = [], 0
    else:
        with_d = nz == npole
        units = _initial_poles(omega, npole)
        for _ in range(n_iter):
            phi = _basis(units, z)
            cols = [phi]
            if with_d:
                cols.append(np.ones((z.size, 1)))
            cols.append(-samples[:, None] * phi)
            sol = _real_lstsq(np.hstack(cols), samples, w)
            ctil = sol[-npole:]
            A, bvec = _realization(units)
            new = np.linalg.eigvals(A - np.outer(bvec, ctil))
            units = _units_from_roots(new)
        phi = _basis(units, z)
        cols = [phi]
        if with_d:
            cols.append(np.ones((z.size, 1)))
        sol = _real_lstsq(np.hstack(cols), samples, w)
        cvec = sol[:npole]
        d = sol[npole] if with_d else 0.0
        A, bvec = _realization(units)
        poles = _conj_closed(list(np.linalg.eigvals(A)))
        zeros = _conj_closed(_finite_zeros(A, bvec, cvec, d))
        if not with_d and len(zeros) > nz:
            zeros = sorted(zeros, key=abs)[:nz]
        extra_delay = npole - len(zeros)

    def build(zs, ps):
        shape = _root_product(zs, zi) / _root_product(ps, zi) * zi**extra_delay
        g = _fit_gain(shape, samples, w)
        filt = RationalFilter(g, zs, ps, extra_delay / sample_rate, sample_rate)
        return filt, _rel_residual(filt.response(freqs), samples, w)

    filt, res = build(zeros, poles)
    if prune_tol and zeros and poles:
        pz, pp = _prune(zeros, poles, prune_tol)
        if len(pz) < len(zeros):
            cand, cres = build(pz, pp)
            if cres <= res + 1e-9:
                filt, res = cand, cres
    return filt, res


def fit_rational(samples, freqs, order=(8, 8), sample_rate=DEFAULT_SAMPLE_RATE,
                 weights=None, n_iter=20, max_residual=None, prune_tol=1e-7, lawson=0):
    """Fit a real-coefficient rational filter to complex frequency samples.

    Poles are relocated with ``n_iter`` Sanathanan-Koerner iterations in a
    partial-fraction basis (vector fitting), starting from a fixed set of
    lightly damped poles spread log-uniformly over the band, so identical
    inputs always give identical output. Poles are not forced inside the unit
    circle: zero-phase targets need reciprocal pole pairs.

    Parameters
    ----------
    samples : array of complex
        Target response at ``freqs``.
    freqs : array of float
        Positive frequencies in Hz, below ``sample_rate / 2``.
    order : (int, int)
        ``(num_zeros, num_poles)``. Supported: ``num_poles == 0`` (FIR) and
        ``num_zeros`` equal to ``num_poles`` or ``num_poles - 1``.
    weights : array of float, optional
        Per-sample weights; defaults to ``1/|samples|`` (relative error).
    max_residual : float, optional
        Raise :class:`FitError` when the relative L2 residual exceeds this.
    lawson : int
        Extra passes that re-weight samples by the square root of their
        current error (Lawson's rule), steering the fit toward the minimax
        solution. The pass with the smallest peak weighted error is kept.

    Returns
    -------
    RationalFilter
        With ``residual`` set to the relative weighted L2 error.
    """
    samples = np.asarray(samples, dtype=complex).reshape(-1)
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    nz, npole = (int(order[0]), int(order[1]))
    if samples.shape != freqs.shape:
        raise InvalidArgument("samples and freqs must have equal length")
    if nz < 0 or npole < 0 or nz > 32 or npole > 32:
        raise InvalidArgument("orders must lie in [0, 32]")
    if samples.size < max(1, 2 * (nz + npole)):
        raise InvalidArgument(
            f"need at least {2 * (nz + npole)} samples for order {order}, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise InvalidArgument("samples must be finite")
    if np.any(freqs <= 0) or np.any(freqs >= sample_rate / 2):
        raise InvalidArgument("frequencies must lie in (0, sample_rate/2)")
    if npole > 0 and nz not in (npole, npole - 1):
        raise InvalidArgument("supported orders: (n, 0), (n, n) and (n-1, n)")
    if weights is None:
        mag = np.abs(samples)
        if np.any(mag == 0):
            raise InvalidArgument("relative weighting needs non-zero samples; pass weights")
        w = 1.0 / mag
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != samples.shape or np.any(w < 0):
            raise InvalidArgument("weights must be non-negative and match samples")

    filt, res = _fit_once(samples, freqs, nz, npole, sample_rate, w, n_iter, prune_tol)
    if lawson:
        peak = np.max(w * np.abs(filt.response(freqs) - samples))
        lw = w.copy()
        for _ in range(int(lawson)):
            err = w * np.abs(filt.response(freqs) - samples)
            emax = err.max()
            if emax == 0 or not np.isfinite(emax):
                break
            lw = lw * np.sqrt(err / emax + 1e-3)
            lw *= np.sum(w) / np.sum(lw)
            cand, _ = _fit_once(samples, freqs, nz, npole, sample_rate, lw, n_iter, prune_tol)
            cpeak = np.max(w * np.abs(cand.response(freqs) - samples))
            if cpeak < peak:
                peak, filt = cpeak, cand
        res = _rel_residual(filt.response(freqs), samples, w)
    if not math.isfinite(res):
        raise FitError("rational fit produced a non-finite response", residual=res)
    filt = RationalFilter(filt.gain, filt.zeros, filt.poles, filt.delay, sample_rate,
                          residual=res)
    if max_residual is not None and res > max_residual:
        raise FitError(
            f"rational fit residual {res:.3e} exceeds {max_residual:.3e} "
            f"(remove any pure delay before fitting)", residual=res)
    return filt


# -- factorization --------------------------------------------------------------

def _check_band(roots, what, band):
    bad = [r for r in roots if abs(1.0 - abs(r)) < band]
    if bad:
        raise AmbiguousRootError(
            f"{what} within {band:g} of the unit circle: "
            + ", ".join(f"{r:.6g}" for r in bad), roots=bad)


def factorize(filt, band=UNIT_CIRCLE_BAND):
    """Split ``filt`` into minimum-phase, stable all-pass and unstable all-pass parts.

    Zeros outside the unit circle are reflected to ``1/conj(q)``; their
    all-pass remainder has stable poles. Poles outside are reflected the same
    way and their all-pass remainder, which keeps the unstable poles, is
    returned as an :class:`AllPassFactorSet`.
    """
    _check_band(filt.zeros, "zeros", band)
    _check_band(filt.poles, "poles", band)
    gain = complex(filt.gain)
    mp_zeros, mp_poles = [], []
    sap_zeros, sap_poles = [], []
    sap_gain = 1.0 + 0j
    unstable = {}
    for q in filt.zeros:
        if abs(q) < 1.0:
            mp_zeros.append(q)
        else:
            w = 1.0 / np.conj(q)
            mp_zeros.append(w)
            gain *= -q
            sap_zeros.append(q)
            sap_poles.append(w)
            sap_gain *= -np.conj(w)
    for p in filt.poles:
        if abs(p) < 1.0:
            mp_poles.append(p)
        else:
            w = 1.0 / np.conj(p)
            mp_poles.append(w)
            gain /= -np.conj(p)
            unstable[p] = unstable.get(p, 0) + 1
    fs = filt.sample_rate
    return FilterFactorization(
        min_phase=RationalFilter(gain, mp_zeros, mp_poles, filt.delay, fs),
        stable_allpass=RationalFilter(sap_gain, sap_zeros, sap_poles, 0.0, fs),
        unstable_allpass=AllPassFactorSet(tuple(unstable.items()), fs),
    )


def pole_distance(p, q, metric="euclidean"):
    """Distance between two unstable poles used for LCM matching.

    ``"euclidean"`` is ``|p - q|``. ``"hyperbolic"`` is the pseudo-hyperbolic
    distance of the reflected poles ``a = 1/conj(p)``, ``b = 1/conj(q)``,
    ``|a - b| / |1 - conj(a) b|``. It bounds how far the all-pass factor of
    one pole strays from the other's on the unit circle, so it stays
    meaningful for poles hugging the circle, where a fixed Euclidean
    tolerance merges factors with very different phase.
    """
    if metric == "euclidean":
        return abs(p - q)
    if metric == "hyperbolic":
        a, b = 1.0 / np.conj(p), 1.0 / np.conj(q)
        return abs(a - b) / abs(1.0 - np.conj(a) * b)
    raise InvalidArgument(f"unknown pole metric {metric!r}")


def lcm_allpass(sets, match_tol=MATCH_TOL, metric="euclidean"):
    """Least common multiple of unstable all-pass factor sets.

    Poles from all sets are clustered by single linkage within ``match_tol``
    (under ``metric``, see :func:`pole_distance`); each cluster is represented
    by its centroid and carries the largest multiplicity any one input gives
    it. Two poles of the same input landing in one cluster make the match
    ambiguous and raise :class:`ClusteringError`.
    """
    if not match_tol > 0:
        raise InvalidArgument("match_tol must be positive")
    sets = list(sets)
    if not sets:
        return AllPassFactorSet(())
    fs = sets[0].sample_rate
    entries = [(i, p, k) for i, s in enumerate(sets) for p, k in s.factors]
    n = len(entries)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if pole_distance(entries[a][1], entries[b][1], metric) < match_tol:
                parent[find(a)] = find(b)
    clusters = {}
    for a in range(n):
        clusters.setdefault(find(a), []).append(entries[a])
    factors = []
    for members in clusters.values():
        owners = [e[0] for e in members]
        if len(set(owners)) != len(owners):
            raise ClusteringError(
                f"poles of one all-pass fall into a single cluster near "
                f"{members[0][1]:.6g}; reduce match_tol")
        centroid = complex(np.mean([e[1] for e in members]))
        factors.append((centroid, max(e[2] for e in members)))
    factors.sort(key=lambda f: (round(abs(f[0]), 12), round(np.angle(f[0]), 12)))
    return AllPassFactorSet(tuple(factors), fs)


def lcm_remainder(own, lcm, match_tol=MATCH_TOL, metric="euclidean"):
    """Exponents of ``own / lcm`` per LCM pole; all are <= 0 (stable remainder).

    Returns an :class:`AllPassFactorSet` of the LCM poles with the multiplicity
    that must be divided out, i.e. ``own/lcm == 1/remainder`` once ``own``'s
    poles are snapped to their cluster representatives.
    """
    remaining = []
    used = set()
    for q, kq in lcm.factors:
        k_own = 0
        for p, k in own.factors:
            if p not in used and pole_distance(p, q, metric) < match_tol:
                k_own = k
                used.add(p)
                break
        if k_own > kq:
            raise ClusteringError("own multiplicity exceeds the LCM multiplicity")
        if kq - k_own:
            remaining.append((q, kq - k_own))
    if len(used) != len(own.factors):
        raise ClusteringError("speaker poles missing from the LCM set")
    return AllPassFactorSet(tuple(remaining), lcm.sample_rate)
