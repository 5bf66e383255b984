"""Loudspeaker geometry, directivity models and far-field transfer functions.

Everything lives in the listener-centric frame: the listener sits at the
origin facing +x. Azimuths are measured from +x toward +y.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateGeometryError, ExtrapolationError, InvalidArgument

__all__ = [
    "SPEED_OF_SOUND",
    "Wavenumber",
    "Loudspeaker",
    "Layout",
    "Isotropic",
    "ParametricDirectivity",
    "TabulatedDirectivity",
    "log_frequency_grid",
    "normalization_angle",
    "transfer_function",
    "directivity_sample",
]

SPEED_OF_SOUND = 343.0


def log_frequency_grid(n=96, f_min=20.0, f_max=20000.0):
    if n < 2 or not (0 < f_min < f_max):
        raise InvalidArgument("need n >= 2 and 0 < f_min < f_max")
    return np.geomspace(f_min, f_max, n)


@dataclass(frozen=True)
class Wavenumber:
    nu: float
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        if not (self.c > 0):
            raise InvalidArgument("speed of sound must be positive")
        if np.any(np.asarray(self.nu) < 0):
            raise InvalidArgument("frequency must be non-negative")

    @property
    def kappa(self):
        return 2 * np.pi * np.asarray(self.nu, dtype=float) / self.c


@dataclass(frozen=True)
class Loudspeaker:
    position: np.ndarray
    orientation: np.ndarray
    name: str = ""

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(-1)
        ori = np.asarray(self.orientation, dtype=float).reshape(-1)
        if pos.shape != (2,) or ori.shape != (2,):
            raise InvalidArgument("only 2D positions and orientations are supported")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(ori))):
            raise InvalidArgument("position and orientation must be finite")
        norm = np.linalg.norm(ori)
        if norm == 0:
            raise InvalidArgument("orientation must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            ori = ori / norm
        if np.linalg.norm(pos) == 0:
            raise DegenerateGeometryError("loudspeaker cannot sit at the listener origin")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", ori)

    @classmethod
    def polar(cls, azimuth, distance=1.0, orientation=None, name=""):
        """Speaker at ``azimuth`` (radians); faces the listener unless ``orientation`` is given."""
        pos = distance * np.array([math.cos(azimuth), math.sin(azimuth)])
        if orientation is None:
            ori = -pos / distance
        else:
            ori = np.array([math.cos(orientation), math.sin(orientation)])
        return cls(pos, ori, name)

    @property
    def distance(self):
        return float(np.linalg.norm(self.position))

    @property
    def direction(self):
        """Unit direction from the listener toward the speaker."""
        return self.position / self.distance


@dataclass(frozen=True)
class Layout:
    speakers: tuple

    def __post_init__(self):
        spk = tuple(self.speakers)
        if len(spk) == 0:
            raise InvalidArgument("a layout needs at least one loudspeaker")
        object.__setattr__(self, "speakers", spk)

    def __len__(self):
        return len(self.speakers)

    def __iter__(self):
        return iter(self.speakers)

    def __getitem__(self, i):
        return self.speakers[i]

    @property
    def names(self):
        return [s.name or f"spk{i}" for i, s in enumerate(self.speakers)]

    @property
    def directions(self):
        """2 x N matrix of unit directions."""
        return np.column_stack([s.direction for s in self.speakers])

    @property
    def distances(self):
        return np.array([s.distance for s in self.speakers])


def normalization_angle(spk, r=(0.0, 0.0)):
    """Signed angle between the speaker axis and the direction toward ``r``.

    The magnitude is ``arccos(o . s / |s|)`` with ``s = r - u``; the sign is the
    sign of the 2D cross product ``o x s``. Result lies in (-pi, pi].
    """
    s = np.asarray(r, dtype=float) - spk.position
    dist = np.linalg.norm(s)
    if dist == 0:
        raise DegenerateGeometryError("evaluation point coincides with the loudspeaker")
    o = spk.orientation
    cosang = float(np.clip(o @ s / dist, -1.0, 1.0))
    theta = math.acos(cosang)
    cross = o[0] * s[1] - o[1] * s[0]
    if cross < 0 and theta < math.pi:
        theta = -theta
    return theta


# -- directivity models -------------------------------------------------------

class Isotropic:
    """S_A = 1 everywhere."""

    electrical = None
    nu_range = (0.0, math.inf)

    def acoustic(self, nu, theta):
        nu, theta = np.broadcast_arrays(np.asarray(nu, float), np.asarray(theta, float))
        return np.ones(nu.shape, dtype=complex)

    def segments(self):
        return ()

    def __repr__(self):
        return "Isotropic()"


@dataclass(frozen=True)
class ParametricDirectivity:
    """Reference cardioid-like model with frequency-dependent narrowing and lobing.

    ``S_A = (b^p(nu) + eps cos(6 theta) m(nu)) / (1 + eps m(nu))`` where
    ``b = a + (1-a) cos theta`` (raised with its sign kept, ``sign(b)|b|^p``),
    ``p`` rises log-linearly from 0 at ``f_lo`` to ``p_max`` at ``f_hi`` and
    ``m = min(1, nu/lobe_freq)``. The denominator only depends on frequency, so
    it keeps the on-axis value at 1 and cancels in every quotient. The model is
    real valued: zero phase with the path delay removed.
    """

    a: float = 0.25
    p_max: float = 4.0
    f_lo: float = 100.0
    f_hi: float = 16000.0
    lobe: float = 0.15
    lobe_freq: float = 8000.0
    lobe_order: int = 6
    electrical: Optional[Callable] = None
    nu_range: tuple = (0.0, math.inf)

    def exponent(self, nu):
        nu = np.asarray(nu, dtype=float)
        with np.errstate(divide="ignore"):
            frac = np.log(np.maximum(nu, 1e-300) / self.f_lo) / math.log(self.f_hi / self.f_lo)
        return self.p_max * np.clip(frac, 0.0, 1.0)

    def lobing(self, nu):
        return self.lobe * np.minimum(1.0, np.asarray(nu, dtype=float) / self.lobe_freq)

    def acoustic(self, nu, theta):
        nu, theta = np.broadcast_arrays(np.asarray(nu, float), np.asarray(theta, float))
        if np.any(nu < 0):
            raise ExtrapolationError("negative frequency")
        b = self.a + (1.0 - self.a) * np.cos(theta)
        p = self.exponent(nu)
        m = self.lobing(nu)
        shaped = np.sign(b) * np.abs(b) ** p
        val = (shaped + m * np.cos(self.lobe_order * theta)) / (1.0 + m)
        return val.astype(complex)

    def segments(self):
        # |b|^p with p < 1 has a cusp where b changes sign; no sign change for a >= 1/2
        ratio = -self.a / (1.0 - self.a) if self.a < 1.0 else -math.inf
        if ratio < -1.0:
            return ()
        t0 = math.acos(ratio)
        return (t0, -t0)


class TabulatedDirectivity:
    """Complex S_A(nu, theta) on a grid, bilinear (linear in nu, circular in theta).

    ``theta`` must be strictly increasing within [-pi, pi); interpolation wraps
    across +-pi. ``order=0`` selects nearest-node lookup instead.
    """

    def __init__(self, freqs, thetas, values, order=1, electrical=None):
        freqs = np.asarray(freqs, dtype=float)
        thetas = np.asarray(thetas, dtype=float)
        values = np.asarray(values, dtype=complex)
        if freqs.ndim != 1 or thetas.ndim != 1:
            raise InvalidArgument("frequency and angle grids must be 1D")
        if values.shape != (freqs.size, thetas.size):
            raise InvalidArgument(
                f"table shape {values.shape} does not match grids "
                f"({freqs.size}, {thetas.size})")
        if freqs.size < 1 or np.any(np.diff(freqs) <= 0):
            raise InvalidArgument("frequency grid must be strictly increasing")
        if thetas.size < 2 or np.any(np.diff(thetas) <= 0):
            raise InvalidArgument("angle grid must be strictly increasing")
        if thetas[0] < -math.pi - 1e-12 or thetas[-1] >= math.pi - 1e-12:
            raise InvalidArgument("angle grid must lie within [-pi, pi)")
        if order not in (0, 1):
            raise InvalidArgument("interpolation order must be 0 or 1")
        i0 = int(np.argmin(np.abs(thetas)))
        if abs(thetas[i0]) > 1e-12:
            raise InvalidArgument("angle grid must contain the on-axis direction 0")
        if np.any(values[:, i0] == 0):
            raise InvalidArgument("on-axis response must be non-zero")
        self.freqs = freqs
        self.thetas = thetas
        self.values = values
        self.order = order
        self.electrical = electrical
        self.nu_range = (float(freqs[0]), float(freqs[-1]))

    def _angle_weights(self, theta):
        th = self.thetas
        t = np.mod(theta - th[0], 2 * math.pi) + th[0]
        ext = np.append(th, th[0] + 2 * math.pi)
        j = np.clip(np.searchsorted(ext, t, side="right") - 1, 0, th.size - 1)
        w = (t - ext[j]) / (ext[j + 1] - ext[j])
        j1 = (j + 1) % th.size
        return j, j1, w

    def acoustic(self, nu, theta):
        nu, theta = np.broadcast_arrays(np.asarray(nu, float), np.asarray(theta, float))
        lo, hi = self.nu_range
        if np.any(nu < lo - 1e-9 * max(lo, 1.0)) or np.any(nu > hi * (1 + 1e-12)):
            raise ExtrapolationError(
                f"frequency outside tabulated range [{lo}, {hi}] Hz")
        f = self.freqs
        if f.size == 1:
            i = np.zeros(nu.shape, dtype=int)
            i1, u = i, np.zeros(nu.shape)
        else:
            i = np.clip(np.searchsorted(f, nu, side="right") - 1, 0, f.size - 2)
            i1 = i + 1
            u = np.clip((nu - f[i]) / (f[i1] - f[i]), 0.0, 1.0)
        j, j1, w = self._angle_weights(theta)
        if self.order == 0:
            ii = np.where(u < 0.5, i, i1)
            jj = np.where(w < 0.5, j, j1)
            return self.values[ii, jj]
        v = self.values
        lower = (1 - w) * v[i, j] + w * v[i, j1]
        upper = (1 - w) * v[i1, j] + w * v[i1, j1]
        return (1 - u) * lower + u * upper

    def segments(self):
        return tuple(self.thetas)

    @classmethod
    def from_csv(cls, path, order=1):
        """Read ``freq_hz,theta_deg,re,im`` rows ordered by frequency then angle."""
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidArgument(f"{path}: empty directivity file") from None
            if [h.strip() for h in header] != ["freq_hz", "theta_deg", "re", "im"]:
                raise InvalidArgument(f"{path}: header must be freq_hz,theta_deg,re,im")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise InvalidArgument(f"{path}:{lineno}: expected 4 fields")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise InvalidArgument(f"{path}:{lineno}: non-numeric field") from None
        if not rows:
            raise InvalidArgument(f"{path}: no data rows")
        data = np.array(rows)
        freqs = np.unique(data[:, 0])
        thetas_deg = data[: len(data) // freqs.size, 1]
        if data.shape[0] != freqs.size * thetas_deg.size:
            raise InvalidArgument(f"{path}: table is not a full frequency x angle grid")
        grid_f = np.repeat(freqs, thetas_deg.size)
        grid_t = np.tile(thetas_deg, freqs.size)
        if not (np.array_equal(data[:, 0], grid_f) and np.array_equal(data[:, 1], grid_t)):
            raise InvalidArgument(f"{path}: rows must be ordered by frequency, then angle")
        values = (data[:, 2] + 1j * data[:, 3]).reshape(freqs.size, thetas_deg.size)
        return cls(freqs, np.radians(thetas_deg), values, order=order)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq_hz", "theta_deg", "re", "im"])
            for i, f in enumerate(self.freqs):
                for j, t in enumerate(self.thetas):
                    v = self.values[i, j]
                    w.writerow([repr(float(f)), repr(float(math.degrees(t))),
                                repr(float(v.real)), repr(float(v.imag))])


def directivity_sample(model, nu, theta):
    """Full electro-acoustic response S = S_E(nu) S_A(nu, theta)."""
    val = model.acoustic(nu, theta)
    if model.electrical is not None:
        val = val * model.electrical(np.asarray(nu, dtype=float))
    if np.ndim(val) == 0:
        return complex(val)
    return val


def transfer_function(spk, model, k, r=(0.0, 0.0)):
    """Far-field response of ``spk`` at point ``r``: S(nu, theta) e^{-j kappa d}/d."""
    s = np.asarray(r, dtype=float) - spk.position
    dist = float(np.linalg.norm(s))
    if dist == 0:
        raise DegenerateGeometryError("evaluation point coincides with the loudspeaker")
    theta = normalization_angle(spk, r)
    S = directivity_sample(model, k.nu, theta)
    return S * np.exp(-1j * k.kappa * dist) / dist
