"""Optimal panning sensitivity/efficiency (OPSE) gains.

A source steered toward unit direction ``s`` is panned with non-negative gains
``x`` so that the gain-weighted loudspeaker directions point exactly along
``s`` (the VBAPS constraint ``V x = lambda s``). Among those, OPSE maximizes
``lambda`` under per-speaker headroom ``0 <= x <= tau`` and an acoustic power
budget ``x^T K x <= rho``::

    maximize  lambda   s.t.  V x = lambda s,  x^T K x <= rho,  0 <= x <= tau

Three equivalent programs are offered. ``augmented`` keeps ``lambda`` as a
variable. ``primary`` eliminates it (``lambda = c^T x`` with ``c = V^T s``) and
keeps the single orthogonality row ``s_perp^T V x = 0``. ``nullspace``
parameterizes ``x = Abar y`` over the kernel of ``A = (I - s s^T) V``, leaving
only inequalities. All three are solved by the same primal-dual interior-point
engine followed by an active-set Newton polish.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import linalg, optimize

from .errors import (InvalidArgument, SolverError, TightnessError,
                     UndefinedMetricsError)

__all__ = [
    "PanningProblem",
    "PanningSolution",
    "NullSpaceProblem",
    "feasibility",
    "covers_circle",
    "triple_condition",
    "nullspace_basis",
    "metrics",
    "rayleigh_max",
    "solve",
    "solve_relaxed",
    "FORMS",
]

FORMS = ("augmented", "primary", "nullspace")
RIDGE = 1e-10
KKT_TOL = 1e-8
RANK_TOL = 1e-12
_CONE_TOL = 1e-12


def _unit(v):
    v = np.asarray(v, dtype=float).reshape(-1)
    return v


@dataclass(frozen=True)
class PanningProblem:
    """Inputs of one OPSE solve (one steering direction, one frequency)."""

    V: np.ndarray
    s: np.ndarray
    K: np.ndarray
    rho: float
    tau: np.ndarray
    power_mode: str = "inequality"

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2 or V.shape[0] != 2 or V.shape[1] < 1:
            raise InvalidArgument("V must be a 2 x N matrix with N >= 1")
        n = V.shape[1]
        if not np.all(np.isfinite(V)):
            raise InvalidArgument("V must be finite")
        if np.max(np.abs(np.linalg.norm(V, axis=0) - 1.0)) > 1e-10:
            raise InvalidArgument("columns of V must be unit vectors")
        s = _unit(self.s)
        if s.shape != (2,) or abs(np.linalg.norm(s) - 1.0) > 1e-10:
            raise InvalidArgument("steering direction must be a 2D unit vector")
        K = np.asarray(self.K, dtype=float)
        if K.shape != (n, n) or not np.all(np.isfinite(K)):
            raise InvalidArgument(f"K must be a finite {n} x {n} matrix")
        if np.max(np.abs(K - K.T), initial=0.0) > 1e-10 * max(1.0, np.abs(K).max()):
            raise InvalidArgument("K must be symmetric")
        K = 0.5 * (K + K.T)
        if np.linalg.eigvalsh(K).min() < -1e-10 * max(1.0, np.abs(K).max()):
            raise InvalidArgument("K must be positive semidefinite")
        rho = float(self.rho)
        if not (rho > 0 and math.isfinite(rho)):
            raise InvalidArgument("rho must be positive and finite")
        tau = np.broadcast_to(np.asarray(self.tau, dtype=float), (n,)).copy()
        if not np.all((tau > 0) & np.isfinite(tau)):
            raise InvalidArgument("headroom bounds must be positive and finite")
        if self.power_mode not in ("inequality", "equality"):
            raise InvalidArgument("power_mode must be 'inequality' or 'equality'")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self):
        return self.V.shape[1]

    @property
    def c(self):
        """Per-speaker alignment with the steering direction, ``V^T s``."""
        return self.V.T @ self.s

    @property
    def s_perp(self):
        return np.array([-self.s[1], self.s[0]])

    @classmethod
    def from_angles(cls, speaker_deg, steer_deg, K=None, rho=1.0, tau=1.0,
                    power_mode="inequality"):
        ang = np.radians(np.asarray(speaker_deg, dtype=float))
        V = np.vstack([np.cos(ang), np.sin(ang)])
        st = math.radians(steer_deg)
        K = np.ones((ang.size, ang.size)) if K is None else K
        return cls(V, np.array([math.cos(st), math.sin(st)]), K, rho, tau, power_mode)


@dataclass(frozen=True)
class PanningSolution:
    x: np.ndarray
    lam: float
    sensitivity: float
    efficiency_electric: float
    efficiency_acoustic: float
    status: str
    kkt_residual: float
    form: str = ""
    power: float = 0.0
    iterations: int = 0

    def active(self, tol=1e-9):
        """Indices of speakers with a gain above ``tol`` (relative to the largest)."""
        if not np.any(self.x > 0):
            return ()
        return tuple(int(i) for i in np.flatnonzero(self.x > tol * self.x.max()))

    def to_dict(self):
        return {
            "x": [float(v) for v in self.x],
            "lambda": float(self.lam),
            "sensitivity": float(self.sensitivity),
            "efficiency_electric": float(self.efficiency_electric),
            "efficiency_acoustic": float(self.efficiency_acoustic),
            "power": float(self.power),
            "status": self.status,
            "kkt_residual": float(self.kkt_residual),
            "form": self.form,
        }


@dataclass(frozen=True)
class NullSpaceProblem:
    """``Abar`` spans ``ker((I - s s^T) V)``; reduced data ``cbar``, ``Kbar``."""

    basis: np.ndarray
    cbar: np.ndarray
    Kbar: np.ndarray
    A: np.ndarray
    degenerate: bool = False

    @property
    def nullity(self):
        return self.basis.shape[1]


# -- geometry ------------------------------------------------------------------

def _in_cone(vi, vj, s, tol=_CONE_TOL):
    """Is ``s`` a non-negative combination of ``vi`` and ``vj`` (closed cone)?"""
    M = np.column_stack([vi, vj])
    det = np.linalg.det(M)
    if abs(det) <= tol:
        # parallel or antipodal pair: only directions along a member qualify
        return (abs(vi[0] * s[1] - vi[1] * s[0]) <= tol and vi @ s > 0) or \
               (abs(vj[0] * s[1] - vj[1] * s[0]) <= tol and vj @ s > 0)
    a, b = np.linalg.solve(M, s)
    return a >= -tol and b >= -tol


def feasibility(V, s):
    """True when some ``x >= 0, x != 0`` gives ``V x`` along ``s``.

    Checked pairwise: ``s`` must lie on the closed minor arc between two
    loudspeaker directions, or coincide with one of them.
    """
    V = np.asarray(V, dtype=float)
    s = _unit(s)
    if V.ndim != 2 or V.shape[1] == 0:
        raise InvalidArgument("a panning problem needs at least one loudspeaker")
    n = V.shape[1]
    for i in range(n):
        vi = V[:, i]
        if abs(vi[0] * s[1] - vi[1] * s[0]) <= _CONE_TOL and vi @ s > 0:
            return True
    for i, j in combinations(range(n), 2):
        if _in_cone(V[:, i], V[:, j], s):
            return True
    return False


def triple_condition(V):
    """Some triple has each member's negative direction on the minor arc of the other two."""
    V = np.asarray(V, dtype=float)
    for i, j, k in combinations(range(V.shape[1]), 3):
        vi, vj, vk = V[:, i], V[:, j], V[:, k]
        if _in_cone(vj, vk, -vi) and _in_cone(vi, vk, -vj) and _in_cone(vi, vj, -vk):
            return True
    return False


def covers_circle(V):
    """True when every steering direction is feasible.

    Holds iff no angular gap between neighbouring loudspeakers reaches pi. For
    layouts in general position this matches :func:`triple_condition`.
    """
    V = np.asarray(V, dtype=float)
    if V.shape[1] < 3:
        return False
    ang = np.sort(np.mod(np.arctan2(V[1], V[0]), 2 * math.pi))
    gaps = np.diff(np.append(ang, ang[0] + 2 * math.pi))
    return bool(np.all(gaps < math.pi - 1e-12))


def nullspace_basis(V, s, rank_tol=RANK_TOL):
    """Orthonormal basis of ``ker((I - s s^T) V)`` from an SVD."""
    V = np.asarray(V, dtype=float)
    s = _unit(s)
    n = V.shape[1]
    if n < 2:
        raise InvalidArgument("the null-space form needs at least two loudspeakers")
    A = (np.eye(2) - np.outer(s, s)) @ V
    _, sv, Vt = np.linalg.svd(A)
    rank = int(np.sum(sv > rank_tol * max(1.0, sv.max(initial=0.0))))
    basis = Vt[rank:].T.copy()
    # deterministic orientation: largest-magnitude entry of each column positive
    for k in range(basis.shape[1]):
        col = basis[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, k] = -col
    c = V.T @ s
    return NullSpaceProblem(basis, basis.T @ c, None, A, degenerate=(rank == 0))


def metrics(x, V, s, K):
    """``(sensitivity, electric efficiency, acoustic efficiency)`` of gains ``x``.

    Sensitivity is ``s^T V x / sum(x)``; electric efficiency ``|V x|^2 / |x|^2``
    and acoustic efficiency ``|V x|^2 / x^T K x`` (infinite when ``x`` carries
    no acoustic power).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12) or not np.any(x > 0):
        raise UndefinedMetricsError("metrics need non-negative, non-zero gains")
    V = np.asarray(V, dtype=float)
    K = np.asarray(K, dtype=float)
    vx = V @ x
    num = float(vx @ vx)
    sens = float(_unit(s) @ vx / x.sum())
    ee = num / float(x @ x)
    pw = float(x @ K @ x)
    ea = num / pw if pw > 0 else math.inf
    return sens, ee, ea


def rayleigh_max(V, K, rank_tol=RANK_TOL):
    """Largest generalized eigenvalue of ``(V^T V, K)`` and its eigenvector.

    Infinite (vector ``None``) when ``V^T V`` reaches into the null space of ``K``.
    """
    V = np.asarray(V, dtype=float)
    K = np.asarray(K, dtype=float)
    B = V.T @ V
    w, U = np.linalg.eigh(0.5 * (K + K.T))
    keep = w > rank_tol * max(w.max(), 1e-300)
    N0 = U[:, ~keep]
    if N0.size and np.linalg.norm(V @ N0) > 1e-9:
        return math.inf, None
    W = U[:, keep] / np.sqrt(w[keep])
    ev, Y = np.linalg.eigh(W.T @ B @ W)
    vec = W @ Y[:, -1]
    if vec.sum() < 0:
        vec = -vec
    return float(ev[-1]), vec


# -- interior-point engine -------------------------------------------------------

@dataclass
class _Program:
    """minimize 1/2 z^T Q z + q^T z  s.t.  G z <= h,  E z = b,  z^T P z <= r."""

    Q: np.ndarray
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    b: np.ndarray
    P: np.ndarray | None = None
    r: float = 0.0

    @property
    def n(self):
        return self.q.size


@dataclass
class _Result:
    z: np.ndarray
    u: np.ndarray
    y: np.ndarray
    uq: float
    kkt: float
    iterations: int
    polished: bool = False
    extra: dict = field(default_factory=dict)


def _reduce_equalities(E, b):
    if E.shape[0] == 0:
        return E, b
    U, sv, Vt = np.linalg.svd(E, full_matrices=True)
    scale = max(1.0, sv.max(initial=0.0))
    rank = int(np.sum(sv > 1e-12 * scale))
    proj = U.T @ b
    if np.any(np.abs(proj[rank:]) > 1e-9 * max(1.0, np.abs(b).max(initial=0.0))):
        raise SolverError("equality constraints are inconsistent")
    return sv[:rank, None] * Vt[:rank], proj[:rank]


def _kkt_residual(prog, z, active_tol=1e-7):
    """Scaled KKT residual at ``z`` with best non-negative multipliers for active rows."""
    G, h, E, b, P = prog.G, prog.h, prog.E, prog.b, prog.P
    hs = 1.0 + np.abs(h).max(initial=0.0)
    slack = h - G @ z
    prim = max(0.0, -slack.min(initial=0.0)) / hs
    if E.shape[0]:
        prim = max(prim, np.abs(E @ z - b).max() / (1.0 + np.abs(b).max()))
    grad = prog.Q @ z + prog.q
    cols, signs = [], []
    act = np.flatnonzero(slack <= active_tol * hs)
    for i in act:
        cols.append(G[i])
    nq = 0
    if P is not None:
        gq = float(z @ P @ z) - prog.r
        prim = max(prim, max(0.0, gq) / (1.0 + prog.r))
        if gq >= -active_tol * (1.0 + prog.r):
            cols.append(2.0 * P @ z)
            nq = 1
    free = E.shape[0]
    # stationarity: grad + A_act^T u + E^T y = 0, u >= 0, y free (split +/-)
    mats = cols + [E[k] for k in range(free)] + [-E[k] for k in range(free)]
    if mats:
        M = np.column_stack(mats)
        mult, _ = optimize.nnls(M, -grad, maxiter=50 * M.shape[1] + 100)
        stat = grad + M @ mult
        u_act = mult[: len(cols)]
        comp_sl = np.concatenate([slack[act], [prog.r - float(z @ P @ z)]] if nq else [slack[act]])
        comp = np.abs(u_act * np.maximum(comp_sl, 0.0)).max(initial=0.0)
    else:
        stat = grad
        comp = 0.0
    dual = np.abs(stat).max() / (1.0 + np.abs(prog.q).max(initial=0.0))
    return float(max(prim, dual, comp / hs))


def _ipm(prog, tol=1e-11, max_iter=200):
    n = prog.n
    Q, q, G, h = prog.Q, prog.q, prog.G, prog.h
    E, b = _reduce_equalities(prog.E, prog.b)
    P = prog.P
    m, p = G.shape[0], E.shape[0]
    hasq = P is not None
    z = np.zeros(n)
    s = np.maximum(h - G @ z, 1.0)
    u = np.ones(m)
    y = np.zeros(p)
    if hasq:
        sq = max(prog.r - float(z @ P @ z), 1.0)
        uq = 1.0
    else:
        sq, uq = 1.0, 0.0
    qs = 1.0 + np.abs(q).max(initial=0.0)
    hs = 1.0 + np.abs(h).max(initial=0.0)
    it = 0
    best, best_res, stall = None, math.inf, 0
    for it in range(1, max_iter + 1):
        Pz = P @ z if hasq else np.zeros(n)
        gq = 2.0 * Pz
        rd = Q @ z + q + G.T @ u + (uq * gq if hasq else 0.0) + (E.T @ y if p else 0.0)
        rp = E @ z - b if p else np.zeros(0)
        ri = G @ z + s - h
        rq = (float(z @ Pz) - prog.r + sq) if hasq else 0.0
        nc = m + (1 if hasq else 0)
        mu = (s @ u + (sq * uq if hasq else 0.0)) / max(nc, 1)
        res = max(np.abs(rd).max(initial=0.0) / qs,
                  np.abs(rp).max(initial=0.0) / (1.0 + np.abs(b).max(initial=0.0)),
                  np.abs(ri).max(initial=0.0) / hs,
                  abs(rq) / (1.0 + prog.r), mu / hs)
        if res < best_res:
            best = (z.copy(), u.copy(), y.copy(), uq, s.copy(), sq)
            best_res, stall = res, 0
        else:
            stall += 1
        tiny = min(s.min(initial=1.0), sq if hasq else 1.0)
        if res < tol or (stall >= 8 and best_res < 1e-7) or tiny < 1e-150:
            break
        H = Q + (2.0 * uq * P if hasq else 0.0)
        M = H + G.T @ ((u / s)[:, None] * G)
        if hasq:
            M = M + (uq / sq) * np.outer(gq, gq)
        KKT = np.zeros((n + p, n + p))
        KKT[:n, :n] = M
        if p:
            KKT[:n, n:] = E.T
            KKT[n:, :n] = E
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", linalg.LinAlgWarning)
                lu = linalg.lu_factor(KKT, check_finite=False)
            solve_k = lambda rhs: linalg.lu_solve(lu, rhs, check_finite=False)  # noqa: E731
        except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
            solve_k = lambda rhs: np.linalg.lstsq(KKT, rhs, rcond=None)[0]  # noqa: E731

        def direction(rc, rcq):
            rhs = -rd - G.T @ ((-rc + u * ri) / s)
            if hasq:
                rhs = rhs - gq * ((-rcq + uq * rq) / sq)
            full = np.concatenate([rhs, -rp])
            sol = solve_k(full)
            if not np.all(np.isfinite(sol)):
                sol = np.linalg.lstsq(KKT, full, rcond=None)[0]
            dz, dy = sol[:n], sol[n:]
            ds = -ri - G @ dz
            du = (-rc - u * ds) / s
            if hasq:
                dsq = -rq - gq @ dz
                duq = (-rcq - uq * dsq) / sq
            else:
                dsq = duq = 0.0
            return dz, dy, ds, du, dsq, duq

        def max_step(ds, du, dsq, duq):
            a = 1.0
            for v, dv in ((s, ds), (u, du)):
                neg = dv < 0
                if np.any(neg):
                    a = min(a, float(np.min(-v[neg] / dv[neg])))
            if hasq:
                if dsq < 0:
                    a = min(a, -sq / dsq)
                if duq < 0:
                    a = min(a, -uq / duq)
            return a

        aff = direction(s * u, sq * uq)
        a_aff = max_step(*aff[2:])
        mu_aff = ((s + a_aff * aff[2]) @ (u + a_aff * aff[3])
                  + ((sq + a_aff * aff[4]) * (uq + a_aff * aff[5]) if hasq else 0.0)) / max(nc, 1)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        rc = s * u + aff[2] * aff[3] - sigma * mu
        rcq = sq * uq + aff[4] * aff[5] - sigma * mu if hasq else 0.0
        dz, dy, ds, du, dsq, duq = direction(rc, rcq)
        a = min(1.0, 0.99 * max_step(ds, du, dsq, duq))
        z = z + a * dz
        y = y + a * dy
        s = s + a * ds
        u = u + a * du
        if hasq:
            sq = sq + a * dsq
            uq = uq + a * duq
        if not np.all(np.isfinite(z)):
            break
    z, u, y, uq, s, sq = best
    return _Result(z, u, y, uq, best_res, it, extra={"s": s, "sq": sq})


def _polish(prog, res, iters=30, widen=0.0):
    """Newton on the KKT system of the identified active set; keep only if valid.

    A row is taken as active when its slack is below its multiplier, or below
    ``widen`` (relative to the data scale). Widening catches bounds whose
    multiplier vanishes, where the interior iterates approach the face slowly.
    """
    G, h, P = prog.G, prog.h, prog.P
    n = prog.n
    E, b = _reduce_equalities(prog.E, prog.b)
    s = res.extra["s"]
    hs0 = 1.0 + np.abs(h).max(initial=0.0)
    act = np.flatnonzero((s < res.u) | (s < widen * hs0))
    hasq = P is not None and (res.extra["sq"] < res.uq
                              or res.extra["sq"] < widen * (1.0 + prog.r))
    GA, hA = G[act], h[act]
    z = res.z.copy()
    u = res.u[act].copy()
    y = np.zeros(E.shape[0])
    uq = res.uq if hasq else 0.0
    for _ in range(iters):
        grad = prog.Q @ z + prog.q + GA.T @ u + (E.T @ y if E.shape[0] else 0.0)
        blocks = [GA @ z - hA]
        if E.shape[0]:
            blocks.append(E @ z - b)
        H = prog.Q.copy()
        if hasq:
            Pz = P @ z
            grad = grad + 2.0 * uq * Pz
            H = H + 2.0 * uq * P
            blocks.append(np.array([float(z @ Pz) - prog.r]))
        F = np.concatenate([grad] + blocks)
        rows = [GA] + ([E] if E.shape[0] else []) + ([2.0 * (P @ z)[None, :]] if hasq else [])
        C = np.vstack(rows) if rows else np.zeros((0, n))
        k = C.shape[0]
        J = np.zeros((n + k, n + k))
        J[:n, :n] = H
        J[:n, n:] = C.T
        J[n:, :n] = C
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        z = z + step[:n]
        o = n
        u = u + step[o:o + act.size]
        o += act.size
        if E.shape[0]:
            y = y + step[o:o + E.shape[0]]
            o += E.shape[0]
        if hasq:
            uq = uq + step[o]
        if np.abs(step).max(initial=0.0) < 1e-15 * max(1.0, np.abs(z).max()):
            break
    hs = 1.0 + np.abs(h).max(initial=0.0)
    feasible = np.all(G @ z - h <= 1e-12 * hs)
    if P is not None:
        feasible = feasible and float(z @ P @ z) <= prog.r * (1 + 1e-12) + 1e-15
    if E.shape[0]:
        feasible = feasible and np.abs(E @ z - b).max() <= 1e-12 * (1 + np.abs(b).max())
    if not feasible or np.any(u < -1e-10) or uq < -1e-10 or not np.all(np.isfinite(z)):
        return None
    return z


_POLISH_WIDTHS = (0.0, 1e-8, 1e-6, 1e-4)


def _solve_program(prog):
    res = _ipm(prog)
    best_z, best_k = res.z, _kkt_residual(prog, res.z)
    for widen in _POLISH_WIDTHS:
        if best_k < KKT_TOL * 1e-3:
            break
        z1 = _polish(prog, res, widen=widen)
        if z1 is not None:
            k1 = _kkt_residual(prog, z1)
            if k1 <= best_k:
                best_z, best_k = z1, k1
    return best_z, best_k, res.iterations


# -- problem forms ----------------------------------------------------------------

def _power_structure(K):
    """('none', None) | ('linear', w) with K = w w^T | ('quadratic', K)."""
    w, U = np.linalg.eigh(K)
    top = w[-1]
    if top <= RANK_TOL:
        return "none", None
    if w.size == 1 or w[-2] <= RANK_TOL * top:
        vec = U[:, -1] * math.sqrt(top)
        if vec.sum() < 0:
            vec = -vec
        return "linear", vec
    return "quadratic", K


def _build(problem, form, linear_equality, extra_power=True):
    """Assemble the generic program for ``form``; returns (program, to_x)."""
    n = problem.n
    V, s, tau, rho = problem.V, problem.s, problem.tau, problem.rho
    c = problem.c
    kind, pw = _power_structure(problem.K)
    sqrt_rho = math.sqrt(rho)

    if form == "nullspace":
        ns = nullspace_basis(V, s)
        B = ns.basis
        nv = B.shape[1]
        to_x = lambda z: B @ z  # noqa: E731
        X = B                      # x = X z
        q = -ns.cbar
        Q = 2 * RIDGE * np.eye(nv)
        G = [-X, X, -(c @ X)[None, :]]
        h = [np.zeros(n), tau, np.zeros(1)]
        E = np.zeros((0, nv))
        b = np.zeros(0)
    elif form == "primary":
        nv = n
        X = np.eye(n)
        to_x = lambda z: z  # noqa: E731
        q = -c
        Q = 2 * RIDGE * np.eye(n)
        G = [-X, X, -c[None, :]]
        h = [np.zeros(n), tau, np.zeros(1)]
        E = (problem.s_perp @ V)[None, :]
        b = np.zeros(1)
    elif form == "augmented":
        nv = n + 1
        X = np.hstack([np.eye(n), np.zeros((n, 1))])
        to_x = lambda z: z[:n]  # noqa: E731
        q = np.zeros(nv)
        q[n] = -1.0
        Q = np.zeros((nv, nv))
        Q[:n, :n] = 2 * RIDGE * np.eye(n)
        lam_row = np.zeros((1, nv))
        lam_row[0, n] = -1.0
        G = [-X, X, lam_row]
        h = [np.zeros(n), tau, np.zeros(1)]
        E = np.hstack([V, -s[:, None]])
        b = np.zeros(2)
    else:
        raise InvalidArgument(f"form must be one of {FORMS}, got {form!r}")

    P, r = None, 0.0
    if kind == "linear":
        wz = pw @ X
        if linear_equality:
            E = np.vstack([E, wz[None, :]])
            b = np.concatenate([b, [sqrt_rho]])
        else:
            G += [wz[None, :], -wz[None, :]]
            h += [np.array([sqrt_rho]), np.array([sqrt_rho])]
    elif kind == "quadratic" and extra_power:
        P = X.T @ problem.K @ X
        P = 0.5 * (P + P.T)
        r = rho
    prog = _Program(Q, q, np.vstack(G), np.concatenate(h), E, b, P, r)
    return prog, to_x, kind


def _finish(problem, x, status, kkt, form, iterations, lam=None):
    x = np.clip(x, 0.0, problem.tau)
    x[np.abs(x) < 1e-15 * max(1.0, problem.tau.max())] = 0.0
    vx = problem.V @ x
    lam = float(problem.s @ vx) if lam is None else float(lam)
    power = float(x @ problem.K @ x)
    if np.any(x > 0):
        sens, ee, ea = metrics(x, problem.V, problem.s, problem.K)
    else:
        sens = ee = ea = 0.0
    return PanningSolution(x, lam, sens, ee, ea, status, float(kkt), form, power, iterations)


def _max_linear_power(problem, w):
    """Largest ``w^T x`` over the VBAPS/headroom set (primary form LP)."""
    n = problem.n
    prog = _Program(2 * RIDGE * np.eye(n), -w,
                    np.vstack([-np.eye(n), np.eye(n), -problem.c[None, :]]),
                    np.concatenate([np.zeros(n), problem.tau, [0.0]]),
                    (problem.s_perp @ problem.V)[None, :], np.zeros(1))
    z, _, _ = _solve_program(prog)
    return float(w @ z)


def solve(problem, form="nullspace"):
    """Maximize ``lambda`` for ``problem`` in the requested program ``form``.

    Returns a :class:`PanningSolution` with status ``"optimal"`` (KKT residual
    below 1e-8), ``"inaccurate"`` otherwise, or ``"infeasible_direction"`` with
    ``x = 0`` when no loudspeaker pair spans the steering direction.

    In equality power mode a rank-1 ``K = w w^T`` turns the budget into the
    linear equality ``w^T x = sqrt(rho)``; otherwise the inequality program is
    solved and :class:`TightnessError` is raised if it leaves slack above
    ``1e-6 rho``.
    """
    if form not in FORMS:
        raise InvalidArgument(f"form must be one of {FORMS}, got {form!r}")
    if not feasibility(problem.V, problem.s):
        return PanningSolution(np.zeros(problem.n), 0.0, 0.0, 0.0, 0.0,
                               "infeasible_direction", 0.0, form)
    if form == "nullspace" and problem.n < 2:
        form = "primary"
    equality = problem.power_mode == "equality"
    kind, w = _power_structure(problem.K)
    if equality and kind == "linear":
        reach = _max_linear_power(problem, w)
        if reach < math.sqrt(problem.rho) * (1 - 1e-9):
            raise SolverError(
                f"power target rho={problem.rho:g} is out of reach under the headroom "
                f"bounds (max {reach**2:.6g})")
    prog, to_x, kind = _build(problem, form, linear_equality=equality)
    z, kkt, iters = _solve_program(prog)
    x = to_x(z)
    lam = z[-1] if form == "augmented" else None
    status = "optimal" if kkt < KKT_TOL else "inaccurate"
    sol = _finish(problem, x, status, kkt, form, iters, lam)
    if equality and kind != "none":
        slack = problem.rho - sol.power
        if slack > 1e-6 * problem.rho:
            raise TightnessError(
                f"acoustic power leaves slack {slack:.3e} (rho={problem.rho:g}); "
                "the budget is not tight at the optimum")
    return sol


def solve_relaxed(problem):
    """Maximize ``c^T x`` under headroom and power only (VBAPS dropped).

    When no loudspeaker points into the steering half-plane (``max c <= 0``)
    the convex optimum is ``x = 0``; the zero solution is then replaced by the
    single loudspeaker with the largest ``c_i``, scaled onto the power budget
    (or its headroom). That is the maximizer of ``c^T x / sum(x)`` there. The
    reported sensitivity is ``c^T x / sum(x)`` and may be negative.
    """
    c = problem.c
    n = problem.n
    if c.max() <= 0:
        i = int(np.argmax(c))
        kii = problem.K[i, i]
        amp = problem.tau[i] if kii <= 0 else min(problem.tau[i], math.sqrt(problem.rho / kii))
        x = np.zeros(n)
        x[i] = amp
        return _finish(problem, x, "relaxed_fallback", 0.0, "relaxed", 0)
    kind, w = _power_structure(problem.K)
    G = [-np.eye(n), np.eye(n)]
    h = [np.zeros(n), problem.tau]
    P, r = None, 0.0
    sr = math.sqrt(problem.rho)
    if kind == "linear":
        G += [w[None, :], -w[None, :]]
        h += [np.array([sr]), np.array([sr])]
    elif kind == "quadratic":
        P, r = problem.K, problem.rho
    prog = _Program(2 * RIDGE * np.eye(n), -c, np.vstack(G), np.concatenate(h),
                    np.zeros((0, n)), np.zeros(0), P, r)
    z, kkt, iters = _solve_program(prog)
    return _finish(problem, z, "relaxed_fallback", kkt, "relaxed", iters)
