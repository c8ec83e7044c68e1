"""Dense linear-algebra and optimization kernels.

* :func:`sym_eigen`, :func:`project_psd` -- symmetric eigen helpers.
* :func:`solve_lp` -- two-phase revised simplex, Dantzig pricing with a
  Bland fallback once degenerate pivots pile up.
* :func:`solve_qp` -- convex QP by operator splitting (OSQP-style ADMM on the
  stacked equality/box constraints) with active-set polishing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

__all__ = [
    "Tolerances",
    "TOL",
    "Status",
    "LpProblem",
    "QpProblem",
    "SolveOutcome",
    "NumericsError",
    "sym_eigen",
    "project_psd",
    "min_eig",
    "solve_lp",
    "solve_qp",
]


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-10
    lp_feas: float = 1e-9
    lp_opt: float = 1e-9
    lp_pivot: float = 1e-9
    qp_psd: float = 1e-7
    qp_eps: float = 1e-6
    qp_max_iter: int = 200_000
    qp_rho_interval: int = 25
    psd_eig: float = 1e-9


TOL = Tolerances()


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


class NumericsError(ValueError):
    pass


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None      # one per equality row
    objective: float = float("nan")
    bound_duals: np.ndarray | None = None  # QP only: mu_upper - mu_lower per column
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


# ----------------------------------------------------------------------------
# eigen helpers

def _check_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NumericsError(f"expected a square matrix, got shape {M.shape}")
    scale = 1.0 + np.abs(M).max(initial=0.0)
    if np.abs(M - M.T).max(initial=0.0) > TOL.symmetry * scale:
        raise NumericsError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def sym_eigen(M):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    M = _check_symmetric(M)
    return np.linalg.eigh(M)


def min_eig(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def project_psd(M) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clipping)."""
    w, V = sym_eigen(M)
    keep = w > 0
    if keep.all():
        return 0.5 * (M + M.T)
    Vk = V[:, keep]
    P = (Vk * w[keep]) @ Vk.T
    return 0.5 * (P + P.T)


# ----------------------------------------------------------------------------
# linear programming

@dataclass(frozen=True)
class LpProblem:
    """``min g'z`` s.t. ``E z = h``, ``z >= 0`` except columns flagged free."""

    g: np.ndarray
    E: np.ndarray
    h: np.ndarray
    free: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        E = np.asarray(self.E, dtype=float).reshape(-1, g.size)
        h = np.asarray(self.h, dtype=float).ravel()
        if h.size != E.shape[0]:
            raise NumericsError(f"E has {E.shape[0]} rows but h has {h.size} entries")
        free = np.zeros(g.size, bool) if self.free is None else np.asarray(self.free, bool)
        if free.size != g.size:
            raise NumericsError("free mask length differs from number of columns")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "free", free)


class _Simplex:
    """Bounded-size dense revised simplex on ``min g'x, Ex = h, x >= 0`` with ``h >= 0``."""

    def __init__(self, E, h, max_iter):
        self.E = E
        self.h = h
        self.m, self.n = E.shape
        self.max_iter = max_iter
        self.iterations = 0

    def run(self, g, basis, allowed):
        """Optimize from a feasible basis; returns ('optimal'|'unbounded'|'iterlimit', basis)."""
        E, h, m = self.E, self.h, self.m
        basis = list(basis)
        Binv = np.linalg.inv(E[:, basis])
        degenerate = 0
        bland = False
        limit = 3 * (self.m + self.n)
        since_refactor = 0
        nonbasic_mask = allowed.copy()
        nonbasic_mask[basis] = False
        while True:
            if self.iterations >= self.max_iter:
                return "iterlimit", basis
            if since_refactor >= 40:
                Binv = np.linalg.inv(E[:, basis])
                since_refactor = 0
            xB = Binv @ h
            y = g[basis] @ Binv
            d = g - y @ E
            scale = 1.0 + np.abs(g).max(initial=0.0)
            cand = np.flatnonzero(nonbasic_mask & (d < -TOL.lp_opt * scale))
            if cand.size == 0:
                return "optimal", basis
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            u = Binv @ E[:, q]
            pos = u > TOL.lp_pivot
            if not pos.any():
                return "unbounded", basis
            xBc = np.maximum(xB, 0.0)
            ratios = np.full(m, np.inf)
            ratios[pos] = xBc[pos] / u[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + 1e-12 * (1.0 + rmin))
            if bland:
                r = int(ties[np.argmin(np.asarray(basis)[ties])])
            else:
                r = int(ties[np.argmax(u[ties])])
            if rmin <= 1e-12:
                degenerate += 1
                if degenerate > limit:
                    bland = True
            else:
                degenerate = 0
            # eta update of the explicit inverse
            piv = u[r]
            row_r = Binv[r] / piv
            Binv -= np.outer(u, row_r)
            Binv[r] = row_r
            nonbasic_mask[basis[r]] = allowed[basis[r]]
            nonbasic_mask[q] = False
            basis[r] = q
            self.iterations += 1
            since_refactor += 1


def solve_lp(p: LpProblem, max_iter: int | None = None) -> SolveOutcome:
    """Two-phase revised simplex.

    Returns primal ``x``, equality duals ``y`` with ``g - E'y >= 0`` on
    nonnegative columns (``= 0`` on free ones) and objective ``g'x = h'y`` at
    optimality.
    """
    g, E, h, free = p.g, p.E, p.h, p.free
    m0, n0 = E.shape
    # split free columns into a difference of nonnegatives
    fidx = np.flatnonzero(free)
    Ef = np.hstack([E, -E[:, fidx]]) if fidx.size else E
    gf = np.concatenate([g, -g[fidx]]) if fidx.size else g
    n = Ef.shape[1]
    sign = np.where(h < 0, -1.0, 1.0)
    Es = Ef * sign[:, None]
    hs = h * sign
    if max_iter is None:
        max_iter = 50 * (m0 + n) + 1000

    if m0 == 0:
        if np.any(gf < -TOL.lp_opt):
            return SolveOutcome(Status.UNBOUNDED)
        return SolveOutcome(Status.OPTIMAL, np.zeros(n0), np.zeros(0), 0.0)

    # phase 1 on [Es I]
    E1 = np.hstack([Es, np.eye(m0)])
    g1 = np.concatenate([np.zeros(n), np.ones(m0)])
    sx = _Simplex(E1, hs, max_iter)
    allowed = np.ones(n + m0, bool)
    status, basis = sx.run(g1, list(range(n, n + m0)), allowed)
    if status == "iterlimit":
        return SolveOutcome(Status.ITER_LIMIT, iterations=sx.iterations)
    Binv = np.linalg.inv(E1[:, basis])
    xB = Binv @ hs
    infeas = sum(xB[k] for k, j in enumerate(basis) if j >= n)
    if infeas > TOL.lp_feas * (1.0 + np.abs(hs).max()) * 10:
        return SolveOutcome(Status.INFEASIBLE, iterations=sx.iterations,
                            info={"phase1": float(infeas)})

    # drive artificials out; rows where that is impossible are redundant
    keep_rows = list(range(m0))
    changed = True
    while changed:
        changed = False
        for k, j in enumerate(basis):
            if j < n:
                continue
            row = Binv[k] @ E1[:, :n]
            row[basis_arr := np.asarray([b for b in basis if b < n], dtype=int)] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                q = int(cand[np.argmax(np.abs(row[cand]))])
                basis[k] = q
                Binv = np.linalg.inv(E1[:, basis])
                changed = True
                break
    art_rows = [k for k, j in enumerate(basis) if j >= n]
    if art_rows:
        # the artificial in basis slot k covers the constraint row it was created for
        drop = sorted(basis[k] - n for k in art_rows)
        keep_rows = [i for i in range(m0) if i not in set(drop)]
        basis = [j for j in basis if j < n]
    E2 = Es[keep_rows]
    h2 = hs[keep_rows]
    if len(keep_rows) == 0:
        if np.any(gf < -TOL.lp_opt):
            return SolveOutcome(Status.UNBOUNDED, iterations=sx.iterations)
        y = np.zeros(m0)
        return SolveOutcome(Status.OPTIMAL, np.zeros(n0), y, 0.0, iterations=sx.iterations)
    sx2 = _Simplex(E2, h2, max_iter)
    sx2.iterations = sx.iterations
    status, basis = sx2.run(gf, basis, np.ones(n, bool))
    if status == "iterlimit":
        return SolveOutcome(Status.ITER_LIMIT, iterations=sx2.iterations)
    if status == "unbounded":
        return SolveOutcome(Status.UNBOUNDED, iterations=sx2.iterations)
    B = E2[:, basis]
    xB = np.linalg.solve(B, h2)
    xB = np.where(np.abs(xB) < 1e-13, 0.0, xB)
    xB = np.maximum(xB, 0.0)
    x = np.zeros(n)
    x[basis] = xB
    y2 = np.linalg.solve(B.T, gf[basis])
    y = np.zeros(m0)
    y[keep_rows] = y2
    y *= sign
    z = x[:n0].copy()
    if fidx.size:
        z[fidx] -= x[n0:]
    obj = float(g @ z)
    return SolveOutcome(Status.OPTIMAL, z, y, obj, iterations=sx2.iterations,
                        info={"basis": basis})


def lp_with_bounds(g, E, h, lower, upper, max_iter=None) -> SolveOutcome:
    """``min g'z`` s.t. ``Ez = h``, ``lower <= z <= upper`` (bounds may be infinite).

    Duals of the equality rows are returned in ``duals`` and ``bound_duals``
    holds ``mu_upper - mu_lower`` so that ``g = E'duals - bound_duals``.
    """
    g = np.asarray(g, float)
    E = np.asarray(E, float).reshape(-1, g.size)
    h = np.asarray(h, float)
    lo = np.asarray(lower, float)
    up = np.asarray(upper, float)
    n = g.size
    m = E.shape[0]
    if np.any(lo > up):
        return SolveOutcome(Status.INFEASIBLE)
    # shift finite lower bounds to zero; free columns for -inf lower
    lo_f = np.isfinite(lo)
    up_f = np.isfinite(up)
    shift = np.where(lo_f, lo, 0.0)
    # columns with lower=-inf but finite upper: substitute z = up - z'
    flip = (~lo_f) & up_f
    col_sign = np.where(flip, -1.0, 1.0)
    base = np.where(flip, up, shift)
    free = (~lo_f) & (~up_f)
    # upper bound rows for columns with both bounds finite
    ub_cols = np.flatnonzero(lo_f & up_f)
    Ecols = E * col_sign
    h1 = h - E @ base
    k = ub_cols.size
    E_big = np.zeros((m + k, n + k))
    E_big[:m, :n] = Ecols
    for t, j in enumerate(ub_cols):
        E_big[m + t, j] = 1.0
        E_big[m + t, n + t] = 1.0
    h_big = np.concatenate([h1, up[ub_cols] - lo[ub_cols]])
    g_big = np.concatenate([g * col_sign, np.zeros(k)])
    free_big = np.concatenate([free, np.zeros(k, bool)])
    out = solve_lp(LpProblem(g_big, E_big, h_big, free_big), max_iter=max_iter)
    if not out.optimal:
        return out
    z = base + col_sign * out.x[:n]
    y = out.duals[:m]
    yb = out.duals[m:]
    # stationarity: g = E'y + (bound terms); report mu_upper - mu_lower = E'y - g
    reduced = E.T @ y - g
    res = SolveOutcome(Status.OPTIMAL, z, y, float(g @ z), bound_duals=reduced,
                       iterations=out.iterations)
    res.info["ub_duals"] = yb
    return res


# ----------------------------------------------------------------------------
# quadratic programming

@dataclass(frozen=True)
class QpProblem:
    """``min z'Pz + 2q'z`` s.t. ``E z = h``, ``lower <= z <= upper``."""

    P: np.ndarray
    q: np.ndarray
    E: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.size
        P = np.asarray(self.P, dtype=float).reshape(n, n)
        E = np.asarray(self.E, dtype=float).reshape(-1, n)
        h = np.asarray(self.h, dtype=float).ravel()
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        up = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if h.size != E.shape[0]:
            raise NumericsError("E and h disagree")
        if np.abs(P - P.T).max(initial=0.0) > TOL.symmetry * (1 + np.abs(P).max(initial=0.0)):
            raise NumericsError("P is not symmetric")
        for name, val in (("P", 0.5 * (P + P.T)), ("q", q), ("E", E), ("h", h),
                          ("lower", lo), ("upper", up)):
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.q.size

    def objective(self, z):
        return float(z @ self.P @ z + 2.0 * self.q @ z)


def _recession_unbounded(p: QpProblem) -> bool:
    """Is there ``d`` with ``Ed = 0``, ``Pd = 0``, ``d`` in the box's recession cone, ``q'd < 0``?"""
    n = p.n
    lo = np.where(np.isfinite(p.lower), 0.0, -1.0)
    up = np.where(np.isfinite(p.upper), 0.0, 1.0)
    if not np.any(lo < up):
        return False
    rows = [p.E]
    if np.any(p.P):
        rows.append(p.P)
    Erec = np.vstack(rows)
    out = lp_with_bounds(p.q, Erec, np.zeros(Erec.shape[0]), lo, up)
    return out.optimal and out.objective < -1e-9 * (1.0 + np.abs(p.q).max(initial=0.0))


def solve_qp(p: QpProblem, eps: float | None = None, max_iter: int | None = None,
             x0=None, method: str = "auto") -> SolveOutcome:
    """Convex QP ``min z'Pz + 2q'z`` s.t. ``Ez = h``, ``lower <= z <= upper``.

    ``method="auto"`` runs a primal active-set method from a feasible vertex
    and falls back to operator-splitting ADMM (with polishing) when that
    stalls or its KKT residual is too large.  ``"admm"`` and ``"active"``
    force one path.  Duals follow ``2Pz + 2q = E'duals - bound_duals``, so
    ``duals`` is the gradient of the optimal value with respect to ``h``.
    """
    out = _solve_qp_half(p, eps, max_iter, x0, method)
    if out.duals is not None:
        out.duals = 2.0 * np.asarray(out.duals, float)
    if out.bound_duals is not None:
        out.bound_duals = 2.0 * np.asarray(out.bound_duals, float)
    return out


def _solve_qp_half(p: QpProblem, eps, max_iter, x0, method) -> SolveOutcome:
    # internal convention: Pz + q = E'duals - bound_duals
    eps = TOL.qp_eps if eps is None else eps
    max_iter = TOL.qp_max_iter if max_iter is None else max_iter
    n = p.n
    P, q, E, h = p.P, p.q, p.E, p.h
    pscale = 1.0 + np.abs(P).max(initial=0.0)
    if n and min_eig(P) < -TOL.qp_psd * pscale:
        raise NumericsError("P is not positive semidefinite")
    if not np.any(np.abs(P) > 1e-14 * pscale):
        out = lp_with_bounds(2.0 * q, E, h, p.lower, p.upper)
        if out.optimal:
            out.duals = out.duals / 2.0
            out.bound_duals = out.bound_duals / 2.0
        return out

    feas = lp_with_bounds(np.zeros(n), E, h, p.lower, p.upper)
    if feas.status == Status.INFEASIBLE:
        return SolveOutcome(Status.INFEASIBLE)
    if not feas.optimal:
        return feas
    if _recession_unbounded(p):
        return SolveOutcome(Status.UNBOUNDED)
    start = feas.x if x0 is None else np.asarray(x0, float)
    if method == "active":
        return _active_set_qp(p, feas.x)
    if method == "admm":
        return _admm_qp(p, start, eps, max_iter)
    try:
        fin = _active_set_qp(p, feas.x)
        if fin.status is not Status.OPTIMAL or fin.info["kkt"] <= eps:
            if fin.status is not Status.ITER_LIMIT:
                return fin
    except NumericsError:
        pass
    return _admm_qp(p, start, eps, max_iter)


def _active_set_qp(p: QpProblem, x, max_iter: int | None = None) -> SolveOutcome:
    """Primal active-set method on bound constraints (equalities always active).

    Minimizes ``z'Pz + 2q'z``; ``x`` must be feasible.  Zero-curvature
    directions are followed with a ratio test, so singular ``P`` is fine.
    """
    n = p.n
    m = p.E.shape[0]
    G = 2.0 * p.P
    d = 2.0 * p.q
    lo, up = p.lower, p.upper
    x = np.clip(np.asarray(x, float).copy(), lo, up)
    fixed = lo == up
    # working set: -1 at lower, +1 at upper, 0 free
    W = np.zeros(n, int)
    W[fixed] = -1
    atol = 1e-9
    W[(~fixed) & np.isfinite(lo) & (x - lo <= atol)] = -1
    W[(~fixed) & np.isfinite(up) & (up - x <= atol)] = 1
    max_iter = 20 * (n + m) + 200 if max_iter is None else max_iter
    gscale = 1.0 + np.abs(d).max(initial=0.0) + np.abs(G).max(initial=0.0)
    it = 0
    lam = np.zeros(m)
    while it < max_iter:
        it += 1
        g = G @ x + d
        F = W == 0
        nf = int(F.sum())
        EF = p.E[:, F]
        K = np.zeros((nf + m, nf + m))
        K[:nf, :nf] = G[np.ix_(F, F)]
        K[:nf, nf:] = -EF.T
        K[nf:, :nf] = EF
        rhs = np.concatenate([-g[F], np.zeros(m)])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=1e-12)
        consistent = np.abs(K @ sol - rhs).max(initial=0.0) <= 1e-9 * gscale * (1 + np.abs(sol).max(initial=0.0))
        step = np.zeros(n)
        if consistent:
            step[F] = sol[:nf]
            lam = sol[nf:]
        else:
            # descent direction of zero curvature inside the null space of [G_FF; E_F]
            Z = _null_space(np.vstack([G[np.ix_(F, F)], EF])) if nf else np.zeros((0, 0))
            if Z.size == 0:
                raise NumericsError("active-set KKT system is inconsistent")
            dir_f = -Z @ (Z.T @ g[F])
            step[F] = dir_f
        if np.abs(step).max(initial=0.0) <= 1e-11 * (1 + np.abs(x).max(initial=0.0)):
            # multipliers of the working bounds: g - E'lam = mu_lo - mu_up
            r = g - p.E.T @ lam
            viol = np.zeros(n)
            viol[(W == -1) & ~fixed] = -r[(W == -1) & ~fixed]   # lower needs r >= 0
            viol[W == 1] = r[W == 1]                             # upper needs r <= 0
            k = int(np.argmax(viol))
            if viol[k] <= 1e-9 * gscale:
                bd = np.where(W != 0, -r, 0.0)                  # mu_up - mu_lo
                out = SolveOutcome(Status.OPTIMAL, x, lam / 2.0, p.objective(x),
                                   bound_duals=bd / 2.0, iterations=it)
                out.info["kkt"] = _kkt_half(p, out)
                out.info["method"] = "active-set"
                return out
            W[k] = 0
            continue
        # ratio test along step for free variables
        alpha = 1.0 if consistent else np.inf
        block = -1
        for j in np.flatnonzero(F):
            sj = step[j]
            if sj < -1e-14 and np.isfinite(lo[j]):
                a = (lo[j] - x[j]) / sj
            elif sj > 1e-14 and np.isfinite(up[j]):
                a = (up[j] - x[j]) / sj
            else:
                continue
            if a < alpha:
                alpha, block = max(a, 0.0), j
        if not np.isfinite(alpha):
            return SolveOutcome(Status.UNBOUNDED, iterations=it)
        x = x + alpha * step
        if block >= 0:
            if step[block] < 0:
                x[block] = lo[block]
                W[block] = -1
            else:
                x[block] = up[block]
                W[block] = 1
    return SolveOutcome(Status.ITER_LIMIT, x, iterations=it)


def _null_space(M, rtol=1e-10):
    if M.shape[1] == 0:
        return np.zeros((0, 0))
    u, s, vt = np.linalg.svd(M)
    tol = rtol * max(s.max(initial=0.0), 1.0)
    rank = int((s > tol).sum())
    return vt[rank:].T


def _admm_qp(p: QpProblem, x, eps, max_iter) -> SolveOutcome:
    n = p.n
    m = p.E.shape[0]
    Pt = 2.0 * p.P
    qt = 2.0 * p.q
    Abar = np.vstack([p.E, np.eye(n)])
    l = np.concatenate([p.h, p.lower])
    u = np.concatenate([p.h, p.upper])
    eq = np.concatenate([np.ones(m, bool), p.lower == p.upper])
    sigma = 1e-6
    alpha = 1.6
    rho = 0.1
    z = np.clip(Abar @ x, l, u)
    y = np.zeros(m + n)

    def rho_vec(r):
        return np.where(eq, 1e3 * r, r)

    def factor(r):
        R = rho_vec(r)
        K = Pt + sigma * np.eye(n) + (Abar.T * R) @ Abar
        return R, sla.cho_factor(K)

    R, cf = factor(rho)
    it = 0
    interval = TOL.qp_rho_interval
    polish_every = 25
    best = None
    while it < max_iter:
        it += 1
        rhs = sigma * x - qt + Abar.T @ (R * z - y)
        xt = sla.cho_solve(cf, rhs)
        zt = Abar @ xt
        x = alpha * xt + (1 - alpha) * x
        zr = alpha * zt + (1 - alpha) * z
        z_new = np.clip(zr + y / R, l, u)
        y = y + R * (zr - z_new)
        z = z_new
        if it % interval == 0 or it == max_iter:
            Ax = Abar @ x
            r_p = np.abs(Ax - z).max()
            Px = Pt @ x
            Aty = Abar.T @ y
            r_d = np.abs(Px + qt + Aty).max()
            sp = max(np.abs(Ax).max(), np.abs(z).max(), 1e-12)
            sd = max(np.abs(Px).max(), np.abs(Aty).max(), np.abs(qt).max(), 1e-12)
            if it % polish_every == 0 and r_p < 1e-3 * (1 + sp) and r_d < 1e-3 * (1 + sd):
                pol = _polish(p, x, z, y, l, u)
                if pol is not None:
                    pol.iterations = it
                    return pol
            if r_p <= eps * (1 + sp) * 1e-2 and r_d <= eps * (1 + sd) * 1e-2:
                best = (x.copy(), y.copy())
                break
            new_rho = rho * np.sqrt((r_p / sp) / max(r_d / sd, 1e-30))
            new_rho = float(np.clip(new_rho, 1e-6, 1e6))
            if new_rho > 5 * rho or new_rho < rho / 5:
                rho = new_rho
                R, cf = factor(rho)
    if best is None:
        res = _finish(p, x, y, l, u)
        res.status = Status.ITER_LIMIT if res.info["kkt"] > eps else Status.OPTIMAL
        res.iterations = it
        return res
    res = _finish(p, best[0], best[1], l, u)
    res.iterations = it
    return res


def _finish(p, x, y, l, u):
    m = p.E.shape[0]
    x = np.clip(x, p.lower, p.upper)
    duals = -y[:m] / 2.0
    bd = y[m:] / 2.0
    res = SolveOutcome(Status.OPTIMAL, x, duals, p.objective(x), bound_duals=bd)
    res.info["kkt"] = _kkt_half(p, res)
    return res


def _polish(p: QpProblem, x, z, y, l, u):
    """Solve the equality-constrained KKT system on the guessed active set."""
    n = p.n
    m = p.E.shape[0]
    zb = z[m:]
    yb = y[m:]
    at_lo = (zb - p.lower < -yb) & np.isfinite(p.lower)
    at_up = (p.upper - zb < yb) & np.isfinite(p.upper)
    fixed = at_lo | at_up
    vals = np.where(at_lo, p.lower, p.upper)
    free = ~fixed
    Pt = 2.0 * p.P
    qt = 2.0 * p.q
    nf = int(free.sum())
    Ef = p.E[:, free]
    rhs_h = p.h - p.E[:, fixed] @ vals[fixed]
    K = np.zeros((nf + m, nf + m))
    K[:nf, :nf] = Pt[np.ix_(free, free)]
    K[:nf, nf:] = Ef.T
    K[nf:, :nf] = Ef
    r1 = -qt[free] - Pt[np.ix_(free, fixed)] @ vals[fixed]
    rhs = np.concatenate([r1, rhs_h])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=1e-12)
    xs = np.empty(n)
    xs[fixed] = vals[fixed]
    xs[free] = sol[:nf]
    lam = sol[nf:]           # Pt x + qt + E' lam = 0 on free columns
    tol = 1e-9 * (1 + np.abs(xs).max(initial=0.0))
    if np.any(xs < p.lower - tol) or np.any(xs > p.upper + tol):
        return None
    if np.abs(p.E @ xs - p.h).max(initial=0.0) > 1e-9 * (1 + np.abs(p.h).max(initial=0.0)):
        return None
    grad = Pt @ xs + qt + p.E.T @ lam
    # bound multipliers: grad + mu_up - mu_lo = 0
    mu = -grad
    dtol = 1e-8 * (1 + np.abs(qt).max(initial=0.0) + np.abs(lam).max(initial=0.0))
    if np.any(np.abs(mu[free]) > dtol * 10):
        return None
    if np.any(mu[at_lo & ~at_up] > dtol) or np.any(mu[at_up & ~at_lo] < -dtol):
        return None
    mu[free] = 0.0
    xs = np.clip(xs, p.lower, p.upper)
    res = SolveOutcome(Status.OPTIMAL, xs, -lam / 2.0, p.objective(xs), bound_duals=mu / 2.0)
    res.info["kkt"] = _kkt_half(p, res)
    res.info["polished"] = True
    if res.info["kkt"] > 1e-7:
        return None
    return res


def qp_kkt_residual(p: QpProblem, out: SolveOutcome) -> float:
    """Max of primal, stationarity and complementarity residuals (scaled).

    ``out`` uses the public convention ``2Pz + 2q = E'duals - bound_duals``.
    """
    half = SolveOutcome(out.status, out.x, np.asarray(out.duals) / 2.0, out.objective,
                        bound_duals=np.asarray(out.bound_duals) / 2.0)
    return _kkt_half(p, half)


def _kkt_half(p: QpProblem, out: SolveOutcome) -> float:
    x = out.x
    lam = out.duals
    mu = out.bound_duals
    prim = np.abs(p.E @ x - p.h).max(initial=0.0)
    prim = max(prim, np.maximum(p.lower - x, 0).max(initial=0.0),
               np.maximum(x - p.upper, 0).max(initial=0.0))
    stat = 2 * p.P @ x + 2 * p.q - p.E.T @ lam * 2 + 2 * mu
    scale = 1 + np.abs(p.q).max(initial=0.0) + np.abs(lam).max(initial=0.0)
    dual = np.abs(stat).max(initial=0.0) / scale
    mu_up = np.maximum(mu, 0)
    mu_lo = np.maximum(-mu, 0)
    fin_up = np.isfinite(p.upper)
    fin_lo = np.isfinite(p.lower)
    comp = max((mu_up[fin_up] * (p.upper - x)[fin_up]).max(initial=0.0),
               (mu_lo[fin_lo] * (x - p.lower)[fin_lo]).max(initial=0.0),
               mu_up[~fin_up].max(initial=0.0), mu_lo[~fin_lo].max(initial=0.0))
    return float(max(prim, dual, comp / scale))
