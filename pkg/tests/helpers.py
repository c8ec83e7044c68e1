"""Random problem generators and solver-independent residual checks."""
import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from copsense.numerics import LpProblem, QpProblem
from copsense.sdp import SdpProblem


def random_lp(rng, with_free=False):
    """Feasible and bounded by construction: primal point z0, dual point y0."""
    m = int(rng.integers(1, 7))
    n = int(rng.integers(m + 1, 13))
    E = rng.normal(size=(m, n))
    z0 = rng.exponential(size=n) * (rng.random(n) < 0.7)
    free = np.zeros(n, bool)
    if with_free:
        free[rng.random(n) < 0.2] = True
        z0[free] = rng.normal(size=free.sum())
    h = E @ z0
    y0 = rng.normal(size=m)
    s = rng.exponential(size=n)
    s[free] = 0.0
    g = E.T @ y0 + s
    return LpProblem(g, E, h, free)


def random_qp(rng):
    """Feasible and bounded: a point inside the box, and either PD ``P`` or a finite box."""
    n = int(rng.integers(2, 11))
    m = int(rng.integers(0, min(n, 5)))
    k = int(rng.integers(1, n + 1))
    B = rng.normal(size=(n, k))
    P = B @ B.T
    boxed = rng.random() < 0.5
    if not boxed:
        P += 0.1 * np.eye(n)
    lo = np.where(rng.random(n) < 0.7, 0.0, -np.inf)
    up = np.where(rng.random(n) < 0.5, rng.uniform(1.0, 3.0, n), np.inf)
    if boxed:
        lo = np.where(np.isfinite(lo), lo, -2.0)
        up = np.where(np.isfinite(up), up, 4.0)
    z0 = np.clip(rng.uniform(-0.5, 1.0, n), np.where(np.isfinite(lo), lo, -1), up)
    z0 = np.clip(z0, lo + 0.1 * np.isfinite(lo), None)
    z0 = np.minimum(z0, np.where(np.isfinite(up), up - 0.05, np.inf))
    E = rng.normal(size=(m, n))
    h = E @ z0
    return QpProblem(P, rng.normal(size=n), E, h, lo, up)


def qp_kkt(p, out):
    """Stationarity, feasibility and complementarity for ``2Pz + 2q = E'y - mu``."""
    z, y, mu = out.x, out.duals, out.bound_duals
    stat = 2 * p.P @ z + 2 * p.q - p.E.T @ y + mu
    scale = 1 + np.abs(p.q).max() + np.abs(y).max(initial=0.0)
    prim = max(np.abs(p.E @ z - p.h).max(initial=0.0),
               np.maximum(p.lower - z, 0).max(), np.maximum(z - p.upper, 0).max())
    mu_up, mu_lo = np.maximum(mu, 0), np.maximum(-mu, 0)
    fin_up, fin_lo = np.isfinite(p.upper), np.isfinite(p.lower)
    comp = max((mu_up * np.where(fin_up, p.upper - z, 0)).max(),
               (mu_lo * np.where(fin_lo, z - p.lower, 0)).max(),
               mu_up[~fin_up].max(initial=0.0), mu_lo[~fin_lo].max(initial=0.0))
    return max(np.abs(stat).max() / scale, prim, comp / scale)


def random_sdp(rng):
    """``min <C, X>`` over a PSD block with ``<A_i, X> = b_i``, strictly feasible both ways."""
    d = int(rng.integers(2, 6))
    m = int(rng.integers(1, d * (d + 1) // 2))
    As = []
    for _ in range(m):
        G = rng.normal(size=(d, d))
        As.append(0.5 * (G + G.T))
    R = rng.normal(size=(d, d))
    X0 = R @ R.T + 0.1 * np.eye(d)
    S = rng.normal(size=(d, d))
    y0 = rng.normal(size=m)
    C = S @ S.T + 0.1 * np.eye(d) + sum(y * A for y, A in zip(y0, As))
    p = SdpProblem()
    blk = p.add_block(d, "psd", C)
    b = np.array([np.sum(A * X0) for A in As])
    for A, bi in zip(As, b):
        p.add_row(blocks={blk: A}, rhs=bi)
    return p, C, As, b


def sdp_residuals(C, As, b, out):
    """Scale-relative residuals computed from the raw data, not the solver's scaling."""
    X = out.blocks[0]
    y = out.duals
    ax = np.array([np.sum(A * X) for A in As])
    prim = np.abs(ax - b).max() / (1 + np.abs(b).max())
    cone_p = max(0.0, -np.linalg.eigvalsh(X)[0]) / (1 + np.abs(X).max())
    Z = C - sum(yi * A for yi, A in zip(y, As))
    dual = max(0.0, -np.linalg.eigvalsh(Z)[0]) / (1 + np.abs(C).max())
    pobj, dobj = np.sum(C * X), b @ y
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    return max(prim, cone_p, dual, gap)


def milp_value(inst):
    """Independent oracle for linear instances: HiGHS branch and cut."""
    assert not np.any(inst.Q)
    integrality = np.zeros(inst.n)
    integrality[list(inst.binaries)] = 1
    ub = np.full(inst.n, np.inf)
    ub[list(inst.binaries)] = 1.0
    res = milp(2.0 * inst.c, constraints=LinearConstraint(inst.A, inst.b, inst.b),
               integrality=integrality, bounds=Bounds(np.zeros(inst.n), ub))
    return res.fun if res.status == 0 else None
