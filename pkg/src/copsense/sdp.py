"""First-order conic solver for small dense semidefinite programs.

Problems are assembled with :class:`SdpProblem` (scalar variables with box
bounds plus symmetric matrix blocks tagged ``psd``, ``nn``, ``dnn`` or
``free``) and solved by scaled ADMM on ``min c'x, Ax = b, x in K``.  The cone
``K`` is written as an intersection of simple sets, each receiving its own
consensus copy, so the doubly nonnegative cone costs one eigendecomposition
and one clip per iteration.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import NumericsError

__all__ = [
    "Cone",
    "SdpProblem",
    "SdpOutcome",
    "SdpStatus",
    "solve_sdp",
    "extract_equality_duals",
    "svec",
    "smat",
]


class Cone(str, enum.Enum):
    PSD = "psd"
    NN = "nn"
    DNN = "dnn"
    FREE = "free"


class SdpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


_SQ2 = math.sqrt(2.0)


def _tri(d):
    return np.triu_indices(d)


def svec(M) -> np.ndarray:
    """Upper triangle with off-diagonals scaled by sqrt(2), so ``svec(A) @ svec(B) = <A, B>``."""
    M = np.asarray(M, dtype=float)
    iu = _tri(M.shape[0])
    v = M[iu].copy()
    v[iu[0] != iu[1]] *= _SQ2
    return v


def smat(v, d) -> np.ndarray:
    iu = _tri(d)
    w = np.asarray(v, dtype=float).copy()
    off = iu[0] != iu[1]
    w[off] /= _SQ2
    M = np.zeros((d, d))
    M[iu] = w
    M[(iu[1], iu[0])] = w
    return M


@dataclass
class _Block:
    dim: int
    cone: Cone
    cost: np.ndarray
    offset: int = 0

    @property
    def size(self):
        return self.dim * (self.dim + 1) // 2


class SdpProblem:
    """Builder for ``min <cost, x>`` subject to linear equalities over scalars and blocks."""

    def __init__(self):
        self._c_scalar: list = []
        self._lb: list = []
        self._ub: list = []
        self.blocks: list[_Block] = []
        self._rows: list = []      # (scalar dict, block dict, rhs)
        self.row_names: list = []

    @property
    def n_scalar(self):
        return len(self._c_scalar)

    @property
    def n_rows(self):
        return len(self._rows)

    def add_scalars(self, k, cost=0.0, lb=-np.inf, ub=np.inf) -> np.ndarray:
        start = self.n_scalar
        self._c_scalar.extend(np.broadcast_to(np.asarray(cost, float), (k,)).tolist())
        self._lb.extend(np.broadcast_to(np.asarray(lb, float), (k,)).tolist())
        self._ub.extend(np.broadcast_to(np.asarray(ub, float), (k,)).tolist())
        return np.arange(start, start + k)

    def add_block(self, dim, cone, cost=None) -> int:
        cone = Cone(cone)
        C = np.zeros((dim, dim)) if cost is None else np.asarray(cost, float)
        if C.shape != (dim, dim):
            raise NumericsError("block cost has wrong shape")
        if np.abs(C - C.T).max(initial=0.0) > 1e-12 * (1 + np.abs(C).max(initial=0.0)):
            raise NumericsError("block cost is not symmetric")
        self.blocks.append(_Block(dim, cone, 0.5 * (C + C.T)))
        return len(self.blocks) - 1

    def add_row(self, scalars=None, blocks=None, rhs=0.0, name=None) -> int:
        scalars = dict(scalars or {})
        blocks = dict(blocks or {})
        for k, M in blocks.items():
            M = np.asarray(M, float)
            d = self.blocks[k].dim
            if M.shape != (d, d):
                raise NumericsError(f"row coefficient for block {k} has wrong shape")
            if np.abs(M - M.T).max(initial=0.0) > 1e-12 * (1 + np.abs(M).max(initial=0.0)):
                raise NumericsError("row coefficient matrix is not symmetric")
        self._rows.append((scalars, blocks, float(rhs)))
        self.row_names.append(name if name is not None else f"r{len(self._rows) - 1}")
        return len(self._rows) - 1

    def add_matrix_equality(self, scalar_mats=None, block_coefs=None, constant=None, dim=None,
                            name="mat"):
        """Impose ``constant + sum v_k S_k + sum coef_b X_b = 0`` entrywise (upper triangle)."""
        scalar_mats = dict(scalar_mats or {})
        block_coefs = dict(block_coefs or {})
        if dim is None:
            dim = self.blocks[next(iter(block_coefs))].dim
        K0 = np.zeros((dim, dim)) if constant is None else np.asarray(constant, float)
        rows = []
        for p, q in zip(*_tri(dim)):
            sc = {k: float(S[p, q]) for k, S in scalar_mats.items() if S[p, q] != 0.0}
            E = np.zeros((dim, dim))
            E[p, q] = E[q, p] = 1.0 if p == q else 0.5
            bl = {b: coef * E for b, coef in block_coefs.items()}
            rows.append(self.add_row(sc, bl, -float(K0[p, q]), name=f"{name}[{p},{q}]"))
        return rows

    # assembled dense data ------------------------------------------------
    def assemble(self):
        off = self.n_scalar
        for b in self.blocks:
            b.offset = off
            off += b.size
        N = off
        c = np.zeros(N)
        c[: self.n_scalar] = self._c_scalar
        for b in self.blocks:
            c[b.offset:b.offset + b.size] = svec(b.cost)
        A = np.zeros((self.n_rows, N))
        rhs = np.zeros(self.n_rows)
        for r, (sc, bl, h) in enumerate(self._rows):
            for k, v in sc.items():
                A[r, k] += v
            for k, M in bl.items():
                blk = self.blocks[k]
                A[r, blk.offset:blk.offset + blk.size] += svec(M)
            rhs[r] = h
        return c, A, rhs, N

    def objective_of(self, scalars, mats):
        val = float(np.dot(self._c_scalar, scalars)) if self.n_scalar else 0.0
        for b, X in zip(self.blocks, mats):
            val += float(np.sum(b.cost * X))
        return val


@dataclass
class SdpOutcome:
    status: SdpStatus
    scalars: np.ndarray
    blocks: list
    duals: np.ndarray
    objective: float
    dual_objective: float
    residuals: dict
    iterations: int
    row_names: list = field(default_factory=list)
    dual_slacks: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status == SdpStatus.OPTIMAL


def _proj_psd_svec(v, d, iu, off):
    M = np.zeros((d, d))
    w = v.copy()
    w[off] /= _SQ2
    M[iu] = w
    M.T[iu] = w
    lam, V = np.linalg.eigh(M)
    pos = lam > 0
    if pos.all():
        P = M
    elif not pos.any():
        return np.zeros_like(v)
    else:
        Vp = V[:, pos]
        P = (Vp * lam[pos]) @ Vp.T
    out = P[iu].copy()
    out[off] *= _SQ2
    return out


def solve_sdp(p: SdpProblem, tol: float = 1e-6, max_iter: int = 100_000, rho0: float = 1.0,
              log_path=None, alpha: float = 1.6, rho_rule: str = "double") -> SdpOutcome:
    """Scaled ADMM with one consensus copy per simple cone.

    The affine step is a projection in the metric weighted by the number of
    copies, using a factorization computed once.  Dual multipliers are
    returned in the original (unscaled) row units: ``c - A'y`` lies in the dual
    cone at convergence.
    """
    c, A, b, N = p.assemble()
    m = A.shape[0]
    lb = np.full(N, -np.inf)
    ub = np.full(N, np.inf)
    lb[: p.n_scalar] = p._lb
    ub[: p.n_scalar] = p._ub
    if np.any(lb > ub):
        raise NumericsError("scalar bounds are inconsistent")

    # copies: list of (index array, kind, block or None)
    copies = []
    copies.append((np.arange(p.n_scalar), "box", None))
    for blk in p.blocks:
        idx = np.arange(blk.offset, blk.offset + blk.size)
        if blk.cone in (Cone.PSD, Cone.DNN):
            copies.append((idx, "psd", blk))
        if blk.cone in (Cone.NN, Cone.DNN):
            copies.append((idx, "nn", blk))
        if blk.cone == Cone.FREE:
            copies.append((idx, "free", blk))
    Dw = np.zeros(N)
    for idx, _, _ in copies:
        Dw[idx] += 1.0

    # equilibration: Ruiz passes on rows and column groups (one factor per
    # matrix block keeps each cone invariant), then unit-norm rows
    groups = [np.array([j]) for j in range(p.n_scalar)]
    groups += [np.arange(blk.offset, blk.offset + blk.size) for blk in p.blocks]
    ecol = np.ones(N)
    As = A.copy()
    if m:
        for _ in range(8):
            rmax = np.abs(As).max(axis=1)
            rmax[rmax == 0] = 1.0
            As /= np.sqrt(rmax)[:, None]
            for gidx in groups:
                cm = np.abs(As[:, gidx]).max(initial=0.0)
                if cm > 0:
                    f = 1.0 / np.sqrt(cm)
                    As[:, gidx] *= f
                    ecol[gidx] *= f
    As = A * ecol
    rn = np.linalg.norm(As, axis=1)
    rn[rn == 0] = 1.0
    As = As / rn[:, None]
    bs = b / rn
    lb = lb / ecol
    ub = ub / ecol
    cs = c * ecol
    cscale = max(1.0, np.abs(cs).max(initial=0.0))
    cs = cs / cscale

    if m:
        F = (As / Dw) @ As.T
        lam, V = np.linalg.eigh(F)
        keep = lam > 1e-10 * max(lam.max(), 1e-300)
        Finv = (V[:, keep] / lam[keep]) @ V[:, keep].T
    else:
        Finv = np.zeros((0, 0))

    cache = {}
    for _, kind, blk in copies:
        if kind == "psd" and blk.dim not in cache:
            iu = _tri(blk.dim)
            cache[blk.dim] = (iu, iu[0] != iu[1])

    def proj(kind, blk, v, idx):
        if kind == "box":
            return np.clip(v, lb[idx], ub[idx])
        if kind == "nn":
            return np.maximum(v, 0.0)
        if kind == "psd":
            iu, off = cache[blk.dim]
            return _proj_psd_svec(v, blk.dim, iu, off)
        return v

    x = np.zeros(N)
    zs = [np.zeros(idx.size) for idx, _, _ in copies]
    us = [np.zeros(idx.size) for idx, _, _ in copies]
    rho = rho0
    y = np.zeros(m)
    y_prev = np.zeros(m)
    s_prev = None
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["iter", "primal_res", "dual_res", "objective"])
    status = SdpStatus.ITER_LIMIT
    res = {}
    it = 0
    cert = float("inf")
    try:
        for it in range(1, max_iter + 1):
            acc = np.zeros(N)
            for (idx, _, _), z, u in zip(copies, zs, us):
                acc[idx] += z - u
            w = (acc - cs / rho) / Dw
            if m:
                y = rho * (Finv @ (bs - As @ w))
                x = w + (As.T @ y) / (rho * Dw)
            else:
                x = w
            dz_sq = np.zeros(N)
            rp = 0.0
            for k, (idx, kind, blk) in enumerate(copies):
                xh = alpha * x[idx] + (1 - alpha) * zs[k]
                znew = proj(kind, blk, xh + us[k], idx)
                dz_sq[idx] += znew - zs[k]
                us[k] = us[k] + xh - znew
                zs[k] = znew
            check = it % 10 == 0 or it == max_iter
            if not check:
                continue
            rp = max((np.abs(x[idx] - z).max(initial=0.0) for (idx, _, _), z in zip(copies, zs)),
                     default=0.0)
            rd = rho * np.abs(dz_sq).max(initial=0.0)
            xn = max(np.abs(x).max(initial=0.0), 1.0)
            # dual objective with box support terms
            s_tot = np.zeros(N)
            for (idx, kind, blk), u in zip(copies, us):
                s_tot[idx] += -rho * u
            pobj = float(cs @ x)
            dobj = float(bs @ y)
            box_idx = copies[0][0]
            sb = s_tot[box_idx]
            lbb, ubb = lb[box_idx], ub[box_idx]
            with np.errstate(invalid="ignore"):
                term = np.where(sb > 0, sb * lbb, np.where(sb < 0, sb * ubb, 0.0))
            term = np.where(np.isnan(term), 0.0, term)
            dobj += float(term.sum()) if np.all(np.isfinite(term)) else -np.inf
            rp_rel = rp / xn
            ay = As.T @ y
            rd_rel = rd / max(1.0, np.abs(ay).max(initial=0.0))
            gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)) if np.isfinite(dobj) else np.inf
            res = {"primal": rp_rel, "dual": rd_rel, "gap": gap, "rho": rho}
            if writer is not None:
                writer.writerow([it, f"{rp_rel:.6e}", f"{rd_rel:.6e}", f"{pobj * cscale:.10e}"])
            if rp_rel <= tol and rd_rel <= tol and gap <= tol:
                status = SdpStatus.OPTIMAL
                break
            if it % 50 == 0:
                # divergence certificate for primal infeasibility
                s_now = [-rho * u for u in us]
                if s_prev is not None:
                    dy = y - y_prev
                    ndy = np.linalg.norm(dy)
                    if ndy > 1e-8 and np.linalg.norm(y) > 1e3 * (1 + np.linalg.norm(bs)):
                        cert = _infeas_residual(copies, As, dy, bs, s_now, s_prev, lb, ub, ndy)
                        if cert <= 1e-4:
                            status = SdpStatus.INFEASIBLE
                            break
                y_prev = y.copy()
                s_prev = s_now
                if rho_rule == "sqrt":
                    ratio = np.sqrt(max(rp_rel, 1e-300) / max(rd_rel, 1e-300))
                    if ratio > 3 or ratio < 1 / 3:
                        new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                        us = [u * (rho / new_rho) for u in us]
                        rho = new_rho
                elif rp_rel > 10 * rd_rel and rho < 1e6:
                    rho *= 2.0
                    us = [u / 2.0 for u in us]
                elif rd_rel > 10 * rp_rel and rho > 1e-6:
                    rho /= 2.0
                    us = [u * 2.0 for u in us]
    finally:
        if fh is not None:
            fh.close()

    # unscale
    xz = np.zeros(N)
    for (idx, _, _), z in zip(copies, zs):
        xz[idx] += z
    xz = xz / Dw * ecol
    duals = y / rn * cscale
    scal = xz[: p.n_scalar].copy()
    mats = [smat(xz[blk.offset:blk.offset + blk.size], blk.dim) for blk in p.blocks]
    slacks = []
    for (idx, kind, blk), u in zip(copies, us):
        if blk is not None and kind in ("psd", "nn"):
            slacks.append((p.blocks.index(blk), kind,
                           smat(-rho * u * cscale / ecol[idx], blk.dim)))
    pobj = float(c @ xz)
    dobj = float(b @ duals) + _box_dual_term(copies, us, rho, lb, ub) * cscale
    res = dict(res)
    res["infeasibility_certificate"] = cert
    return SdpOutcome(status, scal, mats, duals, pobj, dobj, res, it, list(p.row_names), slacks)


def _box_dual_term(copies, us, rho, lb, ub):
    idx = copies[0][0]
    s = -rho * us[0]
    total = 0.0
    for si, lo, hi in zip(s, lb[idx], ub[idx]):
        if si > 0:
            total += si * lo if np.isfinite(lo) else -np.inf
        elif si < 0:
            total += si * hi if np.isfinite(hi) else -np.inf
    return total


def _infeas_residual(copies, As, dy, bs, s_now, s_prev, lb, ub, ndy):
    """Normalized Farkas residual of the dual ray ``dy`` (inf when the ray is not improving).

    At a diverging iterate ``A'dy ~ -sum(ds_c)`` with ``ds_c`` in each dual
    cone; the ray certifies infeasibility when ``b'dy`` plus the box support
    term is positive.
    """
    N = As.shape[1]
    ds = np.zeros(N)
    for (idx, _, _), a, b in zip(copies, s_now, s_prev):
        ds[idx] += a - b
    gain = float(bs @ dy)
    idx = copies[0][0]
    dsb = ds[idx]
    with np.errstate(invalid="ignore"):
        sup = np.where(dsb > 0, dsb * lb[idx], np.where(dsb < 0, dsb * ub[idx], 0.0))
    sup = np.where(np.isnan(sup), 0.0, sup)
    gain += float(sup.sum())
    if not np.isfinite(gain) or gain <= 1e-6 * ndy:
        return float("inf")
    return float(np.abs(As.T @ dy + ds).max(initial=0.0) / gain)


def extract_equality_duals(outcome: SdpOutcome, rows) -> np.ndarray:
    """Multipliers ``mu`` with ``objective(b') >= objective(b) + mu . (rhs(b') - rhs(b))``."""
    if not outcome.optimal:
        raise NumericsError(f"cannot extract duals from a {outcome.status.value} outcome")
    rows = list(rows)
    out = []
    for r in rows:
        if isinstance(r, str):
            r = outcome.row_names.index(r)
        out.append(outcome.duals[r])
    return np.asarray(out, dtype=float)
