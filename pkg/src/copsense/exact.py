"""Ground-truth solvers: depth-first branch and bound, continuous relaxation,
the local-stability probe and an edge-coloring backtracker."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import Graph, MbqpInstance
from .numerics import (LpProblem, NumericsError, QpProblem, Status, lp_with_bounds,
                       min_eig, solve_lp, solve_qp)

__all__ = [
    "ExactStatus",
    "ExactResult",
    "ExactError",
    "ContResult",
    "ZetaResult",
    "solve_exact",
    "solve_cont",
    "zeta_probe",
    "zeta_divergence_probe",
    "chromatic_index",
    "is_bounded",
    "enumerate_binary",
]

DEFAULT_NODE_BUDGET = 2_000_000
_INT_TOL = 1e-7


class ExactStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    BUDGET = "BudgetExceeded"


class ExactError(ValueError):
    """Instance outside the solver's guarantees (nonconvex continuous part)."""


@dataclass
class ExactResult:
    status: ExactStatus
    z: float = float("nan")
    x: np.ndarray | None = None
    nodes: int = 0

    @property
    def optimal(self):
        return self.status == ExactStatus.OPTIMAL


def _convexify(inst: MbqpInstance):
    """Objective data valid on binary points and convex on the relaxation.

    Returns ``(P, q)``.  For PSD ``Q`` this is ``(Q, c)``.  If ``Q`` is
    indefinite but supported on binary columns only, ``x_j^2 = x_j`` lets us
    shift the diagonal: ``x'(Q + lam D)x + 2(c - lam/2 e_B)'x`` agrees on
    binary points and underestimates on ``[0, 1]``.
    """
    Q, c = inst.Q, inst.c
    if inst.n == 0 or min_eig(Q) >= -1e-9 * (1 + np.abs(Q).max(initial=0.0)):
        return Q, c, False
    cont = list(inst.continuous)
    if cont and np.abs(Q[:, cont]).max(initial=0.0) > 0:
        raise ExactError("indefinite Q touching continuous variables is not supported")
    B = list(inst.binaries)
    lam = max(0.0, -min_eig(Q[np.ix_(B, B)])) + 1e-9
    P = Q.copy()
    P[B, B] += lam
    q = c.copy()
    q[B] -= lam / 2.0
    return P, q, True


def _node_qp(inst, P, q, lo, up):
    return QpProblem(P, q, inst.A, inst.b, lo, up)


def _bounds(inst, fixed):
    n = inst.n
    lo = np.zeros(n)
    up = np.full(n, np.inf)
    for j in inst.binaries:
        up[j] = 1.0
    for j, v in fixed.items():
        lo[j] = up[j] = float(v)
    return lo, up


def solve_exact(inst: MbqpInstance, node_budget: int = DEFAULT_NODE_BUDGET,
                prune: bool = True) -> ExactResult:
    """Depth-first branch and bound over the binaries.

    Branches on the lowest unfixed binary, 0 before 1, pruning with the
    continuous relaxation of the partially fixed problem.
    """
    P, q, shifted = _convexify(inst)
    B = list(inst.binaries)
    best = ExactResult(ExactStatus.INFEASIBLE)
    nodes = 0
    stack = [dict()]
    while stack:
        fixed = stack.pop()
        if nodes >= node_budget:
            best.status = ExactStatus.BUDGET
            best.nodes = nodes
            return best
        leaf = len(fixed) == len(B)
        if not prune and not leaf:
            j = B[len(fixed)]
            stack.append({**fixed, j: 1})
            stack.append({**fixed, j: 0})
            continue
        nodes += 1
        lo, up = _bounds(inst, fixed)
        out = solve_qp(_node_qp(inst, P, q, lo, up))
        if out.status == Status.INFEASIBLE:
            continue
        if out.status == Status.UNBOUNDED:
            if leaf:
                return ExactResult(ExactStatus.UNBOUNDED, -np.inf, None, nodes)
        elif not out.optimal:
            raise NumericsError(f"node relaxation returned {out.status.value}")
        else:
            bound = out.objective
            if best.x is not None and bound >= best.z - 1e-9 * (1 + abs(best.z)):
                continue
            x = out.x
            frac = [j for j in B if j not in fixed and min(x[j], 1 - x[j]) > _INT_TOL]
            if leaf or not frac:
                xr = x.copy()
                for j in B:
                    xr[j] = round(xr[j])
                if not leaf:
                    # re-solve with binaries pinned so the continuous part is exact
                    lo2, up2 = _bounds(inst, {j: xr[j] for j in B})
                    out2 = solve_qp(_node_qp(inst, P, q, lo2, up2))
                    nodes += 1
                    if not out2.optimal:
                        frac = [j for j in B if j not in fixed]
                    else:
                        xr = out2.x.copy()
                        for j in B:
                            xr[j] = round(xr[j])
                if leaf or not frac:
                    val = inst.objective(xr)
                    if best.x is None or val < best.z:
                        best = ExactResult(ExactStatus.OPTIMAL, val, xr, nodes)
                    continue
        if leaf:
            continue
        j = next(k for k in B if k not in fixed)
        stack.append({**fixed, j: 1})
        stack.append({**fixed, j: 0})
    best.nodes = nodes
    if best.x is not None:
        best.status = ExactStatus.OPTIMAL
    return best


def enumerate_binary(inst: MbqpInstance):
    """Brute-force minimum over all binary patterns (each pattern a convex QP)."""
    return solve_exact(inst, node_budget=1 << 30, prune=False)


@dataclass
class ContResult:
    status: Status
    value: float
    duals: np.ndarray | None
    x: np.ndarray | None

    def predict(self, delta_b) -> float:
        """Fixed-multiplier lower bound at ``b + delta_b``."""
        return float(self.value + self.duals @ np.asarray(delta_b, float))


def solve_cont(inst: MbqpInstance) -> ContResult:
    """Relaxation with binaries in [0, 1]; duals are gradients of the value in ``b``."""
    if not inst.q_is_psd(1e-7):
        raise ExactError("continuous relaxation needs a PSD Q")
    lo, up = _bounds(inst, {})
    out = solve_qp(QpProblem(inst.Q, inst.c, inst.A, inst.b, lo, up))
    if not out.optimal:
        return ContResult(out.status, float("nan"), None, None)
    return ContResult(out.status, out.objective, out.duals, out.x)


def is_bounded(inst: MbqpInstance) -> bool:
    """Is the polyhedron ``{Ax = b, x >= 0}`` bounded (max e'x finite)?"""
    n = inst.n
    out = lp_with_bounds(-np.ones(n), inst.A, inst.b, np.zeros(n), np.full(n, np.inf))
    if out.status == Status.INFEASIBLE:
        return True
    return out.status == Status.OPTIMAL


# ----------------------------------------------------------------------------
# local stability

@dataclass
class ZetaResult:
    value: float
    exact: bool
    patterns: int
    argmin: tuple | None = None
    info: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _zeta_qp(inst, eps, lo_b, up_b, cap):
    """Variables ``[x, e]`` with ``Ax - e = b``, ``|e| <= eps``."""
    n, m = inst.n, inst.m
    P = np.zeros((n + m, n + m))
    P[:n, :n] = inst.Q
    q = np.concatenate([inst.c, np.zeros(m)])
    E = np.hstack([inst.A, -np.eye(m)])
    lo = np.concatenate([np.zeros(n), np.full(m, -eps)])
    up = np.concatenate([np.full(n, np.inf if cap is None else cap), np.full(m, eps)])
    for j, (a, b) in zip(inst.binaries, zip(lo_b, up_b)):
        lo[j] = max(0.0, a)
        up[j] = min(up[j], b)
    return QpProblem(P, q, E, inst.b, lo, up)


def _solve_nonconvex_small(p: QpProblem):
    """Global minimum of a tiny box-bounded indefinite QP by active-set enumeration."""
    n = p.n
    rows, rhs = [], []
    for j in range(n):
        if np.isfinite(p.lower[j]):
            r = np.zeros(n); r[j] = -1.0; rows.append(r); rhs.append(-p.lower[j])
        if np.isfinite(p.upper[j]):
            r = np.zeros(n); r[j] = 1.0; rows.append(r); rhs.append(p.upper[j])
    G = np.array(rows).reshape(-1, n)
    h = np.array(rhs)
    if len(h) > 20:
        raise ExactError("indefinite probe too large for active-set enumeration")
    best = np.inf
    arg = None
    for k in range(0, min(n, len(h)) + 1):
        for W in itertools.combinations(range(len(h)), k):
            Ew = np.vstack([p.E, G[list(W)]]) if W else p.E
            hw = np.concatenate([p.h, h[list(W)]])
            K = np.block([[2 * p.P, Ew.T], [Ew, np.zeros((Ew.shape[0], Ew.shape[0]))]])
            rhs_k = np.concatenate([-2 * p.q, hw])
            sol, *_ = np.linalg.lstsq(K, rhs_k, rcond=None)
            x = sol[:n]
            if np.abs(K @ sol - rhs_k).max() > 1e-8:
                continue
            if np.any(G @ x > h + 1e-9) or np.abs(p.E @ x - p.h).max(initial=0.0) > 1e-9:
                continue
            val = p.objective(x)
            if val < best:
                best, arg = val, x
    return best, arg


def zeta_probe(inst: MbqpInstance, eps: float, samples: int | None = None,
               max_patterns: int = 1 << 16, box_cap: float | None = None,
               seed: int = 0) -> ZetaResult:
    """``zeta(b, eps)``: best value over patterns ``w`` of the eps-relaxed problem.

    Exhaustive depth-first search with relaxation pruning when ``2^|B|`` is at
    most ``max_patterns`` (or ``samples`` is None); otherwise ``samples``
    random patterns are evaluated and the result is flagged inexact.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    convex = inst.q_is_psd(1e-9)
    B = list(inst.binaries)
    nb = len(B)

    def solve(lo_b, up_b):
        p = _zeta_qp(inst, eps, lo_b, up_b, box_cap)
        if convex:
            out = solve_qp(p)
            if out.status == Status.INFEASIBLE:
                return None, None
            if out.status == Status.UNBOUNDED:
                return -np.inf, None
            return out.objective, out.x
        if box_cap is None:
            raise ExactError("indefinite Q needs a box cap for the probe")
        val, x = _solve_nonconvex_small(p)
        return (None, None) if not np.isfinite(val) else (val, x)

    if nb and (1 << nb) > max_patterns and samples is not None:
        rng = np.random.default_rng(seed)
        best = np.inf
        arg = None
        for _ in range(samples):
            w = rng.integers(0, 2, nb)
            val, _ = solve(w - eps, w + eps)
            if val is not None and val < best:
                best, arg = val, tuple(int(t) for t in w)
        return ZetaResult(float(best), False, samples, arg, {"mode": "sampled"})

    best = np.inf
    arg = None
    count = 0
    stack = [()]
    while stack:
        w = stack.pop()
        k = len(w)
        lo_b = [wi - eps for wi in w] + [-eps] * (nb - k)
        up_b = [wi + eps for wi in w] + [1 + eps] * (nb - k)
        val, _ = solve(lo_b, up_b)
        count += 1
        if val is None or (k < nb and convex and val >= best - 1e-12):
            continue
        if k == nb:
            if val < best:
                best, arg = val, w
            continue
        stack.append(w + (1,))
        stack.append(w + (0,))
    return ZetaResult(float(best), True, count, arg, {"mode": "exhaustive"})


def zeta_divergence_probe(inst: MbqpInstance, eps: float, caps=(1e1, 1e2, 1e3, 1e4)) -> list:
    """Probe values under growing box caps; a monotone plunge signals ``zeta = -inf``."""
    return [(cap, zeta_probe(inst, eps, box_cap=cap).value) for cap in caps]


# ----------------------------------------------------------------------------
# edge coloring

@dataclass
class ChromaticResult:
    value: int | None
    interval: tuple
    nodes: int
    coloring: dict | None = None

    def __int__(self):
        if self.value is None:
            raise ValueError(f"undetermined, chromatic index in {self.interval}")
        return self.value


def _try_color(g: Graph, k: int, budget: int):
    edges = list(g.edges)
    # order edges by BFS from the highest-degree vertex so conflicts surface early
    adj = {e: [] for e in range(len(edges))}
    for a, b in itertools.combinations(range(len(edges)), 2):
        if set(edges[a]) & set(edges[b]):
            adj[a].append(b)
            adj[b].append(a)
    start = max(range(len(edges)), key=lambda e: len(adj[e]), default=None)
    order, seen = [], set()
    queue = [start] if start is not None else []
    while queue or len(order) < len(edges):
        if not queue:
            queue = [next(e for e in range(len(edges)) if e not in seen)]
        e = queue.pop(0)
        if e in seen:
            continue
        seen.add(e)
        order.append(e)
        queue.extend(sorted((f for f in adj[e] if f not in seen), key=lambda f: -len(adj[f])))
    color = {}
    nodes = 0

    def rec(pos, used):
        nonlocal nodes
        if pos == len(order):
            return True
        nodes += 1
        if nodes > budget:
            raise _Budget()
        e = order[pos]
        taken = {color[f] for f in adj[e] if f in color}
        for col in range(min(k, used + 1)):
            if col in taken:
                continue
            color[e] = col
            if rec(pos + 1, max(used, col + 1)):
                return True
            del color[e]
        return False

    ok = rec(0, 0)
    return ok, nodes, ({edges[e]: c for e, c in color.items()} if ok else None)


class _Budget(Exception):
    pass


def chromatic_index(g: Graph, budget: int = 5_000_000) -> ChromaticResult:
    """Exact chromatic index by backtracking with Delta colors first."""
    if not g.edges:
        return ChromaticResult(0, (0, 0), 0, {})
    delta = g.max_degree
    try:
        ok, nodes, col = _try_color(g, delta, budget)
    except _Budget:
        return ChromaticResult(None, (delta, delta + 1), budget)
    if ok:
        return ChromaticResult(delta, (delta, delta), nodes, col)
    try:
        ok2, n2, col2 = _try_color(g, delta + 1, budget)
    except _Budget:
        return ChromaticResult(delta + 1, (delta + 1, delta + 1), nodes + budget)
    if not ok2:
        raise AssertionError("no (Delta+1)-edge-coloring found; contradicts Vizing's theorem")
    return ChromaticResult(delta + 1, (delta + 1, delta + 1), nodes + n2, col2)
