"""MBQP instances, standard-form conversion, random generators and I/O.

An instance in standard form is

    min  x'Qx + 2c'x   s.t.  Ax = b,  x >= 0,  x_j in {0, 1} for j in binaries

with every binary bounded by a dedicated complement row ``x_j + w_j = 1``.
Indices are 0-based in Python and 1-based in the JSON files.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ModelError",
    "SlackMap",
    "MbqpInstance",
    "RawProblem",
    "Graph",
    "to_standard_form",
    "as_raw",
    "generate_comb",
    "generate_sslp",
    "generate_ssqp",
    "reduce_edge_coloring",
    "single_edge_instance",
    "gap_example_instance",
    "clique_stable_set_instance",
    "complete_graph",
    "path_graph",
    "cycle_graph",
    "petersen_graph",
    "random_graph",
    "save_instance",
    "load_instance",
    "instance_to_dict",
    "instance_from_dict",
    "save_graph",
    "load_graph",
]

RELATIONS = ("<=", "=", ">=")


class ModelError(ValueError):
    """Malformed problem data."""


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SlackMap:
    """Bookkeeping of the columns and rows added by :func:`to_standard_form`.

    ``complement`` maps a binary column to its complement slack column and
    ``complement_row`` to the row ``x_j + w_j = 1``.  ``inequality`` maps a
    raw constraint index to its slack column, and ``constraint_rows`` maps
    every raw constraint index to its row in ``A``.
    """

    n_original: int = 0
    complement: dict = field(default_factory=dict)
    complement_row: dict = field(default_factory=dict)
    inequality: dict = field(default_factory=dict)
    constraint_rows: tuple = ()

    def to_dict(self) -> dict:
        return {
            "n_original": self.n_original,
            "complement": [[j + 1, w + 1] for j, w in sorted(self.complement.items())],
            "complement_row": [[j + 1, r + 1] for j, r in sorted(self.complement_row.items())],
            "inequality": [[k + 1, s + 1] for k, s in sorted(self.inequality.items())],
            "constraint_rows": [r + 1 for r in self.constraint_rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlackMap":
        return cls(
            n_original=int(d.get("n_original", 0)),
            complement={j - 1: w - 1 for j, w in d.get("complement", [])},
            complement_row={j - 1: r - 1 for j, r in d.get("complement_row", [])},
            inequality={k - 1: s - 1 for k, s in d.get("inequality", [])},
            constraint_rows=tuple(r - 1 for r in d.get("constraint_rows", [])),
        )


@dataclass(frozen=True, eq=False)
class MbqpInstance:
    """Standard-form mixed binary quadratic program."""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    binaries: tuple = ()
    slack_map: SlackMap = field(default_factory=SlackMap)
    seed_info: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        if Q.size == 0:
            Q = np.zeros((n, n))
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, n))
        A = A.reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        if Q.shape != (n, n):
            raise ModelError(f"Q has shape {Q.shape}, expected {(n, n)}")
        if b.size != A.shape[0]:
            raise ModelError(f"b has {b.size} entries but A has {A.shape[0]} rows")
        Q = 0.5 * (Q + Q.T)
        binaries = tuple(int(j) for j in self.binaries)
        if any(j < 0 or j >= n for j in binaries):
            raise ModelError(f"binary index out of range 0..{n - 1}: {binaries}")
        if any(b2 <= b1 for b1, b2 in zip(binaries, binaries[1:])):
            raise ModelError("binary indices must be strictly increasing")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "binaries", binaries)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def continuous(self) -> tuple:
        bset = set(self.binaries)
        return tuple(j for j in range(self.n) if j not in bset)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + 2.0 * self.c @ x)

    def residual(self, x) -> float:
        """Max violation of ``Ax = b``, ``x >= 0`` and binarity."""
        x = np.asarray(x, dtype=float)
        r = np.abs(self.A @ x - self.b).max(initial=0.0)
        r = max(r, float(np.maximum(-x, 0.0).max(initial=0.0)))
        for j in self.binaries:
            r = max(r, min(abs(x[j]), abs(x[j] - 1.0)))
        return float(r)

    def is_feasible(self, x, tol: float = 1e-7) -> bool:
        return self.residual(x) <= tol

    def with_rhs(self, b) -> "MbqpInstance":
        return MbqpInstance(self.Q, self.c, self.A, b, self.binaries, self.slack_map,
                            dict(self.seed_info), self.name)

    def perturb_constraint(self, k: int, delta: float) -> "MbqpInstance":
        """Shift the rhs of raw constraint ``k`` by ``delta``."""
        b = self.b.copy()
        b[self.constraint_row(k)] += delta
        return self.with_rhs(b)

    def constraint_row(self, k: int) -> int:
        rows = self.slack_map.constraint_rows
        return rows[k] if rows else k

    def q_is_psd(self, tol: float = 1e-9) -> bool:
        if self.n == 0:
            return True
        return bool(np.linalg.eigvalsh(self.Q)[0] >= -tol * (1.0 + np.abs(self.Q).max()))

    def has_complement_rows(self) -> bool:
        """Check that every binary has a row ``x_j + w_j = 1`` with a private slack."""
        return all(_find_complement(self.A, self.b, j, set(self.binaries)) is not None
                   for j in self.binaries)


@dataclass(frozen=True)
class RawProblem:
    """User-facing problem before conversion: ``min x'Qx + 2c'x`` over ``x >= 0``.

    ``constraints`` is a sequence of ``(row, relation, rhs)`` with relation one
    of ``"<="``, ``"="``, ``">="``.
    """

    Q: np.ndarray
    c: np.ndarray
    constraints: tuple = ()
    binaries: tuple = ()
    seed_info: dict = field(default_factory=dict)
    name: str = ""

    @property
    def n(self) -> int:
        return int(np.asarray(self.c).size)

    def validate(self):
        n = self.n
        Q = np.asarray(self.Q, dtype=float)
        if Q.size and Q.shape != (n, n):
            raise ModelError(f"Q has shape {Q.shape}, expected {(n, n)}")
        for k, (row, rel, rhs) in enumerate(self.constraints):
            if rel not in RELATIONS:
                raise ModelError(f"constraint {k}: unknown relation {rel!r}")
            if np.asarray(row).size != n:
                raise ModelError(f"constraint {k}: row has {np.asarray(row).size} entries, expected {n}")
            if not np.isfinite(rhs):
                raise ModelError(f"constraint {k}: rhs must be finite")
        bins = list(self.binaries)
        if any(j < 0 or j >= n for j in bins) or sorted(set(bins)) != bins:
            raise ModelError(f"binaries must be strictly increasing indices in 0..{n - 1}")


def _find_complement(A, b, j, bset):
    """Row index and slack column of an existing ``x_j + w_j = 1`` row, if any."""
    for r in range(A.shape[0]):
        row = A[r]
        nz = np.flatnonzero(row)
        if len(nz) != 2 or j not in nz or b[r] != 1.0 or row[j] != 1.0:
            continue
        w = int(nz[0] if nz[1] == j else nz[1])
        if w in bset or row[w] != 1.0:
            continue
        if np.count_nonzero(A[:, w]) == 1:
            return r, w
    return None


def to_standard_form(raw: RawProblem) -> MbqpInstance:
    """Convert a raw problem to an equality-form instance satisfying assumption (A).

    Columns are ordered: original variables, binary-complement slacks in
    binary order, inequality slacks in constraint order.  Rows are ordered:
    complement rows, then raw constraints in their original order.  A binary
    that already owns a complement row with a private slack gets no new one,
    which makes the conversion idempotent.
    """
    raw.validate()
    n0 = raw.n
    bins = tuple(int(j) for j in raw.binaries)
    bset = set(bins)
    rows = [np.asarray(r, dtype=float) for r, _, _ in raw.constraints]
    rels = [rel for _, rel, _ in raw.constraints]
    rhs = [float(v) for _, _, v in raw.constraints]
    A0 = np.array(rows).reshape(len(rows), n0)
    b0 = np.array(rhs)

    eq_rows = [k for k, rel in enumerate(rels) if rel == "="]
    needs_comp = []
    existing = {}
    for j in bins:
        hit = _find_complement(A0[eq_rows], b0[eq_rows], j, bset) if eq_rows else None
        if hit is None:
            needs_comp.append(j)
        else:
            existing[j] = (eq_rows[hit[0]], hit[1])
    ineq = [k for k, rel in enumerate(rels) if rel != "="]

    n = n0 + len(needs_comp) + len(ineq)
    m = len(needs_comp) + len(rows)
    A = np.zeros((m, n))
    b = np.zeros(m)
    complement, complement_row, inequality = {}, {}, {}
    for t, j in enumerate(needs_comp):
        w = n0 + t
        A[t, j] = 1.0
        A[t, w] = 1.0
        b[t] = 1.0
        complement[j] = w
        complement_row[j] = t
    offset = len(needs_comp)
    constraint_rows = []
    for k in range(len(rows)):
        r = offset + k
        A[r, :n0] = A0[k]
        b[r] = b0[k]
        constraint_rows.append(r)
    for t, k in enumerate(ineq):
        s = n0 + len(needs_comp) + t
        A[offset + k, s] = 1.0 if rels[k] == "<=" else -1.0
        inequality[k] = s
    for j, (k, w) in existing.items():
        complement[j] = w
        complement_row[j] = offset + k

    Q = np.zeros((n, n))
    if np.asarray(raw.Q).size:
        Q[:n0, :n0] = np.asarray(raw.Q, dtype=float)
    c = np.zeros(n)
    c[:n0] = np.asarray(raw.c, dtype=float)
    sm = SlackMap(n0, complement, complement_row, inequality, tuple(constraint_rows))
    return MbqpInstance(Q, c, A, b, bins, sm, dict(raw.seed_info), raw.name)


def as_raw(inst: MbqpInstance) -> RawProblem:
    """View a standard-form instance as an all-equality raw problem."""
    cons = tuple((inst.A[i].copy(), "=", float(inst.b[i])) for i in range(inst.m))
    return RawProblem(inst.Q.copy(), inst.c.copy(), cons, inst.binaries,
                      dict(inst.seed_info), inst.name)


# ----------------------------------------------------------------------------
# generators

def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(seed))


def generate_comb(seed: int, d: float, v: int, p: int) -> MbqpInstance:
    """Weighted stable set on a random bipartite graph with a cardinality row.

    Raw constraints: ``sum x <= p`` first, then ``x_i + x_j <= 1`` per edge.
    """
    if not 0.0 <= d <= 1.0 or v < 1 or p < 0:
        raise ModelError("need 0 <= d <= 1, v >= 1, p >= 0")
    rng = _rng(seed)
    nv = 2 * v
    weights = rng.integers(0, 11, size=nv)
    edges = [(i, v + j) for i in range(v) for j in range(v) if rng.random() < d]
    cons = [(np.ones(nv), "<=", float(p))]
    for i, j in edges:
        row = np.zeros(nv)
        row[[i, j]] = 1.0
        cons.append((row, "<=", 1.0))
    raw = RawProblem(np.zeros((nv, nv)), -0.5 * weights.astype(float), tuple(cons),
                     tuple(range(nv)),
                     {"family": "COMB", "seed": seed, "d": d, "v": v, "p": p,
                      "edges": [[i + 1, j + 1] for i, j in edges]},
                     f"comb-s{seed}-d{d}-v{v}-p{p}")
    return to_standard_form(raw)


def _indicator_problem(seed, d, n, m, quadratic):
    if not 0.0 <= d <= 1.0 or n < 1 or m < 1:
        raise ModelError("need 0 <= d <= 1, n >= 1, m >= 1")
    rng = _rng(seed)
    cx = rng.integers(0, 11, size=n).astype(float)
    cy = np.full(n, 3.0)
    a = rng.integers(0, 11, size=(m, n)).astype(float)
    a[rng.random((m, n)) < d] = 0.0
    bvec = np.floor(0.5 * a.sum(axis=1))
    Q = np.zeros((2 * n, 2 * n))
    if quadratic:
        u = rng.integers(-1, 2, size=(2, n)).astype(float)
        Q[:n, :n] = u.T @ u
    cons = []
    for i in range(m):
        cons.append((np.concatenate([a[i], np.zeros(n)]), "<=", float(bvec[i])))
    for i in range(n):
        row = np.zeros(2 * n)
        row[i] = 1.0
        row[n + i] = -1.0
        cons.append((row, "<=", 0.0))
    family = "SSQP" if quadratic else "SSLP"
    raw = RawProblem(Q, np.concatenate([-cx, cy]), tuple(cons), tuple(range(n, 2 * n)),
                     {"family": family, "seed": seed, "d": d, "n": n, "m": m},
                     f"{family.lower()}-s{seed}-d{d}-n{n}-m{m}")
    return to_standard_form(raw)


def generate_sslp(seed: int, d: float, n: int, m: int) -> MbqpInstance:
    """Continuous ``x`` switched on by binary ``y`` (``x <= y``), linear objective.

    Variable order is ``x`` then ``y``; raw constraints are the ``m`` resource
    rows followed by the ``n`` linking rows.
    """
    return _indicator_problem(seed, d, n, m, quadratic=False)


def generate_ssqp(seed: int, d: float, n: int, m: int) -> MbqpInstance:
    """As :func:`generate_sslp` plus ``x'Qx`` with ``Q = u1 u1' + u2 u2'``."""
    return _indicator_problem(seed, d, n, m, quadratic=True)


# ----------------------------------------------------------------------------
# graphs

@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..num_vertices-1``."""

    num_vertices: int
    edges: tuple = ()

    def __post_init__(self):
        seen = set()
        norm = []
        for e in self.edges:
            u, w = int(e[0]), int(e[1])
            if u == w:
                raise ModelError(f"loop at vertex {u}")
            if not (0 <= u < self.num_vertices and 0 <= w < self.num_vertices):
                raise ModelError(f"edge {(u, w)} out of range")
            key = (min(u, w), max(u, w))
            if key in seen:
                raise ModelError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    def degree(self, u: int) -> int:
        return sum(u in e for e in self.edges)

    @property
    def max_degree(self) -> int:
        return max((self.degree(u) for u in range(self.num_vertices)), default=0)

    def incident_pairs(self):
        """Index pairs ``(r, s)``, ``r < s``, of edges sharing an endpoint."""
        return [(r, s) for r, s in itertools.combinations(range(len(self.edges)), 2)
                if set(self.edges[r]) & set(self.edges[s])]


def complete_graph(k: int) -> Graph:
    return Graph(k, tuple(itertools.combinations(range(k), 2)))


def path_graph(k: int) -> Graph:
    """Path on ``k`` vertices."""
    return Graph(k, tuple((i, i + 1) for i in range(k - 1)))


def cycle_graph(k: int) -> Graph:
    return Graph(k, tuple((i, (i + 1) % k) for i in range(k)))


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph(10, tuple(outer + spokes + inner))


def random_graph(seed: int, num_vertices: int, max_edges: int, max_deg: int) -> Graph:
    """Random simple graph with at most ``max_edges`` edges and max degree ``max_deg``."""
    rng = _rng(seed)
    pairs = list(itertools.combinations(range(num_vertices), 2))
    order = rng.permutation(len(pairs))
    deg = [0] * num_vertices
    edges = []
    target = int(rng.integers(1, max_edges + 1))
    for t in order:
        u, w = pairs[t]
        if deg[u] < max_deg and deg[w] < max_deg:
            edges.append((u, w))
            deg[u] += 1
            deg[w] += 1
            if len(edges) == target:
                break
    return Graph(num_vertices, tuple(edges))


def reduce_edge_coloring(g: Graph, H: int, rhs: int) -> MbqpInstance:
    """Binary program whose optimum is the number of colors used, forced ``>= rhs``.

    Variables are ``x[e, i]`` (edge-major) followed by ``w[i]``.  Raw constraints:
    ``-sum w <= -rhs`` first, then ``sum_i x[e, i] = 1`` per edge, then
    ``x[r, i] + x[s, i] - w[i] <= 0`` per incident pair and color.
    """
    if H < 1:
        raise ModelError("need at least one color")
    E = len(g.edges)
    nx = E * H
    n0 = nx + H

    def col(e, i):
        return e * H + i

    cons = []
    row = np.zeros(n0)
    row[nx:] = -1.0
    cons.append((row, "<=", -float(rhs)))
    for e in range(E):
        row = np.zeros(n0)
        row[[col(e, i) for i in range(H)]] = 1.0
        cons.append((row, "=", 1.0))
    for r, s in g.incident_pairs():
        for i in range(H):
            row = np.zeros(n0)
            row[col(r, i)] = 1.0
            row[col(s, i)] = 1.0
            row[nx + i] = -1.0
            cons.append((row, "<=", 0.0))
    c = np.zeros(n0)
    c[nx:] = 0.5
    raw = RawProblem(np.zeros((n0, n0)), c, tuple(cons), tuple(range(n0)),
                     {"family": "EdgeColor", "H": H, "rhs": rhs,
                      "num_vertices": g.num_vertices,
                      "edges": [[u + 1, w + 1] for u, w in g.edges]},
                     f"edgecolor-H{H}-rhs{rhs}")
    return to_standard_form(raw)


# ----------------------------------------------------------------------------
# small named instances

def single_edge_instance() -> MbqpInstance:
    """``min -2x1 - 2x2`` s.t. ``x1 + x2 <= 1``, both binary; ``z = -2``."""
    raw = RawProblem(np.zeros((2, 2)), np.array([-1.0, -1.0]),
                     ((np.array([1.0, 1.0]), "<=", 1.0),), (0, 1), {}, "single-edge")
    return to_standard_form(raw)


def gap_example_instance() -> MbqpInstance:
    """``min x1^2 - x2^2`` s.t. ``x1 - x2 = 0``: zero optimum, infeasible copositive dual."""
    raw = RawProblem(np.diag([1.0, -1.0]), np.zeros(2),
                     ((np.array([1.0, -1.0]), "=", 0.0),), (), {}, "gap-example")
    return to_standard_form(raw)


def clique_stable_set_instance(k: int = 6) -> MbqpInstance:
    """Max stable set on ``K_k`` written as ``min -2 sum x`` with edge rows ``x_u + x_v + s_e = 1``.

    The edge rows already bound every ``x`` so no complement rows are added;
    the layout is ``[x (k), s (one per edge)]``.
    """
    edges = list(itertools.combinations(range(k), 2))
    E = len(edges)
    A = np.zeros((E, k + E))
    for t, (u, w) in enumerate(edges):
        A[t, [u, w]] = 1.0
        A[t, k + t] = 1.0
    c = np.zeros(k + E)
    c[:k] = -1.0
    sm = SlackMap(k, {}, {}, {t: k + t for t in range(E)}, tuple(range(E)))
    return MbqpInstance(np.zeros((k + E, k + E)), c, A, np.ones(E), tuple(range(k)), sm,
                        {"family": "clique", "k": k}, f"clique-{k}")


# ----------------------------------------------------------------------------
# JSON I/O

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def instance_to_dict(inst: MbqpInstance) -> dict:
    return {
        "name": inst.name,
        "n": inst.n,
        "m": inst.m,
        "Q": inst.Q.ravel().tolist(),
        "c": inst.c.tolist(),
        "A": inst.A.ravel().tolist(),
        "b": inst.b.tolist(),
        "binaries": [j + 1 for j in inst.binaries],
        "slack_map": inst.slack_map.to_dict(),
        "seed_info": _jsonable(inst.seed_info),
    }


def instance_from_dict(d: dict) -> MbqpInstance:
    try:
        n, m = int(d["n"]), int(d["m"])
        Q = np.asarray(d["Q"], dtype=float).reshape(n, n)
        A = np.asarray(d["A"], dtype=float).reshape(m, n)
        c, b = d["c"], d["b"]
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelError(f"malformed instance file: {exc}") from exc
    return MbqpInstance(Q, c, A, b, tuple(j - 1 for j in d.get("binaries", [])),
                        SlackMap.from_dict(d.get("slack_map", {})),
                        dict(d.get("seed_info", {})), d.get("name", ""))


def save_instance(inst: MbqpInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1))


def load_instance(path) -> MbqpInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(
        {"num_vertices": g.num_vertices, "edges": [[u + 1, w + 1] for u, w in g.edges]}))


def load_graph(path) -> Graph:
    d = json.loads(Path(path).read_text())
    try:
        return Graph(int(d["num_vertices"]), tuple((u - 1, w - 1) for u, w in d["edges"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed graph file: missing {exc}") from exc


def graph_from_sequence(num_vertices: int, edges: Sequence) -> Graph:
    return Graph(num_vertices, tuple(tuple(e) for e in edges))
