"""Lifted matrices of the completely positive reformulation and its copositive dual.

All matrices are dense symmetric ``(n+1) x (n+1)`` arrays; index 0 is the
homogenizing coordinate ``t`` and index ``j + 1`` is variable ``x_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .model import MbqpInstance

__all__ = [
    "Lifting",
    "build_lifting",
    "rank_one_lift",
    "quad_form",
    "building_block_g",
    "mccormick_rows",
]


@dataclass(frozen=True, eq=False)
class Lifting:
    """Every matrix of the CP/COP pair for one instance."""

    inst: MbqpInstance
    C: np.ndarray
    T: np.ndarray
    H: np.ndarray
    A: tuple      # A_i, <A_i, Y> = 2 b_i
    AA: tuple     # AA_i, <AA_i, Y> = b_i^2
    KK: tuple     # squared residual blocks
    K: tuple      # linear residual blocks
    N: dict       # binary j -> N_j

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    @cached_property
    def KK_sum(self) -> np.ndarray:
        return sum(self.KK, np.zeros_like(self.C))


def _ro(M):
    M.setflags(write=False)
    return M


def build_lifting(inst: MbqpInstance) -> Lifting:
    n, m = inst.n, inst.m
    d = n + 1
    C = np.zeros((d, d))
    C[0, 1:] = inst.c
    C[1:, 0] = inst.c
    C[1:, 1:] = inst.Q
    T = np.zeros((d, d))
    T[0, 0] = 1.0
    A, AA, KK, K = [], [], [], []
    for i in range(m):
        a = inst.A[i]
        bi = float(inst.b[i])
        Ai = np.zeros((d, d))
        Ai[0, 1:] = a
        Ai[1:, 0] = a
        AAi = np.zeros((d, d))
        AAi[1:, 1:] = np.outer(a, a)
        v = np.concatenate([[-bi], a])
        A.append(_ro(Ai))
        AA.append(_ro(AAi))
        KK.append(_ro(np.outer(v, v)))
        K.append(_ro(2.0 * bi * T - Ai))
    N = {}
    for j in inst.binaries:
        Nj = np.zeros((d, d))
        Nj[0, j + 1] = Nj[j + 1, 0] = -1.0
        Nj[j + 1, j + 1] = 2.0
        N[j] = _ro(Nj)
    H = T + sum(AA, np.zeros((d, d)))
    return Lifting(inst, _ro(C), _ro(T), _ro(H), tuple(A), tuple(AA), tuple(KK),
                   tuple(K), N)


def rank_one_lift(x) -> np.ndarray:
    """``Y = (1; x)(1; x)'`` for a nonnegative ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    if np.any(x < 0):
        raise ValueError("rank_one_lift needs x >= 0")
    y = np.concatenate([[1.0], x])
    return np.outer(y, y)


def quad_form(M, y) -> float:
    M = np.asarray(M, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if M.shape != (y.size, y.size):
        raise ValueError(f"dimension mismatch: matrix {M.shape}, vector {y.size}")
    return float(y @ M @ y)


def building_block_g(lift: Lifting, j: int, f: float, g: float, r: float) -> np.ndarray:
    """``G_j(f, g, r) = f * sum(KK_i) - g N_j + r T``."""
    if j not in lift.N:
        raise KeyError(f"column {j} is not binary")
    return f * lift.KK_sum - g * lift.N[j] + r * lift.T


def mccormick_rows(lift: Lifting) -> list:
    """Homogenized McCormick inequalities ``<S, Y> >= 0`` for binary pairs ``i < j``.

    Returned as ``(i, j, S)`` triples in the order
    ``Y_0i - Y_ij``, ``Y_0j - Y_ij``, ``Y_ij - Y_0i - Y_0j + Y_00``, ``Y_ij``.
    """
    d = lift.dim
    out = []

    def sym(entries):
        S = np.zeros((d, d))
        for (p, q), v in entries:
            if p == q:
                S[p, p] += v
            else:
                S[p, q] += 0.5 * v
                S[q, p] += 0.5 * v
        return _ro(S)

    for i, j in combinations(lift.inst.binaries, 2):
        a, b = i + 1, j + 1
        out.append((i, j, sym([((0, a), 1.0), ((a, b), -1.0)])))
        out.append((i, j, sym([((0, b), 1.0), ((a, b), -1.0)])))
        out.append((i, j, sym([((a, b), 1.0), ((0, a), -1.0), ((0, b), -1.0), ((0, 0), 1.0)])))
        out.append((i, j, sym([((a, b), 1.0)])))
    return out
