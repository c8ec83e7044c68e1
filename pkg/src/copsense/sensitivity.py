"""Baseline relaxations, the dual-fitting SDP, predictions and gap metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .copositive import (CopositivityVerdict, DualCertificate, UnboundedRegionError, Verdict,
                         _spn_polish, compute_k, synthesize_closed_form)
from .exact import ExactError, solve_cont, solve_exact
from .lift import Lifting, build_lifting, mccormick_rows
from .model import MbqpInstance
from .numerics import min_eig
from .sdp import SdpOutcome, SdpProblem, SdpStatus, solve_sdp

__all__ = [
    "ShorResult",
    "FitSpec",
    "NoSpnCertificate",
    "SensitivityReport",
    "solve_shor1",
    "solve_shor2",
    "select_weights",
    "fit_dual",
    "predict",
    "relative_gap",
    "gap_flag",
    "delta_grid",
    "fit_objective",
    "analyze",
    "METHODS",
]

METHODS = ("Shor1", "Shor2", "Cont", "ClosedForm", "FitDual")


class NoSpnCertificate(ValueError):
    """The fitting SDP produced no usable PSD + nonnegative splitting."""


# ----------------------------------------------------------------------------
# Shor relaxations

@dataclass
class ShorResult:
    kind: str
    status: SdpStatus
    value: float            # certified bound at b
    primal_value: float
    b: np.ndarray
    mu: np.ndarray          # multipliers of <A_i, Y> = 2 b_i
    nu: np.ndarray | None   # multipliers of <AA_i, Y> = b_i^2 (Shor2)
    outcome: SdpOutcome | None = None
    t0: float = 0.0         # multiplier of <T, Y> = 1
    shift: float = 0.0      # H-shift that makes the dual slack copositive
    info: dict = field(default_factory=dict)

    def predict(self, delta_b) -> float:
        """Fixed-multiplier bound at ``b + delta_b``.

        ``t0 + 2 mu'b' + nu'b'^2 - shift (1 + |b'|^2)``; valid for every
        ``b'`` because the slack plus ``shift * H`` is copositive and
        ``<H, yy'> = 1 + |b'|^2`` on feasible points.
        """
        bp = self.b + np.asarray(delta_b, float)
        val = self.t0 + 2.0 * self.mu @ bp - self.shift * (1.0 + bp @ bp)
        if self.nu is not None:
            val += self.nu @ bp ** 2
        return float(val)


def _shor(inst: MbqpInstance, second: bool, tol: float, max_iter: int,
          lift: Lifting | None = None, k: float | None = None) -> ShorResult:
    L = build_lifting(inst) if lift is None else lift
    d = L.dim
    p = SdpProblem()
    Y = p.add_block(d, "dnn", L.C)
    mats = [L.T]
    p.add_row(blocks={Y: L.T}, rhs=1.0, name="T")
    for j, N in L.N.items():
        p.add_row(blocks={Y: N}, rhs=0.0, name=f"N{j}")
        mats.append(N)
    rows_a = []
    for i, A in enumerate(L.A):
        rows_a.append(p.add_row(blocks={Y: A}, rhs=2.0 * inst.b[i], name=f"A{i}"))
        mats.append(A)
    rows_aa = []
    rows_mc = []
    if second:
        for i, AA in enumerate(L.AA):
            rows_aa.append(p.add_row(blocks={Y: AA}, rhs=inst.b[i] ** 2, name=f"AA{i}"))
            mats.append(AA)
        mc = mccormick_rows(L)
        if mc:
            s = p.add_scalars(len(mc), 0.0, 0.0)
            for k_, (_, _, S) in enumerate(mc):
                rows_mc.append(p.add_row({s[k_]: -1.0}, {Y: S}, 0.0, name=f"MC{k_}"))
                mats.append(S)
    out = solve_sdp(p, tol=tol, max_iter=max_iter)
    y = np.array(out.duals, float)
    if rows_mc:
        y[rows_mc] = np.maximum(y[rows_mc], 0.0)
    # dual slack, split into PSD + nonnegative; a negative eigenvalue left over
    # is paid for with a multiple of H
    Z = L.C - sum(yk * Mk for yk, Mk in zip(y, mats))
    nn = [S for _, kind, S in out.dual_slacks if kind == "nn"]
    P, _ = _spn_polish(Z, np.maximum(nn[0], 0.0) if nn else np.maximum(Z, 0.0))
    deficit = max(0.0, -min_eig(P))
    shift = 0.0
    certified = True
    if deficit > 0:
        if k is None:
            try:
                k = compute_k(L)
            except UnboundedRegionError:
                # no strictly copositive H to pay with; keep the raw multipliers, flagged
                certified = False
        if certified:
            shift = deficit / k * (1 + 1e-9) + 1e-15
    mu = y[rows_a] if rows_a else np.zeros(0)
    nu = y[rows_aa] if second else None
    res = ShorResult("Shor2" if second else "Shor1", out.status, 0.0, float(out.objective),
                     inst.b.copy(), np.asarray(mu), nu, out, float(y[0]), shift,
                     {"deficit": deficit, "k": k, "certified": certified,
                      "raw_dual_objective": float(out.dual_objective)})
    res.value = res.predict(np.zeros(inst.m))
    return res


def solve_shor1(inst: MbqpInstance, tol: float = 1e-7, max_iter: int = 20_000,
                lift: Lifting | None = None, k: float | None = None) -> ShorResult:
    """Doubly nonnegative relaxation with ``<T,Y> = 1``, ``<N_j,Y> = 0``, ``<A_i,Y> = 2b_i``.

    The returned bound is certified even when ADMM stops early (see ``shift``),
    except on unbounded regions, where ``info["certified"]`` may be False.
    """
    return _shor(inst, False, tol, max_iter, lift, k)


def solve_shor2(inst: MbqpInstance, tol: float = 1e-7, max_iter: int = 20_000,
                lift: Lifting | None = None, k: float | None = None) -> ShorResult:
    """Shor1 plus ``<AA_i,Y> = b_i^2`` and McCormick rows on binary pairs."""
    return _shor(inst, True, tol, max_iter, lift, k)


# ----------------------------------------------------------------------------
# dual fitting

def select_weights(rg):
    """``w1 = sum_{rho<=rg} rho^2 / (rg+1)``, ``w2 = sum_{rho<=rg} 2 rho / (rg+1)``.

    These are the grid means of ``db^2`` and ``2 db`` for ``db in {0..rg}``.
    Scalars give scalars, vectors give arrays.
    """
    arr = np.asarray(rg)
    if np.any(arr < 0) or not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError("ranges must be nonnegative integers")
    r = arr.astype(float)
    w1 = r * (2 * r + 1) / 6.0
    w2 = r
    if arr.ndim == 0:
        return float(w1), float(w2)
    return w1, w2


@dataclass
class FitSpec:
    """Fixed constants and weights of the fitting SDP.

    ``l_mode`` is ``"variable"`` or ``"fixed"`` (then ``l`` must be finite).
    ``p_max`` caps ``p`` and ``|delta|``; rows with zero weight otherwise let
    ``p`` run off to infinity without changing the objective.
    """

    w1: np.ndarray
    w2: np.ndarray
    tau: float = 1e-3
    r: float = 1e-3
    l_mode: str = "variable"
    l: float = float("nan")
    use_mccormick: bool = True
    use_linear_penalty: bool = True
    p_max: float = 1e3
    max_iter: int = 10_000
    tol: float = 1e-6

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, float)
        self.w2 = np.asarray(self.w2, float)
        if np.any(self.w1 < 0) or np.any(self.w2 < 0):
            raise ValueError("weights must be nonnegative")
        if self.tau < 0 or self.r < 0:
            raise ValueError("tau and r must be nonnegative")
        if self.l_mode not in ("variable", "fixed"):
            raise ValueError("l_mode is 'variable' or 'fixed'")
        if self.l_mode == "fixed" and not math.isfinite(self.l):
            raise ValueError("fixed l needs a finite value")

    @classmethod
    def for_ranges(cls, inst: MbqpInstance, rows, rg, **kw) -> "FitSpec":
        """Weights from :func:`select_weights` on ``rows``, zero elsewhere."""
        w1 = np.zeros(inst.m)
        w2 = np.zeros(inst.m)
        rg = np.broadcast_to(np.asarray(rg), (len(rows),))
        for row, g in zip(rows, rg):
            w1[row], w2[row] = select_weights(int(g))
        return cls(w1, w2, **kw)


def fit_objective(spec: FitSpec, p, delta, l) -> float:
    """``-l + sum(w1 p - w2 delta)``; minimizing it maximizes the grid-mean prediction."""
    return float(-l + spec.w1 @ np.asarray(p) - spec.w2 @ np.asarray(delta))


def _fit_matrix(L: Lifting, p, delta, gamma, sigma, S, tau, r, l):
    M = L.C + tau * L.H - (l + r) * L.T
    for i in range(len(p)):
        M = M + p[i] * L.KK[i] + delta[i] * L.K[i]
    for k, j in enumerate(L.N):
        M = M + gamma[k] * L.N[j]
    for s, (_, _, Sk) in zip(sigma, S):
        M = M - s * Sk
    return M


def fit_dual(inst: MbqpInstance, spec: FitSpec, lift: Lifting | None = None,
             k: float | None = None) -> DualCertificate:
    """Fit ``C + sum p KK + sum delta K + sum gamma N - sum sigma S + tau H - (l+r) T = P + N``.

    Minimizes ``-l + sum(w1 p - w2 delta)`` (``-l`` dropped for fixed ``l``)
    with ``P`` PSD, ``N >= 0``, ``0 <= p <= p_max``, ``sigma >= 0``.  The ADMM
    iterate is then made exact: ``N`` is clipped, ``P = M - N`` is rebuilt
    from the scalars, and any leftover negative eigenvalue ``e`` of ``P`` is
    absorbed by raising ``tau`` by ``e / k`` where ``H - kI`` is copositive.
    """
    L = build_lifting(inst) if lift is None else lift
    m, d = inst.m, L.dim
    if spec.w1.size != m or spec.w2.size != m:
        raise ValueError(f"weights need length {m}")
    pmax = spec.p_max
    prob = SdpProblem()
    bP = prob.add_block(d, "psd")
    bN = prob.add_block(d, "nn")
    pv = prob.add_scalars(m, spec.w1, 0.0, pmax)
    if spec.use_linear_penalty:
        dv = prob.add_scalars(m, -spec.w2, -pmax, pmax)
    else:
        dv = np.zeros(0, int)
    binaries = list(L.N)
    gv = prob.add_scalars(len(binaries), 0.0, -pmax, pmax)
    S = mccormick_rows(L) if spec.use_mccormick else []
    sv = prob.add_scalars(len(S), 0.0, 0.0, pmax)
    variable_l = spec.l_mode == "variable"
    lv = prob.add_scalars(1, -1.0) if variable_l else np.zeros(0, int)
    mats = {}
    for i in range(m):
        mats[int(pv[i])] = L.KK[i]
        if spec.use_linear_penalty:
            mats[int(dv[i])] = L.K[i]
    for t, j in enumerate(binaries):
        mats[int(gv[t])] = L.N[j]
    for t, (_, _, Sk) in enumerate(S):
        mats[int(sv[t])] = -Sk
    const = L.C + spec.tau * L.H - spec.r * L.T
    if variable_l:
        mats[int(lv[0])] = -L.T
    else:
        const = const - spec.l * L.T
    prob.add_matrix_equality(mats, {bP: -1.0, bN: -1.0}, const, dim=d)
    t0 = time.perf_counter()
    out = solve_sdp(prob, tol=spec.tol, max_iter=spec.max_iter)
    elapsed = time.perf_counter() - t0
    if out.status == SdpStatus.INFEASIBLE:
        raise NoSpnCertificate("fitting SDP reported infeasible")
    x = out.scalars
    p = np.clip(x[pv], 0.0, pmax)
    delta = x[dv] if spec.use_linear_penalty else np.zeros(m)
    gamma = x[gv]
    sigma = np.maximum(x[sv], 0.0)
    l = float(x[lv[0]]) if variable_l else float(spec.l)
    M = _fit_matrix(L, p, delta, gamma, sigma, S, spec.tau, spec.r, l)
    P, N = _spn_polish(M, out.blocks[bN] if out.blocks else np.maximum(M, 0.0))
    deficit = max(0.0, -min_eig(P))
    tau = spec.tau
    shift = 0.0
    if deficit > 0:
        if k is None:
            try:
                k = compute_k(L)
            except UnboundedRegionError as exc:
                raise NoSpnCertificate(f"negative eigenvalue {deficit:.2e} and no k: {exc}")
        shift = deficit / k * (1 + 1e-9) + 1e-15
        tau += shift
        M = M + shift * L.H
    b = inst.b
    alpha = -p * b - delta
    beta = p + tau
    theta = float(p @ b ** 2 + 2 * delta @ b + tau - (l + spec.r))
    cert_data = {"P": P, "N": N}
    method = "spn"
    if shift > 0:
        cert_data.update(shift=shift, k=k)
        method = "spn+H"
    verdict = CopositivityVerdict(Verdict.COPOSITIVE, method, cert_data, margin=-deficit,
                                  info={"sdp_status": out.status.value,
                                        "iterations": out.iterations,
                                        "residual": float(np.linalg.norm(M - P - N - shift * L.H))})
    prov = {"kind": "fit", "p": p, "delta": delta, "gamma": gamma, "l": l, "tau": tau,
            "tau_requested": spec.tau, "r": spec.r, "tau_shift": shift,
            "fit_objective": fit_objective(spec, p, delta, l) if variable_l
            else float(spec.w1 @ p - spec.w2 @ delta),
            "sdp_status": out.status.value, "iterations": out.iterations,
            "seconds": elapsed}
    return DualCertificate(alpha, beta, gamma, theta, M, b, tuple(binaries), verdict, prov,
                           sigma, [(i, j, t % 4) for t, (i, j, _) in enumerate(S)], A=inst.A)


# ----------------------------------------------------------------------------
# predictions and metrics

def predict(cert: DualCertificate, delta_b) -> float:
    """Weak-duality bound ``-(sum 2 b'_i alpha_i + b'_i^2 beta_i) - theta`` at ``b' = b + delta_b``.

    Certificates whose verdict is not Copositive still evaluate; callers
    check ``cert.copositive`` before trusting the number.
    """
    return cert.bound(cert.b + np.asarray(delta_b, float))


def relative_gap(z_true: float, p1: float, p2: float) -> float:
    """``(z - p2) / (z - p1)``; NaN when the denominator is below ``1e-9``."""
    den = z_true - p1
    if not math.isfinite(den) or abs(den) < 1e-9:
        return float("nan")
    return float((z_true - p2) / den)


def gap_flag(z_true: float, p1: float, p2: float, tol: float = 1e-4) -> str:
    """``""``, ``"degenerate"`` (tiny denominator) or ``"weak-duality"`` (a bound above ``z``)."""
    if not math.isfinite(z_true):
        return "no-ground-truth"
    if z_true - p1 < -tol or z_true - p2 < -tol:
        return "weak-duality"
    if abs(z_true - p1) < 1e-9:
        return "degenerate"
    return ""


def delta_grid(m: int, rows, values) -> list:
    """Every combination of ``values`` on ``rows`` as full length-``m`` vectors."""
    import itertools
    out = []
    for combo in itertools.product(values, repeat=len(rows)):
        v = np.zeros(m)
        v[list(rows)] = combo
        out.append(v)
    return out


@dataclass
class SensitivityReport:
    instance: str
    rows: list = field(default_factory=list)        # dicts: delta, z_true, predictions, rel_gap
    timings: dict = field(default_factory=dict)     # method -> ms
    info: dict = field(default_factory=dict)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            for k in r["predictions"]:
                if k not in seen:
                    seen.append(k)
        return seen

    def violations(self, tol: float = 1e-4) -> list:
        bad = []
        for r in self.rows:
            z = r["z_true"]
            if z is None or not math.isfinite(z):
                continue
            for meth, v in r["predictions"].items():
                if v is not None and math.isfinite(v) and v > z + tol:
                    bad.append((meth, r["delta"], v, z))
        return bad

    def to_dict(self) -> dict:
        return {"instance": self.instance, "rows": _plain_rows(self.rows),
                "timings_ms": self.timings, "info": self.info}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def csv_rows(self, with_time: bool = False) -> list:
        out = []
        for r in self.rows:
            for meth, v in r["predictions"].items():
                row = [self.instance, meth] + [_fmt(x) for x in r["delta"]]
                row += [_fmt(v), _fmt(r["z_true"]), _fmt(r["rel_gap"].get(meth))]
                if with_time:
                    row.append(_fmt(self.timings.get(meth)))
                out.append(row)
        return out

    def to_csv(self, with_time: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = len(self.rows[0]["delta"]) if self.rows else 0
        head = ["instance", "method"] + [f"db{i + 1}" for i in range(m)]
        head += ["prediction", "z_true", "rel_gap"] + (["time_ms"] if with_time else [])
        w.writerow(head)
        w.writerows(self.csv_rows(with_time))
        return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.10g}"
    return str(x)


def _plain_rows(rows):
    out = []
    for r in rows:
        out.append({"delta": [float(v) for v in r["delta"]],
                    "z_true": None if r["z_true"] is None or not math.isfinite(r["z_true"])
                    else float(r["z_true"]),
                    "predictions": {k: (None if v is None or not math.isfinite(v) else float(v))
                                    for k, v in r["predictions"].items()},
                    "rel_gap": {k: (None if v is None or not math.isfinite(v) else float(v))
                                for k, v in r["rel_gap"].items()},
                    "flags": r.get("flags", {})})
    return out


def analyze(inst: MbqpInstance, deltas, methods=METHODS, rows=None, rg=None,
            ground_truth: bool = True, tau: float = 1e-3, r: float = 1e-3,
            eps0: float = 1e-3, verify_closed_form: bool = True,
            fit_kwargs: dict | None = None) -> SensitivityReport:
    """Run each method once at ``b`` and evaluate its bound at every ``b + delta``.

    ``rows``/``rg`` pick the fitting weights (defaults: rows that vary in
    ``deltas`` and their maximal change).  The closed form uses ``l = z(b)``.
    """
    deltas = [np.asarray(dv, float) for dv in deltas]
    rep = SensitivityReport(inst.name)
    timings = {}
    z0 = None
    truths = []
    if ground_truth or "ClosedForm" in methods:
        t = time.perf_counter()
        base = solve_exact(inst)
        z0 = base.z if base.optimal else float("nan")
        if ground_truth:
            for dv in deltas:
                res = solve_exact(inst.with_rhs(inst.b + dv)) if np.any(dv) else base
                truths.append(res.z if res.optimal else
                              (math.inf if res.status.value == "Infeasible" else float("nan")))
        timings["exact"] = 1e3 * (time.perf_counter() - t)
    bounders = {}
    errors = {}
    L = build_lifting(inst)
    for meth in methods:
        t = time.perf_counter()
        try:
            if meth == "Shor1":
                s = solve_shor1(inst, lift=L)
                bounders[meth] = s.predict
            elif meth == "Shor2":
                s = solve_shor2(inst, lift=L)
                bounders[meth] = s.predict
            elif meth == "Cont":
                c = solve_cont(inst)
                bounders[meth] = c.predict if c.duals is not None else None
            elif meth == "ClosedForm":
                cf = synthesize_closed_form(inst, z0, eps0, r, lift=L,
                                            verify_result=verify_closed_form)
                rep.info["closed_form_verdict"] = (cf.verdict.tag.value if cf.verdict
                                                   else "unverified")
                rep.info["closed_form_rounds"] = len(cf.provenance["diagnostics"]["history"])
                if cf.verdict is not None and cf.verdict.tag == Verdict.NOT_COPOSITIVE:
                    raise NoSpnCertificate("closed form refuted in every round")
                bounders[meth] = lambda dv, cf=cf: predict(cf, dv)
            elif meth == "FitDual":
                fr = rows if rows is not None else [i for i in range(inst.m)
                                                    if any(dv[i] != 0 for dv in deltas)]
                g = rg if rg is not None else [int(max(abs(dv[i]) for dv in deltas)) for i in fr]
                spec = FitSpec.for_ranges(inst, fr, g, tau=tau, r=r, **(fit_kwargs or {}))
                cert = fit_dual(inst, spec, lift=L)
                rep.info["fit_status"] = cert.provenance["sdp_status"]
                rep.info["fit_tau_shift"] = cert.provenance["tau_shift"]
                bounders[meth] = lambda dv, cert=cert: predict(cert, dv)
            else:
                raise ValueError(f"unknown method {meth}")
        except (ExactError, NoSpnCertificate, ValueError) as exc:
            errors[meth] = f"{type(exc).__name__}: {exc}"
            bounders[meth] = None
        timings[meth] = 1e3 * (time.perf_counter() - t)
    for t_idx, dv in enumerate(deltas):
        z = truths[t_idx] if ground_truth else None
        preds = {}
        for meth in methods:
            f = bounders.get(meth)
            preds[meth] = float(f(dv)) if f is not None else float("nan")
        gaps = {}
        flags = {}
        if z is not None and "Shor1" in preds:
            for meth, v in preds.items():
                gaps[meth] = relative_gap(z, preds["Shor1"], v)
                fl = gap_flag(z, preds["Shor1"], v)
                if fl:
                    flags[meth] = fl
        rep.rows.append({"delta": dv.tolist(), "z_true": z, "predictions": preds,
                         "rel_gap": gaps, "flags": flags})
    rep.timings = timings
    if errors:
        rep.info["errors"] = errors
    return rep
