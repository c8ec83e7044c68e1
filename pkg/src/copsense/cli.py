"""Command-line entry points and the experiment harness."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .copositive import (CopositiveError, DualCertificate, Mode, check_partition, check_spn,
                         demo_gap_example, demo_nonattainment, load_certificate, refute,
                         save_certificate, synthesize_closed_form, verify)
from .exact import ExactError, chromatic_index, solve_exact
from .lift import build_lifting
from .model import ModelError, load_instance, save_instance
from .numerics import NumericsError
from .sensitivity import (METHODS, FitSpec, NoSpnCertificate, SensitivityReport, analyze,
                          fit_dual, predict)

log = logging.getLogger("copsense")

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_USAGE = 0, 2, 3, 4
DOMAIN_ERRORS = (ModelError, ExactError, CopositiveError, NumericsError, NoSpnCertificate,
                 KeyError, ValueError)
FAMILIES = ("COMB", "SSLP", "SSQP", "EdgeColor", "File")

DEFAULT_SIZES = {
    "COMB": {"v": 5, "p": 2},
    "SSLP": {"n": 6, "m": 2},
    "SSQP": {"n": 6, "m": 2},
    "EdgeColor": {"vertices": 5, "max_edges": 6, "max_deg": 3, "H": 4, "rhs": 1},
    "File": {},
}


# ----------------------------------------------------------------------------
# experiment configuration

@dataclass
class ExperimentConfig:
    """Everything one experiment run needs.  Grid rows are 1-based raw constraint indices."""

    family: str = "COMB"
    seeds: list = field(default_factory=lambda: [0])
    densities: list = field(default_factory=lambda: [0.5])
    sizes: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)       # rows, values, samples, exhaustive_limit
    methods: list = field(default_factory=lambda: list(METHODS))
    tolerances: dict = field(default_factory=dict)  # tau, r, eps0, verify_closed_form, fit
    ground_truth: bool = True
    output: str = "results"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"family must be one of {FAMILIES}")
        self.sizes = {**DEFAULT_SIZES[self.family], **(self.sizes or {})}
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ModelError(f"unknown methods {sorted(unknown)}")
        if self.family == "File" and not self.files:
            raise ModelError("File family needs a list of instance files")
        if self.family != "File" and (not self.seeds or not self.densities):
            raise ModelError("seeds and densities must be nonempty")
        vals = self.grid_values()
        if not len(vals):
            raise ModelError("grid values must be nonempty")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ModelError(f"unknown config keys {sorted(extra)}")
        cfg = cls(**d)
        env = os.environ.get("COPSENSE_SEED")
        if env is not None:
            try:
                cfg.seed = int(env)
            except ValueError as exc:
                raise ModelError(f"COPSENSE_SEED must be an integer, got {env!r}") from exc
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def grid_values(self) -> list:
        if "values" in self.grid:
            return list(self.grid["values"])
        return list(range(1, 11)) if self.family == "COMB" else [0, 1, 2, 3]

    def grid_rows(self) -> list:
        """0-based raw constraint indices that the grid perturbs."""
        if "rows" in self.grid:
            return [int(r) - 1 for r in self.grid["rows"]]
        if self.family in ("SSLP", "SSQP"):
            return list(range(int(self.sizes["m"])))
        return [0]


def instance_keys(cfg: ExperimentConfig) -> list:
    if cfg.family == "File":
        return [("file", str(f)) for f in cfg.files]
    return [(int(s), float(d)) for d in cfg.densities for s in cfg.seeds]


def build_instance(cfg: ExperimentConfig, key) -> model.MbqpInstance:
    sz = cfg.sizes
    if cfg.family == "File":
        return load_instance(key[1])
    seed, d = key[0] + cfg.seed, key[1]
    if cfg.family == "COMB":
        return model.generate_comb(seed, d, int(sz["v"]), int(sz["p"]))
    if cfg.family == "SSLP":
        return model.generate_sslp(seed, d, int(sz["n"]), int(sz["m"]))
    if cfg.family == "SSQP":
        return model.generate_ssqp(seed, d, int(sz["n"]), int(sz["m"]))
    # EdgeColor: d scales the edge budget
    nv = int(sz["vertices"])
    g = model.random_graph(seed, nv, max(1, int(round(d * sz["max_edges"]))), int(sz["max_deg"]))
    return model.reduce_edge_coloring(g, int(sz["H"]), int(sz["rhs"]))


def build_grid(cfg: ExperimentConfig, inst: model.MbqpInstance, key) -> tuple:
    """``(standard-form rows, list of delta vectors)``."""
    raw_rows = cfg.grid_rows()
    rows_map = inst.slack_map.constraint_rows
    try:
        rows = [int(rows_map[r]) if rows_map else r for r in raw_rows]
    except IndexError as exc:
        raise ModelError(f"grid row out of range: {[r + 1 for r in raw_rows]}") from exc
    values = np.asarray(cfg.grid_values(), float)
    limit = int(cfg.grid.get("exhaustive_limit", 1024))
    samples = int(cfg.grid.get("samples", 50))
    total = len(values) ** len(rows)
    if total <= limit and not cfg.grid.get("sampled", False):
        combos = np.array(np.meshgrid(*[values] * len(rows), indexing="ij")).reshape(len(rows), -1).T
    else:
        salt = key[0] if cfg.family != "File" else 0
        rng = np.random.default_rng(np.random.PCG64([cfg.seed, salt]))
        combos = rng.choice(values, size=(samples, len(rows)))
    deltas = []
    for c in combos:
        dv = np.zeros(inst.m)
        dv[rows] = c
        deltas.append(dv)
    return rows, deltas


# ----------------------------------------------------------------------------
# running

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_instance(cfg: ExperimentConfig, key) -> dict:
    """One instance end to end; failures come back as ``{"error": ...}``."""
    t = time.perf_counter()
    label = key[1] if cfg.family == "File" else f"seed={key[0]} d={key[1]}"
    try:
        inst = build_instance(cfg, key)
        rows, deltas = build_grid(cfg, inst, key)
        tol = dict(cfg.tolerances)
        rep = analyze(inst, deltas, methods=cfg.methods, rows=rows,
                      ground_truth=cfg.ground_truth,
                      tau=tol.get("tau", 1e-3), r=tol.get("r", 1e-3),
                      eps0=tol.get("eps0", 1e-3),
                      verify_closed_form=tol.get("verify_closed_form", False),
                      fit_kwargs=tol.get("fit"))
        rep.info.update(key=list(key), density=None if cfg.family == "File" else key[1],
                        grid_rows=[int(r) for r in rows])
        out = {"report": rep, "seconds": time.perf_counter() - t}
    except DOMAIN_ERRORS + (OSError,) as exc:
        log.warning("instance %s failed: %s", label, exc)
        out = {"error": f"{type(exc).__name__}: {exc}", "key": list(key),
               "seconds": time.perf_counter() - t}
    return out


def _delta_label(delta, rows) -> str:
    vals = [delta[r] for r in rows] if rows else list(delta)
    return ":".join(f"{v:g}" for v in vals)


def summarize(reports: list) -> list:
    """Mean relative gap per (density, delta, method), plus an ``all`` density line."""
    acc = {}
    for rep in reports:
        dens = rep.info.get("density")
        rows = rep.info.get("grid_rows", [])
        for r in rep.rows:
            lab = _delta_label(r["delta"], rows)
            for meth, g in r["rel_gap"].items():
                if meth == "Shor1" or g is None or not math.isfinite(g):
                    continue
                for dk in (dens, "all"):
                    acc.setdefault((str(dk), lab, meth), []).append(g)
    out = []
    for (dk, lab, meth), vals in sorted(acc.items()):
        out.append({"density": dk, "delta": lab, "method": meth,
                    "mean_rel_gap": float(np.mean(vals)), "count": len(vals)})
    return out


def gap_table(summary: list, density: str = "all") -> str:
    """Plain-text table: one line per delta, one column per method."""
    rows = [s for s in summary if s["density"] == density]
    meths = sorted({s["method"] for s in rows}, key=lambda m: METHODS.index(m))
    deltas = sorted({s["delta"] for s in rows}, key=_delta_key)
    cell = {(s["delta"], s["method"]): s["mean_rel_gap"] for s in rows}
    lines = ["delta".ljust(10) + "".join(m.rjust(12) for m in meths)]
    for d in deltas:
        line = d.ljust(10)
        for m in meths:
            v = cell.get((d, m))
            line += (f"{v:12.4f}" if v is not None else "           -")
        lines.append(line)
    return "\n".join(lines)


def _delta_key(lab: str):
    return tuple(float(x) for x in lab.split(":"))


def svg_plot(rep: SensitivityReport, width: int = 640, height: int = 400) -> str:
    """Optimal value and each method's prediction against the grid position."""
    rows = rep.info.get("grid_rows", [])
    series = {}
    xs = []
    for k, r in enumerate(rep.rows):
        xs.append(r["delta"][rows[0]] if len(rows) == 1 else k)
        if r["z_true"] is not None:
            series.setdefault("z", []).append(r["z_true"])
        for meth, v in r["predictions"].items():
            series.setdefault(meth, []).append(v)
    colors = {"z": "#000000", "Shor1": "#1f77b4", "Shor2": "#ff7f0e", "Cont": "#2ca02c",
              "ClosedForm": "#d62728", "FitDual": "#9467bd"}
    finite = [v for s in series.values() for v in s if v is not None and math.isfinite(v)]
    if not xs or not finite:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
                f'<text x="20" y="30">no data for {rep.instance}</text></svg>\n')
    lo, hi = min(finite), max(finite)
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    ml, mr, mt, mb = 70, 130, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (hi - y) / (hi - lo) * ph

    xlabel = "delta p" if len(rows) == 1 else "grid point"
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<text x="{ml}" y="18" font-size="13">{rep.instance}</text>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
             f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
             f'<text x="15" y="{mt + ph / 2:.1f}" transform="rotate(-90 15 {mt + ph / 2:.1f})" '
             f'text-anchor="middle">optimal value</text>']
    for t in np.linspace(x0, x1, 5):
        parts.append(f'<text x="{px(t):.1f}" y="{mt + ph + 15}" text-anchor="middle">{t:g}</text>')
    for t in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{ml - 5}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    for k, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{px(x):.2f},{py(v):.2f}" for x, v in zip(xs, vals)
                       if v is not None and math.isfinite(v))
        col = colors.get(name, "#7f7f7f")
        parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 15 * k
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" '
                     f'stroke="{col}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


@dataclass
class ExperimentResult:
    reports: list
    failures: list
    summary: list
    timings: dict
    output: Path | None = None


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> ExperimentResult:
    """Generate, solve and bound every instance; write CSV, JSON and SVG files."""
    keys = instance_keys(cfg)
    if jobs > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_instance, [cfg] * len(keys), keys))
    else:
        results = [run_instance(cfg, k) for k in keys]
    reports, failures, timings = [], [], {}
    for key, res in zip(keys, results):
        if "error" in res:
            failures.append({"key": res["key"], "error": res["error"]})
            continue
        rep = res["report"]
        reports.append(rep)
        timings[rep.instance] = {"total_s": res["seconds"], **{k: v / 1e3 for k, v in
                                                                rep.timings.items()}}
    summary = summarize(reports)
    out = Path(cfg.output) if write else None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        width = max((len(r.rows[0]["delta"]) for r in reports if r.rows), default=0)
        w.writerow(["instance", "method"] + [f"db{i + 1}" for i in range(width)]
                   + ["prediction", "z_true", "rel_gap"])
        for rep in reports:
            for row in rep.csv_rows():
                pad = width + 2 - (len(row) - 3)
                w.writerow(row[:-3] + [""] * pad + row[-3:])
        _atomic_write(out / "report.csv", buf.getvalue())
        sbuf = io.StringIO()
        sw = csv.writer(sbuf, lineterminator="\n")
        sw.writerow(["density", "delta", "method", "mean_rel_gap", "count"])
        for s in summary:
            sw.writerow([s["density"], s["delta"], s["method"], f"{s['mean_rel_gap']:.10g}",
                         s["count"]])
        _atomic_write(out / "summary.csv", sbuf.getvalue())
        body = {"config": asdict(cfg),
                "instances": [{k: v for k, v in rep.to_dict().items() if k != "timings_ms"}
                              for rep in reports],
                "failures": failures, "summary": summary}
        _atomic_write(out / "report.json", json.dumps(body, indent=1, default=_json_default))
        _atomic_write(out / "timings.json", json.dumps(timings, indent=1))
        for rep in reports:
            _atomic_write(out / f"{rep.instance}.svg", svg_plot(rep))
    return ExperimentResult(reports, failures, summary, timings, out)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    return str(o)


# ----------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from exc


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=1, default=_json_default)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text)


def _load_matrix(path) -> np.ndarray:
    d = json.loads(Path(path).read_text())
    if isinstance(d, dict):
        if "matrix" not in d:
            raise ModelError("matrix file needs a 'matrix' key")
        d = d["matrix"]
    M = np.asarray(d, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ModelError(f"expected a square matrix, got shape {M.shape}")
    return M


def cmd_generate(a):
    fam = a.family
    if fam == "comb":
        inst = model.generate_comb(a.seed, a.density, a.v, a.p)
    elif fam == "sslp":
        inst = model.generate_sslp(a.seed, a.density, a.n, a.m)
    elif fam == "ssqp":
        inst = model.generate_ssqp(a.seed, a.density, a.n, a.m)
    elif fam == "clique":
        inst = model.clique_stable_set_instance(a.k)
    elif fam == "single-edge":
        inst = model.single_edge_instance()
    else:
        inst = model.gap_example_instance()
    save_instance(inst, a.output)
    print(f"{inst.name}: n={inst.n} m={inst.m} binaries={len(inst.binaries)} -> {a.output}")


def cmd_solve(a):
    inst = load_instance(a.instance)
    res = solve_exact(inst)
    out = {"instance": inst.name, "status": res.status.value,
           "z": res.z if math.isfinite(res.z) else None,
           "x": None if res.x is None else res.x.tolist(), "nodes": res.nodes}
    if a.output:
        _write_json(out, a.output)
    print(f"{res.status.value} z={res.z:.10g} nodes={res.nodes}")


def cmd_lift(a):
    inst = load_instance(a.instance)
    L = build_lifting(inst)
    dump = {"instance": inst.name, "dim": L.dim, "C": L.C, "T": L.T, "H": L.H,
            "A": list(L.A), "AA": list(L.AA), "K": list(L.K), "KK": list(L.KK),
            "N": {str(j + 1): N for j, N in L.N.items()}}
    _write_json(dump, a.output)


def _z_or(inst, l):
    if l is not None:
        return l
    res = solve_exact(inst)
    if not res.optimal:
        raise ExactError(f"exact solve ended {res.status.value}; pass --l")
    return res.z


def cmd_closed_form(a):
    inst = load_instance(a.instance)
    l = _z_or(inst, a.l)
    cert = synthesize_closed_form(inst, l, a.eps0, a.r, mode=Mode(a.mode),
                                  verify_result=not a.no_verify)
    save_certificate(cert, a.output)
    tag = cert.verdict.tag.value if cert.verdict else "unverified"
    print(f"objective={cert.objective:.10g} verdict={tag} -> {a.output}")


def cmd_fit(a):
    inst = load_instance(a.instance)
    rows = [r - 1 for r in a.rows] if a.rows else list(range(inst.m))
    rg = a.rg if len(a.rg) > 1 else a.rg * len(rows)
    if len(rg) != len(rows):
        raise ValueError("--rg needs one value or one per row")
    kw = dict(tau=a.tau, r=a.r, use_mccormick=not a.no_mccormick,
              use_linear_penalty=not a.no_linear, max_iter=a.max_iter)
    if a.l is not None:
        kw.update(l_mode="fixed", l=a.l)
    spec = FitSpec.for_ranges(inst, rows, rg, **kw)
    cert = fit_dual(inst, spec)
    save_certificate(cert, a.output)
    print(f"objective={cert.objective:.10g} verdict={cert.verdict.tag.value} "
          f"tau_shift={cert.provenance['tau_shift']:.3g} -> {a.output}")


def cmd_predict(a):
    cert = load_certificate(a.certificate)
    db = np.zeros(cert.b.size)
    if a.delta:
        if len(a.delta) != cert.b.size:
            raise ValueError(f"--delta needs {cert.b.size} entries")
        db = np.asarray(a.delta, float)
    print(f"{predict(cert, db):.10g}")


def cmd_check_cop(a):
    M = _load_matrix(a.matrix)
    if a.method == "partition":
        v = check_partition(M, max_nodes=a.max_nodes)
    elif a.method == "spn":
        v = check_spn(M)
    elif a.method == "refute":
        v = refute(M, restarts=a.restarts)
    else:
        v = verify(M, max_nodes=a.max_nodes, restarts=a.restarts)
    print(v.tag.value)
    if a.details:
        print(json.dumps({"method": v.method, "margin": v.margin, "info": v.info,
                          "witness": None if v.witness is None else list(v.witness)},
                         default=_json_default))


def cmd_reduce(a):
    g = model.load_graph(a.graph)
    inst = model.reduce_edge_coloring(g, a.H, a.rhs)
    save_instance(inst, a.output)
    print(f"{inst.name}: n={inst.n} m={inst.m} -> {a.output}")
    if a.chromatic:
        print(f"chromatic index = {int(chromatic_index(g))}")


def cmd_demo_gap(a):
    rep = demo_gap_example(a.step, a.bound)
    print(rep.table(a.limit))
    print(f"points={len(rep.rows)} complete={rep.complete} "
          f"max_formula_error={rep.max_formula_error:.3g}")


def cmd_demo_nonattain(a):
    rep = demo_nonattainment(a.k)
    print(rep.table())


def cmd_experiment(a):
    cfg = ExperimentConfig.load(a.config)
    if a.output:
        cfg.output = a.output
    res = run_experiment(cfg, jobs=a.jobs)
    print(gap_table(res.summary))
    print(f"instances={len(res.reports)} failures={len(res.failures)} -> {res.output}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="copsense", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", help="write a generated instance")
    s.add_argument("family", choices=["comb", "sslp", "ssqp", "clique", "single-edge", "gap"])
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--density", type=float, default=0.5)
    s.add_argument("--v", type=int, default=5)
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--m", type=int, default=2)
    s.add_argument("--k", type=int, default=6)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="exact optimum by branch and bound")
    s.add_argument("instance")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("lift", help="dump the lifted matrices")
    s.add_argument("instance")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("closed-form", help="closed-form dual certificate")
    s.add_argument("instance")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--l", type=float, help="target value (default: exact optimum)")
    s.add_argument("--eps0", type=float, default=1e-3)
    s.add_argument("--r", type=float, default=1e-3)
    s.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.BOUNDED.value)
    s.add_argument("--no-verify", action="store_true")
    s.set_defaults(func=cmd_closed_form)

    s = sub.add_parser("fit", help="fitted dual certificate")
    s.add_argument("instance")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--rows", type=_ints, help="1-based rows to weight (default: all)")
    s.add_argument("--rg", type=_ints, default=[3], help="range per row (or one for all)")
    s.add_argument("--tau", type=float, default=1e-3)
    s.add_argument("--r", type=float, default=1e-3)
    s.add_argument("--l", type=float, help="fix l instead of optimizing it")
    s.add_argument("--no-mccormick", action="store_true")
    s.add_argument("--no-linear", action="store_true")
    s.add_argument("--max-iter", type=int, default=10_000)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="bound at b + delta from a certificate")
    s.add_argument("certificate")
    s.add_argument("--delta", type=_floats, help="one entry per row, comma separated")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("check-cop", help="copositivity verdict for a matrix file")
    s.add_argument("matrix")
    s.add_argument("--method", choices=["auto", "partition", "spn", "refute"], default="auto")
    s.add_argument("--max-nodes", type=int, default=400_000)
    s.add_argument("--restarts", type=int, default=64)
    s.add_argument("--details", action="store_true", help="print method, margin and witness")
    s.set_defaults(func=cmd_check_cop)

    s = sub.add_parser("reduce-edgecolor", help="edge-coloring instance from a graph file")
    s.add_argument("graph")
    s.add_argument("--H", type=int, required=True)
    s.add_argument("--rhs", type=int, required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--chromatic", action="store_true", help="also print the chromatic index")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("demo-gap", help="witness table for the zero-gap counterexample")
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--bound", type=float, default=10.0)
    s.add_argument("--limit", type=int, default=12)
    s.set_defaults(func=cmd_demo_gap)

    s = sub.add_parser("demo-nonattain", help="non-attainment chain on the clique instance")
    s.add_argument("--k", type=int, default=6)
    s.set_defaults(func=cmd_demo_nonattain)

    s = sub.add_parser("experiment", help="run a JSON experiment config")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="output directory (overrides the config)")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        a.func(a)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DOMAIN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
