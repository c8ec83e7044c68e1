import csv
import io
import json

import numpy as np
import pytest

from copsense.copositive import DualCertificate, synthesize_closed_form
from copsense.exact import solve_exact
from copsense.lift import build_lifting
from copsense.model import generate_comb, generate_sslp, single_edge_instance
from copsense.sensitivity import (
    FitSpec, analyze, delta_grid, fit_dual, fit_objective, gap_flag, predict, relative_gap,
    select_weights, solve_shor2,
)


@pytest.mark.parametrize("rg, want", [(3, (3.5, 3.0)), (0, (0.0, 0.0)), (1, (0.5, 1.0))])
def test_select_weights_examples(rg, want):
    assert select_weights(rg) == pytest.approx(want, abs=0)


def test_select_weights_are_grid_means():
    for rg in range(8):
        grid = np.arange(rg + 1)
        w1, w2 = select_weights(rg)
        assert w1 == pytest.approx(np.mean(grid ** 2), abs=1e-12)
        assert w2 == pytest.approx(np.mean(2 * grid), abs=1e-12)
    w1, w2 = select_weights([0, 2])
    np.testing.assert_allclose(w1, [0.0, 5 / 3])
    with pytest.raises(ValueError):
        select_weights(-1)
    with pytest.raises(ValueError):
        select_weights(1.5)


def test_fitspec_validation():
    with pytest.raises(ValueError):
        FitSpec([-1.0], [0.0])
    with pytest.raises(ValueError):
        FitSpec([0.0], [0.0], l_mode="fixed")
    with pytest.raises(ValueError):
        FitSpec([0.0], [0.0], tau=-1.0)


def test_fit_fixed_l_single_edge():
    inst = single_edge_instance()
    z = solve_exact(inst).z
    spec = FitSpec(np.zeros(inst.m), np.zeros(inst.m), l_mode="fixed", l=z)
    cert = fit_dual(inst, spec)
    assert cert.copositive
    assert abs(predict(cert, np.zeros(inst.m)) - z) <= 0.1
    assert predict(cert, np.zeros(inst.m)) <= z + 1e-6


@pytest.mark.parametrize("inst", [single_edge_instance(), generate_comb(1, 0.5, 1, 1)],
                         ids=lambda i: i.name)
def test_variable_l_reaches_shor2(inst):
    s2 = solve_shor2(inst)
    z = solve_exact(inst).z
    assert s2.value == pytest.approx(z, abs=1e-5)   # Shor2 is tight here
    cert = fit_dual(inst, FitSpec(np.zeros(inst.m), np.zeros(inst.m)))
    assert cert.provenance["l"] >= s2.value - 1e-3
    assert predict(cert, np.zeros(inst.m)) <= z + 1e-6


def test_aggregation_identity(rng):
    inst = generate_sslp(0, 0.5, 3, 2)
    L = build_lifting(inst)
    b = inst.b
    for _ in range(20):
        p = rng.uniform(0, 3, inst.m)
        delta = rng.normal(size=inst.m)
        l, tau, r = rng.normal() * 5, rng.uniform(0, 0.1), rng.uniform(0, 0.1)
        alpha = -p * b - delta
        beta = p + tau
        theta = p @ b ** 2 + 2 * delta @ b + tau - (l + r)
        cert = DualCertificate(alpha, beta, np.zeros(len(inst.binaries)), theta,
                               np.zeros((L.dim, L.dim)), b, inst.binaries)
        direct = l + r - tau * (1 + b @ b)
        assert cert.objective == pytest.approx(direct, abs=1e-9)
        # the same number from the lifted matrices: <M - C, Y> for a rank-one Y at b
        via_lift = -sum(alpha[i] * 2 * b[i] + beta[i] * b[i] ** 2 for i in range(inst.m)) - theta
        assert via_lift == pytest.approx(direct, abs=1e-9)


def test_fitted_certificate_aggregation():
    inst = generate_comb(0, 0.5, 1, 1)
    row = inst.constraint_row(0)
    spec = FitSpec.for_ranges(inst, [row], 3)
    cert = fit_dual(inst, spec)
    pv = cert.provenance
    want = pv["l"] + pv["r"] - pv["tau"] * (1 + inst.b @ inst.b)
    assert cert.objective == pytest.approx(want, abs=1e-9)
    L = build_lifting(inst)
    np.testing.assert_allclose(cert.reconstruct(L), cert.M, atol=1e-8)


def test_predict_example():
    cert = DualCertificate([-1.0], [1.0], [], 1.0, np.zeros((2, 2)), [1.0], ())
    assert predict(cert, [1.0]) == pytest.approx(-1.0, abs=0)
    assert predict(cert, [0.0]) == pytest.approx(cert.objective)


def test_predict_shift_law(rng):
    for _ in range(50):
        m = int(rng.integers(1, 5))
        a, bt, b = rng.normal(size=(3, m))
        cert = DualCertificate(a, bt, [], rng.normal(), np.zeros((m + 1, m + 1)), b, ())
        db = rng.normal(size=m)
        lhs = predict(cert, db) - predict(cert, np.zeros(m))
        rhs = -np.sum(2 * db * a) - np.sum((db ** 2 + 2 * b * db) * bt)
        assert lhs == pytest.approx(rhs, abs=1e-9)


@pytest.mark.parametrize("z, p1, p2, want", [(5, 3, 4, 0.5), (5, 3, 3, 1.0), (5, 3, 5, 0.0)])
def test_relative_gap_examples(z, p1, p2, want):
    assert relative_gap(z, p1, p2) == pytest.approx(want)


def test_relative_gap_flags():
    assert np.isnan(relative_gap(1.0, 1.0, 0.5))
    assert gap_flag(1.0, 1.0, 0.5) == "degenerate"
    assert gap_flag(1.0, 2.0, 0.5) == "weak-duality"
    assert gap_flag(1.0, 0.0, 0.5) == ""


def test_fit_objective_is_grid_mean_prediction(rng):
    """Minimizing the fit objective maximizes the mean prediction over the grid, up to a constant."""
    inst = generate_comb(0, 0.5, 1, 1)
    row = inst.constraint_row(0)
    rg = 3
    spec = FitSpec.for_ranges(inst, [row], rg)
    grid = delta_grid(inst.m, [row], range(rg + 1))
    b = inst.b
    for _ in range(10):
        p = rng.uniform(0, 2, inst.m)
        delta = rng.normal(size=inst.m)
        l = rng.normal()
        tau, r = spec.tau, spec.r
        cert = DualCertificate(-p * b - delta, p + tau, [], p @ b ** 2 + 2 * delta @ b + tau - (l + r),
                               np.zeros((2, 2)), b, ())
        mean_pred = np.mean([predict(cert, dv) for dv in grid])
        const = r - tau * np.mean([1 + (b + dv) @ (b + dv) for dv in grid])
        assert -mean_pred == pytest.approx(fit_objective(spec, p, delta, l) - const, abs=1e-9)


def test_mccormick_columns_do_not_hurt():
    inst = generate_comb(1, 0.5, 2, 1)
    row = inst.constraint_row(0)
    with_mc = fit_dual(inst, FitSpec.for_ranges(inst, [row], 3))
    without = fit_dual(inst, FitSpec.for_ranges(inst, [row], 3, use_mccormick=False))
    assert with_mc.provenance["fit_objective"] <= without.provenance["fit_objective"] + 1e-4


def test_analyze_small_instance():
    inst = generate_comb(1, 0.5, 1, 1)
    row = inst.constraint_row(0)
    grid = delta_grid(inst.m, [row], range(4))
    rep = analyze(inst, grid, verify_closed_form=True)
    assert not rep.violations()
    assert "errors" not in rep.info
    assert rep.info["closed_form_verdict"] == "Copositive"
    assert set(rep.methods()) == {"Shor1", "Shor2", "Cont", "ClosedForm", "FitDual"}
    for r in rep.rows:
        for meth, g in r["rel_gap"].items():
            if np.isfinite(g):
                assert g >= -1e-6
    data = json.loads(rep.to_json())
    assert len(data["rows"]) == len(grid)
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0][:2] == ["instance", "method"] and "rel_gap" in rows[0]
    assert len(rows) == 1 + 5 * len(grid)


def test_analyze_without_methods():
    inst = single_edge_instance()
    rep = analyze(inst, [np.zeros(inst.m)], methods=())
    assert rep.rows[0]["z_true"] == -2.0
    assert rep.rows[0]["predictions"] == {}


def test_closed_form_prediction_is_below_truth():
    inst = generate_comb(0, 0.5, 1, 1)
    z = solve_exact(inst).z
    cert = synthesize_closed_form(inst, z)
    assert cert.copositive
    assert predict(cert, np.zeros(inst.m)) <= z
