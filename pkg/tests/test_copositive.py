import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from copsense.copositive import (
    DualCertificate, ModeError, UnboundedRegionError, Verdict, check_partition, check_spn,
    closed_form_matrix, compute_hj, compute_k, compute_pj, compute_rho, compute_uj,
    demo_gap_example, demo_nonattainment, load_certificate, perturb_certificate, refute,
    save_certificate, synthesize_closed_form, verify,
)
from copsense.exact import solve_exact
from copsense.lift import build_lifting, quad_form
from copsense.model import (
    MbqpInstance, ModelError, gap_example_instance, generate_comb, generate_sslp, generate_ssqp,
    single_edge_instance,
)
from copsense.sensitivity import predict

HORN = np.array([[1, -1, 1, 1, -1],
                 [-1, 1, -1, 1, 1],
                 [1, -1, 1, -1, 1],
                 [1, 1, -1, 1, -1],
                 [-1, 1, 1, -1, 1]], float)


def _grid_min_on_simplex(M, steps=24):
    """Brute-force minimum of y'My over a lattice of the simplex."""
    d = M.shape[0]
    best = np.inf
    for c in itertools.product(range(steps + 1), repeat=d - 1):
        if sum(c) > steps:
            continue
        y = np.array(list(c) + [steps - sum(c)], float) / steps
        best = min(best, y @ M @ y)
    return best


# ----------------------------------------------------------------------------
# verifiers

def test_spn_identity():
    v = check_spn(np.eye(3))
    assert v.tag == Verdict.COPOSITIVE
    P, N = v.certificate["P"], v.certificate["N"]
    assert np.linalg.norm(np.eye(3) - P - N) <= 1e-6
    assert np.linalg.eigvalsh(P)[0] >= -1e-8
    assert N.min() >= -1e-10


def test_spn_never_refutes():
    M = np.array([[1.0, -2.0], [-2.0, 1.0]])
    assert check_spn(M).tag == Verdict.UNDECIDED
    r = refute(M)
    assert r.tag == Verdict.NOT_COPOSITIVE
    y = r.witness
    assert y.min() >= 0 and y.sum() == pytest.approx(1.0)
    assert y @ M @ y <= -1e-9


def test_horn_matrix():
    assert check_spn(HORN).tag == Verdict.UNDECIDED
    assert check_partition(HORN).tag == Verdict.COPOSITIVE
    assert refute(HORN).tag == Verdict.UNDECIDED
    assert _grid_min_on_simplex(HORN, 12) >= -1e-12


def test_refute_examples():
    r = refute(-np.eye(3))
    assert r.tag == Verdict.NOT_COPOSITIVE and r.margin == pytest.approx(-1.0)
    assert np.count_nonzero(r.witness) == 1
    G = np.random.default_rng(0).normal(size=(4, 4))
    assert refute(G @ G.T).tag == Verdict.UNDECIDED


def test_refute_gap_example_duals(rng):
    L = build_lifting(gap_example_instance())
    for _ in range(20):
        th, al, be = rng.uniform(-10, 10, 3)
        M = L.C + al * L.A[0] + be * L.AA[0] + th * L.T
        assert refute(M).tag == Verdict.NOT_COPOSITIVE
        eps = 1e-3
        y = np.array([0.0, 1.0, 1.0 + eps])
        assert quad_form(M, y) == pytest.approx(-2 * eps + (be - 1) * eps ** 2, abs=1e-12)


def test_partition_examples():
    v = check_partition(np.array([[0.0, -1.0], [-1.0, 2.0]]))
    assert v.tag == Verdict.NOT_COPOSITIVE
    y = v.witness
    assert y.min() >= 0 and y.sum() == pytest.approx(1.0)
    assert y @ np.array([[0.0, -1.0], [-1.0, 2.0]]) @ y <= -1e-9
    assert check_partition(np.zeros((3, 3))).tag == Verdict.COPOSITIVE


def test_verifiers_consistent(rng):
    for _ in range(40):
        d = int(rng.integers(2, 6))
        G = rng.normal(size=(d, d))
        M = G + G.T + rng.uniform(0, 3) * np.eye(d)
        spn, ref, part = check_spn(M, max_iter=3000), refute(M), check_partition(M)
        if spn.copositive:
            assert ref.tag == Verdict.UNDECIDED
            assert part.tag != Verdict.NOT_COPOSITIVE
        if ref.tag == Verdict.NOT_COPOSITIVE:
            w = ref.witness
            assert w @ M @ w <= -1e-9
            assert part.tag != Verdict.COPOSITIVE
        if part.tag == Verdict.COPOSITIVE and d <= 4:
            assert _grid_min_on_simplex(M, 16) >= -1e-9


def test_verify_routes():
    assert verify(-np.eye(2)).method == "refute"
    assert verify(np.eye(3)).copositive


# ----------------------------------------------------------------------------
# auxiliary constants

def _one_binary():
    return MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.array([[1.0, 1.0]]), [1.0], (0,))


def test_hj_examples():
    inst = _one_binary()
    assert compute_hj(inst, 0, 1.0) == pytest.approx(1.0)
    assert compute_hj(inst, 0, 2.0) == pytest.approx(2.0)
    with pytest.raises(KeyError):
        compute_hj(inst, 1, 1.0)
    with pytest.raises(ValueError):
        compute_hj(inst, 0, 0.0)


def test_hj_homogeneous():
    inst = MbqpInstance(np.zeros((3, 3)), np.zeros(3), np.array([[1.0, 1.0, -1.0], [0, 1.0, 2.0]]),
                        [0.0, 0.0], (0,))
    for eta in (0.5, 1.0, 3.0):
        assert compute_hj(inst, 0, 2 * eta) == pytest.approx(2 * compute_hj(inst, 0, eta))


def test_hj_violation_raises():
    inst = MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.array([[0.0, 1.0]]), [1.0], (0,))
    with pytest.raises(ModelError):
        compute_hj(inst, 0, 1.0)


def test_uj_one_binary():
    # x + w = 1 with x >= 1 + eta leaves residual at least eta
    assert compute_uj(_one_binary(), 0, 0.25) == pytest.approx(0.25)


def _pj_by_grid(inst, j, r, g, num=400):
    lam = min(r / (4 * g), 1.0)
    best = math.inf
    n, m = inst.n, inst.m
    for v in np.linspace(lam, 10.0, num):
        # min psi s.t. |Ax - b| <= psi, x >= 0, x_j >= 1 + v
        A_ub = np.block([[inst.A, -np.ones((m, 1))], [-inst.A, -np.ones((m, 1))]])
        b_ub = np.concatenate([inst.b, -inst.b])
        bounds = [(0, None)] * n + [(0, None)]
        bounds[j] = (1 + v, None)
        cost = np.zeros(n + 1)
        cost[-1] = 1.0
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        best = min(best, res.fun / v)
    return best


@pytest.mark.parametrize("inst", [generate_comb(0, 0.5, 2, 1), generate_sslp(1, 0.5, 2, 1),
                                  generate_ssqp(2, 0.5, 2, 2)], ids=lambda i: i.name)
def test_pj_against_grid(inst):
    j = inst.binaries[0]
    for r, g in ((1e-3, 1e-2), (0.5, 0.1), (1.0, 1.0)):
        p = compute_pj(inst, j, r, g)
        assert 0 < p <= _pj_by_grid(inst, j, r, g) + 1e-3
        assert _pj_by_grid(inst, j, r, g) >= p - 1e-3


def test_pj_threshold_clamps():
    inst = single_edge_instance()
    assert compute_pj(inst, 0, 8.0, 1.0) == pytest.approx(compute_pj(inst, 0, 4.0, 1.0))


def test_rho_examples():
    zero_c = MbqpInstance(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), [3.0])
    rr = compute_rho(zero_c)
    assert not rr.feasible and rr.rho == pytest.approx(4.0)
    unit = MbqpInstance(np.eye(1), [-0.5], np.zeros((0, 1)), [])
    rr = compute_rho(unit, l=0.0)
    assert rr.tau_lp == pytest.approx(1.0)
    assert rr.lambda0 == pytest.approx(2.0)
    with pytest.raises(ModeError):
        compute_rho(gap_example_instance())


def test_rho_lp_against_highs():
    inst = generate_ssqp(0, 0.5, 2, 1)
    rr = compute_rho(inst)
    w, U = np.linalg.eigh(inst.Q)
    V = np.sqrt(np.clip(w, 0, None))[:, None] * U.T
    G = np.vstack([V, -V, inst.A, -inst.A])
    n = inst.n
    res = linprog(np.r_[np.zeros(n), 1.0], A_ub=np.hstack([G, -np.ones((G.shape[0], 1))]),
                  b_ub=np.zeros(G.shape[0]), A_eq=np.r_[2 * inst.c, 0.0][None],
                  b_eq=[-1.0], bounds=(0, None), method="highs")
    assert rr.tau_lp == pytest.approx(res.fun, rel=1e-7)


def test_compute_k_cases():
    with pytest.raises(UnboundedRegionError):
        compute_k(build_lifting(MbqpInstance(np.eye(2), np.zeros(2), np.zeros((0, 2)), [])))
    eye = MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.eye(2), [1.0, 2.0])
    L = build_lifting(eye)
    np.testing.assert_array_equal(L.H, np.eye(3))
    assert 0.95 <= compute_k(L) <= 1.0
    comb = generate_comb(0, 0.5, 1, 1)
    L = build_lifting(comb)
    k = compute_k(L)
    assert k > 0
    assert check_partition(L.H - k * np.eye(L.dim)).copositive


# ----------------------------------------------------------------------------
# closed form

def test_closed_form_single_edge():
    inst = single_edge_instance()
    cert = synthesize_closed_form(inst, -2.0, eps0=0.05, r=1e-3)
    assert cert.verdict.tag == Verdict.COPOSITIVE and cert.verdict.method == "partition"
    want = -2.0 - 1e-3 * 2 - 0.05 * (1 + inst.b @ inst.b)
    assert cert.objective == pytest.approx(want, abs=1e-10)
    L = build_lifting(inst)
    np.testing.assert_allclose(cert.reconstruct(L), cert.M, atol=1e-9)
    assert refute(cert.M).tag == Verdict.UNDECIDED


@pytest.mark.parametrize("c, ok", [((1.0, 2.0), True), ((0.0, 0.5), True), ((-1.0, 2.0), False)])
def test_closed_form_empty_rows(c, ok):
    inst = MbqpInstance(np.zeros((2, 2)), np.array(c), np.zeros((0, 2)), [])
    L = build_lifting(inst)
    tau = 1e-3
    U = closed_form_matrix(L, 5.0, 0.0, 0.0, 1e-3, tau, 0.0)
    np.testing.assert_array_equal(U, L.C + tau * L.T)
    assert verify(U).copositive == ok
    if ok:
        cert = synthesize_closed_form(inst, 0.0, eps0=tau, mode="PsdUnbounded")
        assert cert.copositive
        np.testing.assert_array_equal(cert.M, L.C + tau * L.T)
    else:
        with pytest.raises(ModelError):
            synthesize_closed_form(inst, 0.0, eps0=tau, mode="PsdUnbounded")


def test_closed_form_objective_arithmetic():
    inst = MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.array([[2.0, 1.0]]), [2.0], (0,))
    # l = 5 is above z = 0, so no parameter choice is copositive; one round is enough
    cert = synthesize_closed_form(inst, 5.0, eps0=0.01, r=0.001, verify_result=False, rounds=1)
    assert cert.verdict.tag == Verdict.NOT_COPOSITIVE
    assert cert.objective == pytest.approx(4.949, abs=1e-10)


def test_closed_form_mode_mismatch():
    with pytest.raises(ModeError):
        synthesize_closed_form(MbqpInstance(np.eye(1), [1.0], np.zeros((0, 1)), []), 0.0)
    with pytest.raises(ModeError):
        synthesize_closed_form(gap_example_instance(), 0.0, mode="PsdUnbounded")


def test_closed_form_gap_shrinks():
    inst = single_edge_instance()
    gaps = []
    for r in (1e-2, 1e-3, 1e-4):
        cert = synthesize_closed_form(inst, -2.0, eps0=r, r=r)
        assert cert.copositive
        gaps.append(-2.0 - cert.objective)
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_closed_form_weak_duality():
    inst = generate_comb(1, 0.5, 1, 1)
    z = solve_exact(inst).z
    cert = synthesize_closed_form(inst, z)
    assert cert.copositive
    row = inst.constraint_row(0)
    for step in (-1, 1, 2, 3):
        dv = np.zeros(inst.m)
        dv[row] = step
        res = solve_exact(inst.with_rhs(inst.b + dv))
        if res.optimal:
            assert predict(cert, dv) <= res.z + 1e-4


def test_perturb_certificate():
    inst = single_edge_instance()
    L = build_lifting(inst)
    cert = synthesize_closed_form(inst, -2.0, eps0=0.01)
    for i in range(inst.m):
        pc = perturb_certificate(cert, i)
        assert pc.objective == pytest.approx(cert.objective, abs=1e-10)
        np.testing.assert_allclose(pc.M, cert.M + L.KK[i], atol=1e-12)
        np.testing.assert_allclose(pc.reconstruct(L), pc.M, atol=1e-9)
        assert pc.copositive
        for step in (0.5, 1.0, 3.0):
            dv = np.zeros(inst.m)
            dv[i] = step
            assert predict(cert, dv) - predict(pc, dv) == pytest.approx(step ** 2, abs=1e-9)


def test_certificate_json_round_trip(tmp_path):
    cert = synthesize_closed_form(single_edge_instance(), -2.0, eps0=0.01)
    path = tmp_path / "cert.json"
    save_certificate(cert, path)
    back = load_certificate(path)
    assert back.objective == pytest.approx(cert.objective, abs=1e-12)
    np.testing.assert_allclose(back.M, cert.M)
    assert back.verdict.tag == cert.verdict.tag
    d = cert.to_dict()
    d["objective"] += 1.0
    with pytest.raises(ValueError):
        DualCertificate.from_dict(d)


# ----------------------------------------------------------------------------
# demonstrations

def test_gap_demo_examples():
    rep = demo_gap_example(step=1.0, bound=2.0)
    assert rep.complete
    rows = {tuple(r[:3]): r for r in rep.rows}
    assert rows[(0.0, 0.0, 1.0)][3] == pytest.approx(0.1)
    assert rows[(0.0, 0.0, 1.0)][4] == pytest.approx(-0.2, abs=1e-12)
    assert rows[(0.0, 0.0, 2.0)][4] == pytest.approx(-0.19, abs=1e-12)
    assert "witness for all: True" in rep.table()


def test_nonattainment_demo():
    rep = demo_nonattainment()
    assert rep.exact_value == pytest.approx(-2.0)
    assert rep.all_refuted
    boundary = [s for s in rep.samples if s["gamma"] == pytest.approx(-4 / 3) and s["mu"] == 0]
    for s in boundary:
        assert s["y1"] == pytest.approx(-4 - 3 * s["gamma"], abs=1e-12)
    flips = [s for s in rep.samples if s["y_plus"] * s["y_minus"] < 0]
    assert flips
