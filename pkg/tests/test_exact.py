import numpy as np
import pytest
from scipy.optimize import linprog

from copsense.exact import (
    ExactError, ExactStatus, chromatic_index, enumerate_binary, is_bounded, solve_cont,
    solve_exact, zeta_divergence_probe, zeta_probe,
)
from copsense.model import (
    Graph, MbqpInstance, complete_graph, gap_example_instance, generate_comb, generate_sslp,
    generate_ssqp, path_graph, petersen_graph, reduce_edge_coloring, single_edge_instance,
)
from helpers import milp_value

GAP_EXAMPLE_VALUE = 0.0   # known optimum of min x1^2 - x2^2 s.t. x1 = x2, x >= 0


def test_single_edge():
    res = solve_exact(single_edge_instance())
    assert res.optimal and res.z == -2.0
    assert sorted(res.x[:2]) == [0.0, 1.0]


def test_gap_example_rejected():
    with pytest.raises(ExactError):
        solve_exact(gap_example_instance())


def test_k4_coloring_value():
    assert solve_exact(reduce_edge_coloring(complete_graph(4), 4, 4)).z == pytest.approx(4.0)


def test_infeasible_and_unbounded():
    inf = MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.array([[1.0, 1.0]]), [-1.0])
    assert solve_exact(inf).status == ExactStatus.INFEASIBLE
    unb = MbqpInstance(np.zeros((2, 2)), np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), [0.0])
    assert solve_exact(unb).status == ExactStatus.UNBOUNDED


def test_budget_exceeded_keeps_incumbent():
    inst = generate_comb(0, 0.5, 4, 3)
    res = solve_exact(inst, node_budget=5, prune=False)
    assert res.status == ExactStatus.BUDGET
    assert res.nodes == 5
    assert res.x is not None and inst.is_feasible(res.x)
    assert res.z >= solve_exact(inst).z


@pytest.mark.parametrize("inst", [generate_comb(s, 0.5, 3, 2) for s in range(3)]
                         + [generate_sslp(s, 0.5, 4, 2) for s in range(3)],
                         ids=lambda i: i.name)
def test_linear_instances_against_milp(inst):
    res = solve_exact(inst)
    assert res.optimal
    assert res.z == pytest.approx(milp_value(inst), abs=1e-7)
    assert inst.is_feasible(res.x, 1e-7)
    assert inst.objective(res.x) == pytest.approx(res.z, abs=1e-9)


@pytest.mark.parametrize("inst", [generate_comb(4, 0.5, 3, 2), generate_sslp(5, 0.3, 5, 2),
                                  generate_ssqp(6, 0.5, 5, 2), generate_ssqp(7, 0.7, 4, 3)],
                         ids=lambda i: i.name)
def test_pruning_is_sound(inst):
    assert len(inst.binaries) <= 10
    a = solve_exact(inst)
    b = enumerate_binary(inst)
    assert a.z == pytest.approx(b.z, abs=1e-8)
    assert b.nodes == 2 ** len(inst.binaries)


def test_indefinite_binary_part_is_convexified():
    # min -x1^2 - x2^2 + 2 x1 x2 over two binaries with x1 + x2 <= 1 style rows
    Q = np.zeros((4, 4))
    Q[:2, :2] = [[-1.0, 1.0], [1.0, -1.0]]
    A = np.array([[1.0, 0, 1, 0], [0, 1.0, 0, 1]])
    inst = MbqpInstance(Q, np.zeros(4), A, [1.0, 1.0], (0, 1))
    brute = min(-a * a - b * b + 2 * a * b for a in (0, 1) for b in (0, 1))
    assert solve_exact(inst).z == pytest.approx(brute)


def test_cont_is_lp_relaxation_for_linear():
    inst = generate_comb(2, 0.5, 3, 2)
    ub = np.full(inst.n, np.inf)
    ub[list(inst.binaries)] = 1.0
    ref = linprog(2 * inst.c, A_eq=inst.A, b_eq=inst.b, bounds=list(zip(np.zeros(inst.n), ub)),
                  method="highs")
    cont = solve_cont(inst)
    assert cont.value == pytest.approx(ref.fun, abs=1e-7)
    assert cont.value <= solve_exact(inst).z + 1e-6


def test_cont_integral_case():
    inst = single_edge_instance()
    # the relaxation optimum (1/2, 1/2) has value -2 = z
    assert solve_cont(inst).value == pytest.approx(-2.0)


@pytest.mark.parametrize("inst", [generate_ssqp(s, 0.5, 4, 2) for s in range(4)],
                         ids=lambda i: i.name)
def test_cont_below_exact_and_duals_valid(inst):
    cont = solve_cont(inst)
    z = solve_exact(inst).z
    assert cont.value <= z + 1e-6
    for k in range(2):
        row = inst.constraint_row(k)
        for step in (1.0, 2.0, -1.0):
            dv = np.zeros(inst.m)
            dv[row] = step
            res = solve_exact(inst.with_rhs(inst.b + dv))
            if res.optimal:
                assert cont.predict(dv) <= res.z + 1e-6


def test_is_bounded():
    assert is_bounded(generate_comb(0, 0.5, 2, 1))
    unb = MbqpInstance(np.zeros((2, 2)), np.zeros(2), np.array([[1.0, -1.0]]), [0.0])
    assert not is_bounded(unb)


# ----------------------------------------------------------------------------
# local stability

@pytest.mark.parametrize("inst", [single_edge_instance(), generate_comb(1, 0.5, 2, 1),
                                  generate_sslp(2, 0.5, 3, 1), generate_ssqp(3, 0.5, 3, 2)],
                         ids=lambda i: i.name)
def test_zeta_collapse_and_monotone(inst):
    z = solve_exact(inst).z
    vals = [zeta_probe(inst, e).value for e in (0.0, 1e-3, 1e-2, 1e-1)]
    assert vals[0] == pytest.approx(z, abs=1e-6)
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    # an empirical Lipschitz constant exists
    t = max((z - v) / e for v, e in zip(vals[1:], (1e-3, 1e-2, 1e-1)))
    assert np.isfinite(t)


def test_zeta_sampled_mode_is_flagged():
    inst = generate_comb(0, 0.5, 3, 2)
    res = zeta_probe(inst, 1e-2, samples=16, max_patterns=8)
    assert not res.exact and res.info["mode"] == "sampled"
    assert res.value >= zeta_probe(inst, 1e-2).value - 1e-9


def test_zeta_gap_example_diverges():
    inst = gap_example_instance()
    at_zero = zeta_probe(inst, 0.0, box_cap=10.0)
    assert at_zero.value == pytest.approx(GAP_EXAMPLE_VALUE, abs=1e-9)
    probe = zeta_divergence_probe(inst, 0.1)
    vals = [v for _, v in probe]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= -1e3


def test_zeta_rejects_negative_eps():
    with pytest.raises(ValueError):
        zeta_probe(single_edge_instance(), -1.0)


# ----------------------------------------------------------------------------
# chromatic index

def _proper(g, coloring):
    for r, s in g.incident_pairs():
        if coloring[g.edges[r]] == coloring[g.edges[s]]:
            return False
    return True


@pytest.mark.parametrize("g, want", [(complete_graph(4), 3), (path_graph(3), 2),
                                     (petersen_graph(), 4), (complete_graph(3), 3),
                                     (Graph(2, ()), 0)])
def test_chromatic_index_examples(g, want):
    res = chromatic_index(g)
    assert int(res) == want
    if g.edges:
        assert _proper(g, res.coloring)
        assert len(set(res.coloring.values())) == want


def test_chromatic_budget_interval():
    res = chromatic_index(petersen_graph(), budget=3)
    assert res.value is None and res.interval == (3, 4)
    with pytest.raises(ValueError):
        int(res)
