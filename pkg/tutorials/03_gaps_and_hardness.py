"""Where copositive duality can fail, and why exact sensitivity is hard.

1. min x1^2 - x2^2 with x1 = x2 has value 0, but every candidate dual matrix
   is refuted by y = (0, 1, 1 + eps).
2. On the K6 stable-set instance the dual optimum -2 is approached but a
   symmetric candidate is always refuted by one of a few witness vectors.
3. Changing one right-hand side entry of an edge-coloring program moves the
   optimum by at most one, and deciding which way is as hard as computing
   the chromatic index.

Run:  python3 tutorials/03_gaps_and_hardness.py
"""
from copsense.copositive import demo_gap_example, demo_nonattainment
from copsense.exact import chromatic_index, solve_exact
from copsense.model import complete_graph, petersen_graph, reduce_edge_coloring

print("== duality gap example ==")
rep = demo_gap_example(step=2.5, bound=10.0)
print(rep.table(limit=8))

print("\n== non-attainment on K6 ==")
print(demo_nonattainment().table())

print("\n== edge coloring ==")
for rhs in (4, 3):
    z = solve_exact(reduce_edge_coloring(complete_graph(4), 4, rhs)).z
    print(f"K4 with 4 colors, at least {rhs} used: optimum {z:g}")
for name, g in (("K4", complete_graph(4)), ("Petersen", petersen_graph())):
    res = chromatic_index(g)
    print(f"chromatic index of {name}: {int(res)}")
