"""Tour of the kernel-index DAGs.

Kernels are indexed by vertices of a directed grid {0..q}^p: vertex
(j1,...,jp) stands for the interaction of per-variable orders j_i, and the
edges force an interaction to be selected only after all sub-interactions.
This script walks through the combinatorial primitives the solver relies on:
ancestors, descendants, hulls, sources/sinks, and the frontier of an active
set, plus the implicit representation that scales to astronomically many
vertices.
"""

import numpy as np

from hkl import (
    WeightScheme,
    build_grid_dag,
    build_powerset_dag,
    frontier_of,
    gamma_constant,
    hull,
    sinks_of,
    sources_of,
)

# A small 2-D grid: 5 orders per variable, 25 kernels.
dag = build_grid_dag(p=2, q=4)
print(f"grid p=2, q=4: {dag.num_vertices} vertices, "
      f"source {dag.sources()}, max out-degree {dag.max_out_degree}")

# Every vertex is its own ancestor/descendant; ancestor sets are the
# coordinatewise-smaller boxes.
v = (2, 1)
print(f"ancestors of {v}: {sorted(dag.ancestors(v))}")
print(f"descendant count of {v}: {len(dag.descendants(v))}")

# Hulls are the only sparsity patterns the DAG norm can produce.
W = [(2, 0), (0, 1)]
print(f"hull of {W}: {sorted(hull(dag, W))}")

# Sinks: the minimal subset generating the same hull.
H = hull(dag, [(2, 1), (1, 2)])
print(f"sinks of that hull: {sorted(sinks_of(dag, H))}")
print(f"sources of the complement (the frontier): {sorted(frontier_of(dag, H))}")

# The powerset DAG is the q = 1 special case: subsets of variables.
ps = build_powerset_dag(4)
print(f"\npowerset p=4: {ps.num_vertices} vertices "
      f"(subset lattice, Hasse-diagram edges)")

# The directed grid never needs to be materialized: with p = 64 and q = 3
# there are 4^64 ~ 3.4e38 vertices, yet membership, parents, children and
# depth are all answered arithmetically from the label.
big = build_grid_dag(p=64, q=3)
label = tuple([2, 1] + [0] * 62)
print(f"\nimplicit grid with {big.num_vertices:.2e} vertices")
print(f"  depth({label[:4]}...) = {big.depth(label)}")
print(f"  #children = {len(big.children(label))}, "
      f"#parents = {len(big.parents(label))}")

# The hull-selection constant grows only logarithmically in the branching,
# which is what makes selection over such grids statistically sane.
for beta in (1.5, 2.0, 4.0):
    g = gamma_constant(big, WeightScheme(beta=beta))
    print(f"  gamma(V) at beta={beta}: {g:.2f}")
