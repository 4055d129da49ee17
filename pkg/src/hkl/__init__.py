"""Hierarchical kernel learning.

Sparse selection among exponentially many positive-definite kernels embedded
in a directed acyclic graph, through a DAG-adapted block norm and an
active-set algorithm whose per-iteration cost is polynomial in the number of
selected kernels.  The fitted models carry a certified duality gap over the
full, never-materialized kernel collection.
"""

from .dag import (
    ExplicitDag,
    GridDag,
    SubDag,
    WeightScheme,
    ancestors,
    build_edgeless_dag,
    build_grid_dag,
    build_powerset_dag,
    descendants,
    frontier_of,
    gamma_constant,
    hull,
    sinks_of,
    sources_of,
)
from .engine import (
    HklConfig,
    HklModel,
    dual_norm_bounds,
    fit,
    full_gap_by_enumeration,
    predict,
)
from .harness import (
    BenchConfig,
    SyntheticSpec,
    cross_validate,
    flat_mkl_fit,
    gen_synthetic,
    greedy_forward_fit,
    l2_full_fit,
    run_benchmark,
)
from .kernels import (
    AllSubsetGaussianFamily,
    GaussHermiteFamily,
    HermiteFamily,
    KernelAtlas,
    PolynomialFamily,
    SplineFamily,
    build_atlas,
    center,
    make_family,
)
from .losses import LossModel, conjugate_value, intercept, loss_value
from .single import (
    DualSolution,
    gap_kernel,
    solve_least_squares,
    solve_smooth_dual,
)
from .weights import (
    evaluate_smoothed_b,
    gap_weights_upper_bound,
    minimize_B,
    optimal_eta_given_f,
    project_onto_H,
    zeta_from_eta,
)

__version__ = "0.1.0"
