"""Cournot-Nash equilibria on the round sphere S^1 / S^2."""

from .analysis import (
    AprioriReport,
    DiscreteLaplacian,
    LinearizedOperator,
    assemble_linearized,
    build_laplacian,
    hj_norm,
    kernel_check,
    mtw_check,
    verify_apriori,
)
from .equilibrium import (
    EquilibriumResult,
    best_reply,
    check_condition,
    continuation_schedule,
    equilibrium_residual,
    solve_equilibrium,
)
from .model import (
    CongestionFn,
    DiscreteMeasure,
    InteractionKernel,
    Potential,
    Scenario,
    SolverSettings,
    energy,
    h_factor,
    h_max,
    nu_bounds,
    v_field,
)
from .sphere import SphereGrid, SpherePoint, build_grid, chart_exp, chart_log, cost, geodesic_distance
from .transport import TransportMap, TransportSolution, c_transform, exact_ot_lp, extract_map, sinkhorn

__version__ = "0.1.0"
