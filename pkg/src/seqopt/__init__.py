"""Quartic penalty and augmented Lagrangian methods with second-order
sequential optimality certification (AKKT, AKKT2, cone and subspace SAKKT2)."""

from .nlp_core import (
    EvaluationError,
    FeasibilityMeasure,
    KktTriple,
    NlpProblem,
    active_set,
    check_derivatives,
    feasibility,
    lagrangian_gradient,
    lagrangian_hessian,
)
from .optimality import (
    AkktResiduals,
    CertifyOptions,
    Condition,
    ConditionReport,
    akkt_residuals,
    build_space,
    certify_trace,
    nullspace_basis,
    second_order_cone_sampled,
    second_order_subspace,
)
from .trace import SolverTrace, TraceRecord
from .trust_region import SmoothFunctionOracle, TrustRegionResult, minimize_second_order, solve_tr_subproblem

__version__ = "0.1.0"
