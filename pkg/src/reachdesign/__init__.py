"""Set-based robust control co-design with zonotope reachability."""

from .constraints import ConstraintMargins, certificate, evaluate, verify_certificate
from .dynamics import (
    ContinuousLti,
    DiscreteClosedLoop,
    SystemFamily,
    UnstableCandidateError,
    control_set,
    simulate,
    successor,
    zoh_discretize,
)
from .geometry import (
    Box,
    DirectionSet,
    HPolytope,
    Zonotope,
    contained_in,
    linear_map,
    minkowski_sum,
    reduce_order,
    support,
    template_polyhedron,
)
from .objective import CostSpec, SetError, center_estimate, error_supports, half_widths, r2_metric, total_cost
from .optimizer import CoDesignProblem, OptimizationReport, SolverOptions, evaluate_candidate, sensitivity_scan, solve
from .reach import ReachResult, ReachSpec, monte_carlo_falsify, reach, shared_direction_dedup

__version__ = "0.1.0"
