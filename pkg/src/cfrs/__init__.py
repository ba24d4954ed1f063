"""Cluster-first route-second CVRP with entropic-OT soft assignment and exact capacitated decoding."""

from .baselines import fisher_jaikumar_solve, sweep_solve
from .bench import PipelineConfig, best_of_k, run_corpus, run_pipeline
from .cap import AssignmentMatrix, CapSolveConfig, brute_force_cap, solve_exact, solve_fixed, solve_sparse
from .costs import CostModelParams, LatentCostMatrix, euclidean_costs, parametric_costs, train_cost_model
from .estimators import CFRSSolver, ParametricCostModel, SinkhornAssigner
from .exceptions import (
    GradientCheckError,
    InfeasibleError,
    InfeasibleMarginalsError,
    InstanceParseError,
    InvalidArgumentError,
    NumericError,
)
from .instance import (
    Instance,
    Isometry,
    SpatialSupport,
    apply_isometry,
    fleet_lower_bound,
    generate_support,
    random_instance,
    read_instance,
    sample_instance,
    write_instance,
)
from .ot import SinkhornConfig, SoftAssignment, TransportPlan, sinkhorn_log_domain, soft_assign
from .routing import Solution, Tour, canonicalize, held_karp, route_clusters
from .seeds import SeedSet, capacity_aware_greedy_decode, select_seeds

__version__ = "0.1.0"

__all__ = [
    "AssignmentMatrix",
    "CFRSSolver",
    "CapSolveConfig",
    "CostModelParams",
    "GradientCheckError",
    "InfeasibleError",
    "InfeasibleMarginalsError",
    "Instance",
    "InstanceParseError",
    "InvalidArgumentError",
    "Isometry",
    "LatentCostMatrix",
    "NumericError",
    "ParametricCostModel",
    "PipelineConfig",
    "SeedSet",
    "SinkhornAssigner",
    "SinkhornConfig",
    "SoftAssignment",
    "Solution",
    "SpatialSupport",
    "Tour",
    "TransportPlan",
    "apply_isometry",
    "best_of_k",
    "brute_force_cap",
    "canonicalize",
    "capacity_aware_greedy_decode",
    "euclidean_costs",
    "fisher_jaikumar_solve",
    "fleet_lower_bound",
    "generate_support",
    "held_karp",
    "parametric_costs",
    "random_instance",
    "read_instance",
    "route_clusters",
    "run_corpus",
    "run_pipeline",
    "sample_instance",
    "select_seeds",
    "sinkhorn_log_domain",
    "soft_assign",
    "solve_exact",
    "solve_fixed",
    "solve_sparse",
    "sweep_solve",
    "train_cost_model",
    "write_instance",
]
