from calflow.partitioner.estimator import PartitionEstimator
from calflow.partitioner.explore import ExploreResult, explore
from calflow.partitioner.lp import emit_lp, evaluate_lp, parse_lp
from calflow.partitioner.model import Breakdown, MilpInstance, build_model, evaluate_assignment, instance_from_tables
from calflow.partitioner.solver import PartitionSolution, SolveLimits, brute_force, solve_exact, solve_milp

__all__ = [
    "Breakdown", "ExploreResult", "MilpInstance", "PartitionEstimator", "PartitionSolution", "SolveLimits",
    "brute_force", "build_model", "emit_lp", "evaluate_assignment", "evaluate_lp", "explore",
    "instance_from_tables", "parse_lp", "solve_exact", "solve_milp",
]
