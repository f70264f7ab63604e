"""scikit-learn style wrapper around model building and solving."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator

from calflow.partitioner.model import build_model, evaluate_assignment
from calflow.partitioner.solver import SolveLimits, solve_exact, solve_milp


class PartitionEstimator(BaseEstimator):
    """``fit(graph, profile)`` finds a placement; ``predict`` scores placements.

    Fitted attributes: ``instance_``, ``solution_``, ``plan_``, ``predicted_ns_``.
    """

    def __init__(self, n_threads: int = 1, use_accel: bool = True, m: int | None = None,
                 buffer_bytes: int = 1 << 20, fifo_depth: int = 4096, solver: str = "exact",
                 time_limit: float | None = None):
        self.n_threads = n_threads
        self.use_accel = use_accel
        self.m = m
        self.buffer_bytes = buffer_bytes
        self.fifo_depth = fifo_depth
        self.solver = solver
        self.time_limit = time_limit

    def fit(self, graph, profile) -> "PartitionEstimator":
        if self.solver not in ("exact", "milp"):
            raise ValueError(f"solver must be 'exact' or 'milp', not {self.solver!r}")
        self.instance_ = build_model(graph, profile, self.n_threads, self.use_accel, m=self.m,
                                     buffer_bytes=self.buffer_bytes, fifo_depth=self.fifo_depth)
        if self.solver == "exact":
            self.solution_ = solve_exact(self.instance_, SolveLimits(time_limit=self.time_limit))
        else:
            self.solution_ = solve_milp(self.instance_, self.time_limit)
        self.plan_ = self.solution_.plan() if self.solution_.assignment else None
        self.predicted_ns_ = self.solution_.predicted_ns
        return self

    def predict(self, assignments: Iterable[Mapping[str, str]]) -> np.ndarray:
        """Predicted execution time (ns) of each placement."""
        if not hasattr(self, "instance_"):
            raise AttributeError("call fit() first")
        return np.array([evaluate_assignment(self.instance_, a).T_exec for a in assignments], dtype=float)
