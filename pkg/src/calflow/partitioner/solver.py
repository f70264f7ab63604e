"""Exact search over partition assignments."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Mapping

from calflow.errors import PartitionError
from calflow.frontend.xcf import ChannelConfig, PartitionPlan
from calflow.partitioner.model import ACCEL, Breakdown, MilpInstance, evaluate_assignment

OPTIMAL, FEASIBLE, INFEASIBLE, TIMEOUT = "optimal", "feasible", "infeasible", "timeout"
TIE = 1e-12


@dataclass
class SolveLimits:
    max_actors: int = 16
    max_partitions: int = 6
    time_limit: float | None = None


@dataclass
class PartitionSolution:
    assignment: dict[str, str]
    predicted_ns: float
    breakdown: Breakdown | None
    status: str
    n_threads: int
    use_accel: bool
    nodes: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def crossings(self) -> int:
        return self.breakdown.crossings if self.breakdown is not None else 0

    @property
    def hardware_set(self) -> frozenset[str]:
        return frozenset(a for a, p in self.assignment.items() if p == ACCEL)

    def plan(self, channels: Mapping[str, ChannelConfig] | None = None) -> PartitionPlan:
        return PartitionPlan.from_assignment(self.assignment, self.n_threads, channels)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "predicted_ns": self.predicted_ns,
            "n_threads": self.n_threads,
            "accel": self.use_accel,
            "assignment": dict(self.assignment),
            "breakdown": self.breakdown.to_dict() if self.breakdown is not None else None,
            "nodes": self.nodes,
            **self.extra,
        }


def _better(v: float, best: float) -> bool:
    return v < best - TIE * max(1.0, abs(best))


def brute_force(inst: MilpInstance) -> tuple[float, dict[str, str] | None]:
    """Minimum over every feasible assignment; ties go to the lexicographically
    smallest assignment (actors in instance order, partitions ``p1..pn, accel``)."""
    best, arg = float("inf"), None
    choices = [inst.allowed(a) for a in inst.actors]
    for combo in itertools.product(*choices):
        asg = dict(zip(inst.actors, combo))
        try:
            v = evaluate_assignment(inst, asg).T_exec
        except PartitionError:
            continue
        if arg is None or _better(v, best):
            best, arg = v, asg
    return best, arg


def solve_exact(inst: MilpInstance, limits: SolveLimits | None = None) -> PartitionSolution:
    """Branch and bound with the same tie-break as :func:`brute_force`.

    Threads ``p2..pn`` are interchangeable, so a new thread is only opened in
    index order.  The bound of a partial assignment is its own evaluation with
    the max term raised to the cheapest placement of any unplaced actor.
    """
    limits = limits or SolveLimits()
    parts = inst.partitions
    if len(inst.actors) > limits.max_actors or len(parts) > limits.max_partitions:
        raise PartitionError(
            f"{len(inst.actors)} actors x {len(parts)} partitions exceeds the exact-search bound "
            f"({limits.max_actors} x {limits.max_partitions}); emit an LP file for an external solver"
        )
    actors = list(inst.actors)
    threads = inst.threads
    allowed = [inst.allowed(a) for a in actors]
    cheapest = [min(inst.exec[(a, p)] for p in allowed[i]) if allowed[i] else float("inf")
                for i, a in enumerate(actors)]
    # suffix maxima of the cheapest placement
    rest = [0.0] * (len(actors) + 1)
    for i in range(len(actors) - 1, -1, -1):
        rest[i] = max(rest[i + 1], cheapest[i])
    deadline = time.monotonic() + limits.time_limit if limits.time_limit else None
    best = float("inf")
    best_asg: dict[str, str] | None = None
    nodes = 0
    timed_out = False
    asg: dict[str, str | None] = {a: None for a in actors}

    def bound(i: int) -> tuple[float, int]:
        b = evaluate_assignment(inst, asg, partial=True)
        top = max(list(b.T_p.values()) + [b.T_plink, rest[i]])
        return top + b.T_intra + b.T_inter, b.crossings

    def dfs(i: int, hi: int) -> None:
        nonlocal best, best_asg, nodes, timed_out
        if timed_out:
            return
        nodes += 1
        if deadline is not None and nodes % 256 == 0 and time.monotonic() > deadline:
            timed_out = True
            return
        if i == len(actors):
            v = evaluate_assignment(inst, asg).T_exec
            if best_asg is None or _better(v, best):
                best, best_asg = v, dict(asg)
            return
        for p in allowed[i]:
            if p != ACCEL:
                k = threads.index(p)
                if k > hi + 1:
                    continue
                nhi = max(hi, k)
            else:
                nhi = hi
            asg[actors[i]] = p
            lb, crossings = bound(i + 1)
            if inst.m is not None and crossings > inst.m:
                continue
            if best_asg is not None and not _better(lb, best):
                continue
            dfs(i + 1, nhi)
        asg[actors[i]] = None

    dfs(0, 0)
    if best_asg is None:
        return PartitionSolution({}, float("inf"), None, TIMEOUT if timed_out else INFEASIBLE,
                                 inst.n_threads, inst.use_accel, nodes)
    return PartitionSolution(best_asg, best, evaluate_assignment(inst, best_asg),
                             FEASIBLE if timed_out else OPTIMAL, inst.n_threads, inst.use_accel, nodes)


def solve_milp(inst: MilpInstance, time_limit: float | None = None) -> PartitionSolution:
    """Solve the emitted LP program with scipy's MILP solver."""
    from calflow.partitioner.lp import emit_lp, parse_lp, placement_variables, solve_with_scipy

    text = emit_lp(inst)
    try:
        _, x = solve_with_scipy(parse_lp(text), time_limit=time_limit)
    except PartitionError:
        return PartitionSolution({}, float("inf"), None, INFEASIBLE, inst.n_threads, inst.use_accel)
    asg = {a: p for v, (a, p) in placement_variables(text).items() if x.get(v, 0.0) > 0.5}
    b = evaluate_assignment(inst, asg)
    return PartitionSolution(asg, b.T_exec, b, OPTIMAL, inst.n_threads, inst.use_accel)
