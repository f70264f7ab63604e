"""Design space exploration: one solve per (threads, accelerator, buffer size)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from calflow.errors import CalflowError
from calflow.frontend.xcf import ChannelConfig, emit_xcf
from calflow.partitioner.model import ACCEL, build_model
from calflow.partitioner.solver import PartitionSolution, SolveLimits, solve_exact, solve_milp

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ["nThreads", "accel", "bufferSize", "predicted_ns", "crossings", "xcf_path", "status"]


@dataclass
class ExploreRow:
    n_threads: int
    accel: bool
    buffer_bytes: int
    solution: PartitionSolution | None
    xcf: str | None = None
    xcf_path: str | None = None
    error: str | None = None

    def summary(self) -> dict:
        s = self.solution
        return {
            "nThreads": self.n_threads,
            "accel": int(self.accel),
            "bufferSize": self.buffer_bytes,
            "predicted_ns": repr(s.predicted_ns) if s is not None else "",
            "crossings": s.crossings if s is not None else "",
            "xcf_path": self.xcf_path or "",
            "status": s.status if s is not None else f"error: {self.error}",
        }


@dataclass
class ExploreResult:
    rows: list[ExploreRow] = field(default_factory=list)

    @property
    def solutions(self) -> list[PartitionSolution]:
        return [r.solution for r in self.rows if r.solution is not None]

    @property
    def unique_hardware_partitions(self) -> int:
        """Distinct nonempty accelerator member sets (one bitstream each)."""
        return len({s.hardware_set for s in self.solutions if s.hardware_set})

    def plot_rows(self) -> list[dict]:
        """Normalized throughput against the single-thread software baseline."""
        base = next((r.solution.predicted_ns for r in self.rows
                     if r.solution is not None and r.n_threads == 1 and not r.accel), None)
        out = []
        for r in self.rows:
            if r.solution is None:
                continue
            p = r.solution.predicted_ns
            out.append({"nThreads": r.n_threads, "accel": int(r.accel), "bufferSize": r.buffer_bytes,
                        "predicted_ns": repr(p),
                        "normalized_throughput": repr(base / p) if base is not None and p > 0 else ""})
        return out


def _accel_modes(accel: str) -> list[bool]:
    modes = {"on": [True], "off": [False], "both": [False, True]}
    if accel not in modes:
        raise ValueError(f"accel must be on, off or both, not {accel!r}")
    return modes[accel]


def explore(graph, profile, thread_range: Iterable[int], buffer_sizes: Iterable[int] = (1 << 20,),
            accel: str = "both", out_dir: str | Path | None = None, m: int | None = None,
            limits: SolveLimits | None = None) -> ExploreResult:
    threads = list(thread_range)
    if not threads:
        raise ValueError("thread range is empty")
    buffers = list(buffer_sizes)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = ExploreResult()
    for n in threads:
        for use_accel in _accel_modes(accel):
            for b in (buffers if use_accel else buffers[:1]):
                row = ExploreRow(n, use_accel, b, None)
                try:
                    inst = build_model(graph, profile, n, use_accel, m=m, buffer_bytes=b)
                    try:
                        sol = solve_exact(inst, limits)
                    except CalflowError:
                        sol = solve_milp(inst, limits.time_limit if limits else None)
                    row.solution = sol
                    if sol.assignment:
                        channels = {c.key: ChannelConfig(buffer_bytes=b) for c in graph.connections
                                    if (sol.assignment[c.src] == ACCEL) != (sol.assignment[c.dst] == ACCEL)}
                        row.xcf = emit_xcf(sol.plan(channels))
                        if out is not None:
                            path = out / f"t{n}_{'hw' if use_accel else 'sw'}_b{b}.xcf"
                            path.write_text(row.xcf)
                            row.xcf_path = str(path)
                except (CalflowError, ValueError) as e:
                    log.warning("solve failed for %d threads, accel=%s: %s", n, use_accel, e)
                    row.error = str(e)
                result.rows.append(row)
    if out is not None:
        with open(out / "summary.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
            w.writeheader()
            for r in result.rows:
                w.writerow(r.summary())
        plot = result.plot_rows()
        with open(out / "plot.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["nThreads", "accel", "bufferSize", "predicted_ns",
                                              "normalized_throughput"])
            w.writeheader()
            w.writerows(plot)
    return result
