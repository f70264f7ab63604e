"""Profiling inputs for the partitioner.

The serialized report (``profile.json``) looks like::

    {
      "version": 1,
      "exec_sw":  {"filter": 812.4, ...},      # ns per firing, EXEC bodies only
      "exec_hw":  {"filter": 2.0, ...},        # cycles per firing
      "firings":  {"filter": 4096, ...},
      "tokens":   {"source.OUT->filter.IN": 4096, ...},
      "curves":   {"read": {"sizes": [...], "ns": [...]}, "write": ..., "intra": ..., "inter": ...},
      "assumed_clock_mhz": 250.0,
      "sw_only":  ["sink"],
      "estimated": ["inter"]
    }

Curve sizes are token counts.  Everything is in ns except ``exec_hw``; the
partitioner converts cycles with ``assumed_clock_mhz``.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import isotonic_regression

from calflow.curves import DEFAULT_INTER, DEFAULT_INTRA, DEFAULT_READ, DEFAULT_WRITE, Curve
from calflow.frontend.network import NetworkGraph
from calflow.frontend.xcf import PartitionPlan
from calflow.runtime.channel import RingChannel
from calflow.runtime.reference import run_reference
from calflow.runtime.scheduler import RunOptions, run_network

PROFILE_VERSION = 1
DEFAULT_CLOCK_MHZ = 250.0
DEFAULT_INTER_FACTOR = 3.0


@dataclass
class BandwidthCurves:
    read: Curve = DEFAULT_READ
    write: Curve = DEFAULT_WRITE
    intra: Curve = DEFAULT_INTRA
    inter: Curve = DEFAULT_INTER

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_dict() for k in ("read", "write", "intra", "inter")}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BandwidthCurves":
        base = cls()
        return cls(**{k: Curve.from_dict(d[k]) if k in d else getattr(base, k)
                      for k in ("read", "write", "intra", "inter")})


@dataclass
class ProfileReport:
    exec_sw: dict[str, float] = field(default_factory=dict)
    exec_hw: dict[str, float] = field(default_factory=dict)
    firings: dict[str, int] = field(default_factory=dict)
    tokens: dict[str, int] = field(default_factory=dict)
    curves: BandwidthCurves = field(default_factory=BandwidthCurves)
    assumed_clock_mhz: float = DEFAULT_CLOCK_MHZ
    sw_only: list[str] = field(default_factory=list)
    estimated: list[str] = field(default_factory=list)
    absent: list[str] = field(default_factory=list)  # actors that never fired

    def merge(self, other: "ProfileReport") -> "ProfileReport":
        """Fields present in ``other`` win."""
        out = ProfileReport(**{**self.__dict__})
        for name in ("exec_sw", "exec_hw", "firings", "tokens"):
            merged = dict(getattr(self, name))
            merged.update(getattr(other, name))
            setattr(out, name, merged)
        out.sw_only = sorted(set(self.sw_only) | set(other.sw_only))
        out.estimated = sorted(set(self.estimated) | set(other.estimated))
        out.absent = sorted(set(self.absent) | set(other.absent))
        return out

    def to_dict(self) -> dict:
        return {
            "version": PROFILE_VERSION,
            "exec_sw": dict(sorted(self.exec_sw.items())),
            "exec_hw": dict(sorted(self.exec_hw.items())),
            "firings": dict(sorted(self.firings.items())),
            "tokens": dict(sorted(self.tokens.items())),
            "curves": self.curves.to_dict(),
            "assumed_clock_mhz": self.assumed_clock_mhz,
            "sw_only": sorted(self.sw_only),
            "estimated": sorted(self.estimated),
            "absent": sorted(self.absent),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProfileReport":
        v = d.get("version", PROFILE_VERSION)
        if v != PROFILE_VERSION:
            raise ValueError(f"unsupported profile version {v}")
        rep = cls(
            exec_sw={k: float(x) for k, x in d.get("exec_sw", {}).items()},
            exec_hw={k: float(x) for k, x in d.get("exec_hw", {}).items()},
            firings={k: int(x) for k, x in d.get("firings", {}).items()},
            tokens={k: int(x) for k, x in d.get("tokens", {}).items()},
            curves=BandwidthCurves.from_dict(d.get("curves", {})),
            assumed_clock_mhz=float(d.get("assumed_clock_mhz", DEFAULT_CLOCK_MHZ)),
            sw_only=list(d.get("sw_only", [])),
            estimated=list(d.get("estimated", [])),
            absent=list(d.get("absent", [])),
        )
        for name in ("exec_sw", "exec_hw"):
            if any(x < 0 for x in getattr(rep, name).values()):
                raise ValueError(f"negative time in {name}")
        return rep

    @classmethod
    def from_json(cls, text: str) -> "ProfileReport":
        return cls.from_dict(json.loads(text))


def _sw_only(graph: NetworkGraph) -> list[str]:
    return sorted(n for n in graph.instances if graph.actor(n).software_only)


def profile_software(graph: NetworkGraph, plan: PartitionPlan | None = None,
                     options: RunOptions | None = None) -> ProfileReport:
    """Average EXEC-body time per firing, firing counts and token counts."""
    plan = plan or PartitionPlan.single_thread(graph.instances)
    if plan.accelerator is not None:
        raise ValueError("software profiling needs an all-software plan")
    opts = options or RunOptions()
    opts = RunOptions(**{**opts.__dict__, "profile": True})
    res = run_network(graph, plan, options=opts)
    counts = res.firing_counts
    exec_sw, absent = {}, []
    for n in graph.instances:
        if counts.get(n, 0):
            exec_sw[n] = res.exec_ns[n] / counts[n]
        else:
            absent.append(n)
    return ProfileReport(exec_sw=exec_sw, firings=dict(counts), tokens=dict(res.token_counts),
                         sw_only=_sw_only(graph), absent=absent)


def profile_hardware(graph: NetworkGraph, cost_table: Mapping[str, int] | None = None,
                     clock_mhz: float = DEFAULT_CLOCK_MHZ, max_firings: int = 10_000_000) -> ProfileReport:
    """Per-actor average cycles per firing on the simulated accelerator.

    Each hardware-eligible actor is simulated in isolation, fed with the token
    streams a reference run produced on its input connections.
    """
    from calflow.hwsim import HwSimulator

    ref = run_reference(graph, max_firings=max_firings)
    exec_hw: dict[str, float] = {}
    absent: list[str] = []
    for n in graph.instances:
        if graph.actor(n).software_only:
            continue
        sim = HwSimulator(graph, [n], cost_table=cost_table)
        for c in graph.incoming(n):
            sim.feed(c.key, ref.traces[c.key])
        sim.run()
        st = sim.stats[n]
        if st.firings:
            exec_hw[n] = st.avg
        else:
            absent.append(n)
    firings = {n: sum(c.values()) for n, c in ref.firings.items()}
    return ProfileReport(exec_hw=exec_hw, firings=firings, tokens=dict(ref.token_counts),
                         assumed_clock_mhz=clock_mhz, sw_only=_sw_only(graph), absent=absent)


# -- FIFO microbenchmarks ------------------------------------------------------------------


def _pin(core: int) -> None:
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[core % len(cpus)]})
    except (AttributeError, OSError):
        pass


def _roundtrip_intra(k: int, repeats: int) -> float:
    """source -> pass-through -> sink on one thread; returns ns for k tokens one way."""
    a, b = RingChannel(k, intra=True), RingChannel(k, intra=True)
    toks = list(range(k))
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        a.push_many(toks)
        b.push_many(a.read_many(k))
        b.read_many(k)
        best = min(best, time.perf_counter_ns() - t0)
    return best / 2


def _roundtrip_inter(k: int, repeats: int) -> float:
    """Same as the intra benchmark with the pass-through on a second pinned thread."""
    there, back = RingChannel(k), RingChannel(k)
    go: queue.SimpleQueue = queue.SimpleQueue()
    toks = list(range(k))

    def passthrough() -> None:
        _pin(1)
        while True:
            if go.get() is None:
                return
            n = 0
            while n < k:
                there.refresh_writes()
                m = there.available()
                if m:
                    back.refresh_reads()
                    back.push_many(there.read_many(m))
                    there.publish_reads()
                    back.publish_writes()
                    n += m
                else:
                    time.sleep(0)

    t = threading.Thread(target=passthrough, daemon=True)
    t.start()
    _pin(0)
    best = float("inf")
    try:
        for _ in range(repeats):
            go.put(True)
            t0 = time.perf_counter_ns()
            there.refresh_reads()
            there.push_many(toks)
            there.publish_writes()
            got = 0
            while got < k:
                back.refresh_writes()
                m = back.available()
                if m:
                    back.read_many(m)
                    back.publish_reads()
                    got += m
                else:
                    time.sleep(0)
            best = min(best, time.perf_counter_ns() - t0)
    finally:
        go.put(None)
        t.join()
    return best / 2


def measure_fifo_bandwidth(sizes: Iterable[int], repeats: int = 5,
                           inter_factor: float = DEFAULT_INTER_FACTOR,
                           cores: int | None = None) -> tuple[Curve, Curve, bool]:
    """Returns ``(intra, inter, inter_estimated)``."""
    sizes = sorted(set(int(s) for s in sizes))
    if len(sizes) < 2 or sizes[0] < 1:
        raise ValueError("need at least two positive sizes")
    if cores is None:
        cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    intra = _smooth(sizes, [_roundtrip_intra(k, repeats) for k in sizes])
    if cores < 2:
        return intra, intra.scaled(inter_factor), True
    inter = _smooth(sizes, [_roundtrip_inter(k, repeats) for k in sizes])
    return intra, inter, False


def _smooth(sizes: list[int], ns: list[float]) -> Curve:
    """Nondecreasing fit of measured times (isotonic regression)."""
    y = np.maximum(np.asarray(ns, dtype=float), 0.0)
    fit = isotonic_regression(y, increasing=True).x
    return Curve(tuple(sizes), tuple(float(v) for v in fit))


_BOUNDARY_NET = """
actor Feed() ==> int OUT : end
actor Pass() int IN ==> int OUT : action IN:[t] ==> OUT:[t] end end
actor Drain() int IN ==> : action IN:[t] ==> end end
network Boundary() ==> :
entities
  feed = Feed();
  pass = Pass();
  drain = Drain();
structure
  feed.OUT --> pass.IN;
  pass.OUT --> drain.IN;
end
"""


def measure_boundary_bandwidth(sizes: Iterable[int], synthetic: BandwidthCurves | None = None,
                               repeats: int = 3) -> tuple[Curve, Curve]:
    """Returns ``(read, write)`` curves.

    With ``synthetic`` curves the call is a passthrough.  Otherwise the write
    side is the helper-thread handoff plus simulator ingestion of ``k`` tokens
    and the read side is collection plus handoff back, both smoothed to be
    nondecreasing in size.
    """
    if synthetic is not None:
        return synthetic.read, synthetic.write
    from calflow.frontend.network import parse_program
    from calflow.hwsim import HwSimulator

    sizes = sorted(set(int(s) for s in sizes))
    if len(sizes) < 2 or sizes[0] < 1:
        raise ValueError("need at least two positive sizes")
    graph = parse_program([("boundary.cal", _BOUNDARY_NET)], "Boundary")
    w_ns, r_ns = [], []
    for k in sizes:
        best_w = best_r = float("inf")
        for _ in range(repeats):
            sim = HwSimulator(graph, ["pass"], fifo_depth=k, stage_width=k)
            handoff: queue.SimpleQueue = queue.SimpleQueue()
            toks = list(range(k))
            t0 = time.perf_counter_ns()
            handoff.put(toks)
            sim.feed("feed.OUT->pass.IN", handoff.get())
            sim.run()
            t1 = time.perf_counter_ns()
            handoff.put(sim.collect("pass.OUT->drain.IN"))
            out = handoff.get()
            t2 = time.perf_counter_ns()
            if len(out) != k:
                raise RuntimeError("boundary benchmark lost tokens")
            best_w = min(best_w, t1 - t0)
            best_r = min(best_r, t2 - t1)
        w_ns.append(best_w)
        r_ns.append(best_r)
    return _smooth(sizes, r_ns), _smooth(sizes, w_ns)
