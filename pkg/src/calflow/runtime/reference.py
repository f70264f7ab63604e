"""Reference interpreter: direct action selection over unbounded channels.

Serves as the oracle for every backend.  Each step it evaluates every firing
condition of an actor from scratch and fires the highest-priority enabled
action, exactly as the language defines it; no actor machine is involved.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any

from calflow.frontend.network import NetworkGraph
from calflow.kernel import ActorState


class _Queue:
    __slots__ = ("q", "trace")

    def __init__(self):
        self.q: deque = deque()
        self.trace: list = []

    def available(self) -> int:
        return len(self.q)

    def peek(self, i: int):
        return self.q[i]

    def consume(self, n: int) -> None:
        for _ in range(n):
            self.q.popleft()

    def space(self) -> int:
        return 1 << 60

    def push(self, tok) -> None:
        self.q.append(tok)
        self.trace.append(tok)


class _Fan:
    def __init__(self, qs):
        self.qs = qs

    def space(self) -> int:
        return 1 << 60

    def push(self, tok) -> None:
        for q in self.qs:
            q.push(tok)


@dataclass
class ReferenceResult:
    traces: dict[str, list[Any]]
    firings: dict[str, Counter]
    condition_evaluations: int
    steps: int
    states: dict[str, ActorState] = field(repr=False, default_factory=dict)

    @property
    def token_counts(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.traces.items()}


def run_reference(graph: NetworkGraph, max_firings: int = 10_000_000) -> ReferenceResult:
    queues = {c.key: _Queue() for c in graph.connections}
    states = {n: graph.actor(n).initial_state() for n in graph.instances}
    ins: dict[str, dict] = {}
    outs: dict[str, dict] = {}
    empty = _Queue()
    sink = _Fan([])
    for n, inst in graph.instances.items():
        ins[n] = {p: empty for p in inst.actor.input_types}
        outs[n] = {p: sink for p in inst.actor.output_types}
    for c in graph.connections:
        ins[c.dst][c.dst_port] = queues[c.key]
    for n, inst in graph.instances.items():
        for p in inst.actor.output_types:
            targets = [queues[c.key] for c in graph.connections if c.src == n and c.src_port == p]
            if targets:
                outs[n][p] = targets[0] if len(targets) == 1 else _Fan(targets)

    evaluations = 0
    steps = 0
    progress = True
    while progress and steps < max_firings:
        progress = False
        for n, inst in graph.instances.items():
            actor = inst.actor
            st = states[n]
            a_in = ins[n]
            chosen = None
            for ai in actor.priority_order:
                a = actor.actions[ai]
                ok = True
                for port, cnt, _ in a.inputs:
                    evaluations += 1
                    if a_in[port].available() < cnt:
                        ok = False
                        break
                if not ok:
                    continue
                peeked = {port: [a_in[port].peek(i) for i in range(cnt)] for port, cnt, _ in a.inputs}
                sc = a.scope(st.vars, peeked)
                for gi in range(len(a.guards)):
                    evaluations += 1
                    if not a.guard(gi, sc, st.vars):
                        ok = False
                        break
                if ok:
                    chosen = (a, sc)
                    break
            if chosen is None:
                continue
            a, sc = chosen
            produced = a.fire(sc, st.vars, actor.output_types)
            for port, cnt, _ in a.inputs:
                a_in[port].consume(cnt)
            for port, toks in produced.items():
                for t in toks:
                    outs[n][port].push(t)
            st.firings[a.name] += 1
            steps += 1
            progress = True
    return ReferenceResult(
        traces={k: q.trace for k, q in queues.items()},
        firings={n: s.firings for n, s in states.items()},
        condition_evaluations=evaluations,
        steps=steps,
        states=states,
    )
