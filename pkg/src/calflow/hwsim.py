"""Cycle-counting simulation of the accelerator partition.

Every on-chip connection is a first-word-fall-through queue.  Tokens written in
cycle ``t`` (or at the end of a multi-cycle action) are committed at the end of
that cycle and become visible to the consumer one cycle later; consumption is
immediate.  Each actor is driven by a trigger:

* **AT** the trigger invokes its actor whenever it is not busy,
* **ST** a synchronized round in which every trigger invokes its actor exactly
  once to confirm that nothing moves,
* **ID** the network was declared idle.

A controller invocation takes as many steps as it can without revisiting a
controller state.  TESTs are free; each EXEC costs ``1 + weight`` cycles unless
the cost table says otherwise, and an invocation that only waits takes one
cycle.

Idleness protocol.  Once every trigger has been invoked since the last change
anywhere in the network (an EXEC, a commit, a stage transfer, an injection),
every invocation returned WAIT and no trigger is busy, the next cycle is an ST
round.  The round passes iff no invocation executes anything and no queue count
changes; then the partition is idle.  Otherwise the triggers go back to AT.
With seeded schedules a trigger may be stalled for a cycle but never for two in
a row, so idleness is declared at most ``IDLE_K`` cycles after the last change.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping

from calflow.errors import SimulationTimeout
from calflow.frontend.network import NetworkGraph
from calflow.kernel import ActorState, peek_inputs
from calflow.machine import EXEC, TEST, WAIT, ActorMachine, build_siam
from calflow.runtime.channel import NullInput, NullOutput
from calflow.runtime.scheduler import ActorRunner

IDLE_K = 3
DEFAULT_HW_DEPTH = 4096

AT, ST, ID = "AT", "ST", "ID"


class FwftQueue:
    """Bounded FIFO whose head, count and free size are readable without consuming."""

    __slots__ = ("capacity", "storage", "staged", "key", "pushed", "trace")

    def __init__(self, capacity: int, key: str = "", trace: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.storage: deque = deque()
        self.staged: deque = deque()  # (ready_cycle, token)
        self.key = key
        self.pushed = 0
        self.trace: list | None = [] if trace else None

    @property
    def count(self) -> int:
        return len(self.storage)

    @property
    def size(self) -> int:
        return self.capacity - len(self.storage) - len(self.staged)

    @property
    def head(self) -> Any:
        return self.storage[0]

    # consumer view
    def available(self) -> int:
        return len(self.storage)

    def peek(self, i: int) -> Any:
        return self.storage[i]

    def consume(self, n: int) -> None:
        for _ in range(n):
            self.storage.popleft()

    # producer side
    def stage(self, token: Any, ready: int) -> None:
        if self.size <= 0:
            raise OverflowError(f"{self.key}: write to a full queue")
        self.staged.append((ready, token))
        self.pushed += 1
        if self.trace is not None:
            self.trace.append(token)

    def commit(self, cycle: int) -> int:
        n = 0
        staged = self.staged
        while staged and staged[0][0] <= cycle:
            self.storage.append(staged.popleft()[1])
            n += 1
        return n

    def inject(self, tokens: Iterable[Any]) -> None:
        """Scripted write that is visible immediately (test hook)."""
        for t in tokens:
            if self.size <= 0:
                raise OverflowError(f"{self.key}: injection into a full queue")
            self.storage.append(t)


class _HwOut:
    """Output view of one port: stages tokens into every connected queue."""

    __slots__ = ("queues", "runner")

    def __init__(self, queues: list[FwftQueue], runner):
        self.queues = queues
        self.runner = runner

    def space(self) -> int:
        return min(q.size for q in self.queues)

    def push(self, token: Any) -> None:
        r = self.runner.ready_at
        for q in self.queues:
            q.stage(token, r)


class HwActor(ActorRunner):
    def __init__(self, am, state, inputs, out_queues: Mapping[str, list[FwftQueue]], costs: list[int]):
        self.costs = costs
        self.ready_at = 0
        outputs = {p: _HwOut(qs, self) if qs else NullOutput() for p, qs in out_queues.items()}
        super().__init__(am, state, inputs, outputs)


@dataclass
class Invocation:
    last: str  # EXEC or WAIT
    steps: int
    tests: int
    execs: list[int]  # action indices
    cycles: int
    tests_to_exec: int | None = None  # TESTs performed before the first EXEC


def run_controller_hw(actor: HwActor, cycle: int = 0) -> Invocation:
    """One invocation: step until WAIT or until the next state was already visited."""
    am = actor.am
    instrs = am.instructions
    pc = actor.state.pc
    visited: set[int] = set()
    steps = tests = 0
    execs: list[int] = []
    elapsed = 0
    last = WAIT
    first = None
    while pc not in visited:
        visited.add(pc)
        ins = instrs[pc]
        steps += 1
        if ins.kind is TEST:
            tests += 1
            pc = ins.then if actor._tests[ins.condition]() else ins.orelse
        elif ins.kind is EXEC:
            if first is None:
                first = tests
            cost = actor.costs[ins.action]
            elapsed += cost
            actor.ready_at = cycle + elapsed - 1
            actor._execs[ins.action]()
            execs.append(ins.action)
            pc = ins.next
            last = EXEC
        else:
            pc = ins.next
            last = WAIT
            break
    actor.state.pc = pc
    actor.instructions += steps
    return Invocation(last, steps, tests, execs, max(1, elapsed), first)


def basic_controller(actor, inputs: Mapping, outputs: Mapping, state: ActorState,
                     before_fire=None) -> tuple[str, int, int | None]:
    """Controller that re-tests every condition from scratch on each invocation.

    Actions are tried in priority order; for each, input availability, then
    guards, then output space.  Fires the selected action and returns
    ``(EXEC|WAIT, condition evaluations, action index or None)``.
    """
    evals = 0
    for ai in actor.priority_order:
        a = actor.actions[ai]
        ok = True
        for port, n, _ in a.inputs:
            evals += 1
            if inputs[port].available() < n:
                ok = False
                break
        if not ok:
            continue
        sc = a.scope(state.vars, peek_inputs(a, inputs))
        for gi in range(len(a.guards)):
            evals += 1
            if not a.guard(gi, sc, state.vars):
                ok = False
                break
        if not ok:
            continue
        for port, exprs in a.outputs:
            evals += 1
            if outputs[port].space() < len(exprs):
                return WAIT, evals, None
        if before_fire is not None:
            before_fire(ai)
        produced = a.fire(sc, state.vars, actor.output_types)
        for port, n, _ in a.inputs:
            inputs[port].consume(n)
        for port, toks in produced.items():
            for t in toks:
                outputs[port].push(t)
        state.firings[a.name] += 1
        return EXEC, evals, ai
    return WAIT, evals, None


# -- cost tables ------------------------------------------------------------------------

_COST_LINE = re.compile(r"^\s*([\w$]+)\.([\w$]+)\s*(?:->|=|:)\s*(\d+)\s*$")


def parse_cost_table(text: str) -> dict[str, int]:
    """Parse ``actor.action -> cycles`` lines; ``#`` starts a comment."""
    out: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _COST_LINE.match(line)
        if m is None:
            raise ValueError(f"cost table line {n}: expected 'actor.action -> cycles', got {raw!r}")
        out[f"{m.group(1)}.{m.group(2)}"] = int(m.group(3))
    return out


def _action_cost(actor, action, table: Mapping[str, int] | None) -> int:
    if table:
        for key in (f"{actor.name}.{action.name}", f"{actor.actor_name}.{action.name}"):
            if key in table:
                return table[key]
    return 1 + action.weight


# -- report ---------------------------------------------------------------------------------


@dataclass
class ActorCycles:
    firings: int = 0
    min: int | None = None
    max: int | None = None
    total: int = 0
    tests: int = 0
    invocations: int = 0

    @property
    def avg(self) -> float | None:
        return self.total / self.firings if self.firings else None

    def record(self, cost: int) -> None:
        self.firings += 1
        self.total += cost
        self.min = cost if self.min is None else min(self.min, cost)
        self.max = cost if self.max is None else max(self.max, cost)


@dataclass
class SimReport:
    cycles: int
    actors: dict[str, ActorCycles]
    traces: dict[str, list]
    kernel_runs: int
    idle_declarations: list[int] = field(default_factory=list)
    safety_violations: list[str] = field(default_factory=list)
    idle_latencies: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "kernel_runs": self.kernel_runs,
            "actors": {
                n: {**asdict(a), "avg": a.avg} for n, a in sorted(self.actors.items())
            },
            "traces": {k: list(v) for k, v in sorted(self.traces.items())},
            "idle_declarations": self.idle_declarations,
            "idle_latencies": self.idle_latencies,
            "safety_violations": self.safety_violations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=list)

    @property
    def total_tests(self) -> int:
        return sum(a.tests for a in self.actors.values())


@dataclass
class RunSummary:
    start: int
    end: int
    progressed: bool
    output_blocked: bool
    input_pending: bool

    @property
    def cycles(self) -> int:
        return self.end - self.start


# -- simulator -----------------------------------------------------------------------------


class HwSimulator:
    """Accelerator partition of ``graph`` with its input and output stages.

    Connections entering the partition get an input stage that streams fed
    tokens into an on-chip queue; connections leaving it get an output stage that
    drains the queue into a host-visible list.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        members: Iterable[str] | None = None,
        machines: Mapping[str, ActorMachine] | None = None,
        states: Mapping[str, ActorState] | None = None,
        cost_table: Mapping[str, int] | None = None,
        fifo_depth: int = DEFAULT_HW_DEPTH,
        seed: int | None = None,
        stall_prob: float = 0.3,
        stage_width: int = 1,
        cycle_budget: int = 50_000_000,
        depths: Mapping[str, int] | None = None,
        controller: str = "am",
    ):
        if controller not in ("am", "basic"):
            raise ValueError(f"unknown controller kind {controller!r}")
        self.controller = controller
        self.graph = graph
        self.members = list(members) if members is not None else list(graph.instances)
        member_set = set(self.members)
        self.cycle = 0
        self.cycle_budget = cycle_budget
        self.rng = random.Random(seed) if seed is not None else None
        self.stall_prob = stall_prob if seed is not None else 0.0
        self.stage_width = stage_width
        self.queues: dict[str, FwftQueue] = {}
        self.in_stages: dict[str, deque] = {}
        self.out_stages: dict[str, list] = {}
        self.out_limits: dict[str, int | None] = {}
        self.injections: dict[int, list[tuple[str, list]]] = {}
        depths = depths or {}

        for c in graph.connections:
            inside_src, inside_dst = c.src in member_set, c.dst in member_set
            if not (inside_src or inside_dst):
                continue
            depth = depths.get(c.key) or c.depth or fifo_depth
            self.queues[c.key] = FwftQueue(depth, c.key)
            if inside_dst and not inside_src:
                self.in_stages[c.key] = deque()
            elif inside_src and not inside_dst:
                self.out_stages[c.key] = []
                self.out_limits[c.key] = None

        self.actors: list[HwActor] = []
        self.stats: dict[str, ActorCycles] = {}
        for n in self.members:
            actor = graph.actor(n)
            am = machines[n] if machines and n in machines else build_siam(actor)
            st = states[n] if states and n in states else actor.initial_state()
            ins: dict = {p: NullInput() for p in actor.input_types}
            for c in graph.incoming(n):
                ins[c.dst_port] = self.queues[c.key]
            costs = [_action_cost(actor, a, cost_table) for a in actor.actions]
            outs = {p: [self.queues[c.key] for c in graph.outgoing(n) if c.src_port == p]
                    for p in actor.output_types}
            runner = HwActor(am, st, ins, outs, costs)
            self.actors.append(runner)
            self.stats[n] = ActorCycles()

        n = len(self.actors)
        self.phase = AT
        self.busy_until = [0] * n
        self.last_return = [WAIT] * n
        self.quiet = [False] * n  # invoked with WAIT since the last change
        self.stalled = [False] * n
        self.kernel_runs = 0
        self.idle_declarations: list[int] = []
        self.idle_latencies: list[int] = []
        self.safety_violations: list[str] = []
        self.last_change = -1

    # -- host interface ---------------------------------------------------------------

    def feed(self, key: str, tokens: Iterable[Any]) -> None:
        self.in_stages[key].extend(tokens)

    def collect(self, key: str) -> list:
        out = self.out_stages[key]
        self.out_stages[key] = []
        return out

    def inject(self, cycle: int, key: str, tokens: Iterable[Any]) -> None:
        self.injections.setdefault(cycle, []).append((key, list(tokens)))

    def pushed(self, key: str) -> int:
        return self.queues[key].pushed

    def trace(self, key: str) -> list:
        return list(self.queues[key].trace or [])

    def queue_count(self, key: str) -> int:
        q = self.queues[key]
        return q.count + len(q.staged)

    def input_pending(self) -> int:
        return sum(len(s) for s in self.in_stages.values())

    @property
    def n_triggers(self) -> int:
        return len(self.actors)

    # -- simulation ---------------------------------------------------------------------

    def _invoke(self, i: int, t: int) -> bool:
        runner = self.actors[i]
        if self.controller == "basic":
            inv = self._invoke_basic(runner, t)
        else:
            inv = run_controller_hw(runner, t)
        st = self.stats[runner.name]
        st.invocations += 1
        st.tests += inv.tests
        for a in inv.execs:
            st.record(runner.costs[a])
        self.last_return[i] = inv.last
        self.busy_until[i] = t + inv.cycles
        return bool(inv.execs)

    @staticmethod
    def _invoke_basic(runner: HwActor, t: int) -> Invocation:
        def before(ai: int) -> None:
            runner.ready_at = t + runner.costs[ai] - 1

        kind, evals, ai = basic_controller(runner.am.actor, runner.inputs, runner.outputs, runner.state, before)
        execs = [ai] if ai is not None else []
        cycles = runner.costs[ai] if ai is not None else 1
        return Invocation(kind, evals, evals, execs, cycles, evals if execs else None)

    def _stages(self) -> bool:
        moved = False
        t = self.cycle
        for key, pending in self.in_stages.items():
            q = self.queues[key]
            k = min(self.stage_width, len(pending), q.size)
            for _ in range(k):
                q.stage(pending.popleft(), t)
            moved |= k > 0
        for key, sink in self.out_stages.items():
            q = self.queues[key]
            k = min(self.stage_width, q.count)
            lim = self.out_limits[key]
            if lim is not None:
                k = min(k, lim - len(sink))
            for _ in range(max(k, 0)):
                sink.append(q.storage.popleft())
            moved |= k > 0
        return moved

    def step(self) -> bool:
        """Advance one cycle; returns True when idleness was declared in it."""
        t = self.cycle
        n = len(self.actors)
        changed = False
        for key, toks in self.injections.pop(t, ()):
            self.queues[key].inject(toks)
            changed = True
        order = list(range(n))
        if self.rng is not None:
            self.rng.shuffle(order)
        executed = False
        if self.phase == ST:
            before = {k: q.count for k, q in self.queues.items()}
            for i in order:
                executed |= self._invoke(i, t)
        else:
            for i in order:
                if self.busy_until[i] > t:
                    continue
                if self.stall_prob and not self.stalled[i] and self.rng.random() < self.stall_prob:
                    self.stalled[i] = True
                    continue
                self.stalled[i] = False
                if self._invoke(i, t):
                    executed = True
                    self.quiet[i] = False
                else:
                    self.quiet[i] = True
        changed |= executed
        changed |= self._stages()
        for q in self.queues.values():
            if q.staged and q.commit(t):
                changed = True
        self.cycle = t + 1
        if changed:
            self.last_change = t
            self.quiet = [False] * n

        if self.phase == ST:
            counts_same = all(q.count == before[k] for k, q in self.queues.items())
            if not changed and not executed and counts_same and all(r == WAIT for r in self.last_return):
                self.phase = ID
                return True
            self.phase = AT
            self.quiet = [False] * n
            return False
        if not changed and all(self.quiet) and all(b <= t + 1 for b in self.busy_until):
            self.phase = ST
        return False

    def run(self, out_limits: Mapping[str, int | None] | None = None) -> RunSummary:
        """Run from the current state until idleness is declared (one kernel call)."""
        if out_limits is not None:
            self.out_limits.update(out_limits)
        start = self.cycle
        self.kernel_runs += 1
        self.phase = AT
        self.quiet = [False] * len(self.actors)
        change_before = self.last_change
        if not self.actors and not self.in_stages and not self.out_stages:
            return RunSummary(start, start, False, False, False)
        while not self.step():
            if self.cycle - start > self.cycle_budget:
                raise SimulationTimeout(f"accelerator simulation exceeded {self.cycle_budget} cycles")
        declared = self.cycle - 1
        self.idle_declarations.append(declared)
        self.idle_latencies.append(declared - max(self.last_change, start - 1))
        self.safety_violations.extend(f"cycle {declared}: {v}" for v in self.enabled_actions())
        blocked = any(
            self.queues[k].count > 0 and lim is not None and len(self.out_stages[k]) >= lim
            for k, lim in self.out_limits.items()
        )
        return RunSummary(start, self.cycle, self.last_change != change_before, blocked,
                          self.input_pending() > 0)

    def enabled_actions(self) -> list[str]:
        """Post-hoc scan: actors whose selected action could fire right now."""
        out = []
        for r in self.actors:
            actor = r.am.actor
            for ai in actor.priority_order:
                a = actor.actions[ai]
                if any(r.inputs[p].available() < k for p, k, _ in a.inputs):
                    continue
                sc = a.scope(r.state.vars, peek_inputs(a, r.inputs))
                if not all(a.guard(g, sc, r.state.vars) for g in range(len(a.guards))):
                    continue
                if all(r.outputs[p].space() >= len(es) for p, es in a.outputs):
                    out.append(f"{r.name}.{a.name}")
                break
        return out

    def report(self) -> SimReport:
        return SimReport(
            cycles=self.cycle,
            actors=dict(self.stats),
            traces={k: self.trace(k) for k in self.queues},
            kernel_runs=self.kernel_runs,
            idle_declarations=list(self.idle_declarations),
            safety_violations=list(self.safety_violations),
            idle_latencies=list(self.idle_latencies),
        )

    def firings(self) -> dict[str, Counter]:
        return {r.name: r.state.firings for r in self.actors}


def simulate(
    graph: NetworkGraph,
    stimulus: Mapping[str, Iterable[Any]] | None = None,
    cost_table: Mapping[str, int] | None = None,
    members: Iterable[str] | None = None,
    seed: int | None = None,
    **kwargs,
) -> SimReport:
    """Feed ``stimulus`` (connection key -> tokens), run to idleness, report.

    Output-stage tokens are returned in ``report.traces`` under their connection
    keys like every other queue.
    """
    sim = HwSimulator(graph, members, cost_table=cost_table, seed=seed, **kwargs)
    for key, toks in (stimulus or {}).items():
        sim.feed(key, toks)
    sim.run()
    return sim.report()
