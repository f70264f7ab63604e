"""Multi-threaded software runtime.

Every software partition gets one scheduler thread running a loop of

1. pre-fire: snapshot the other side's published counters of every
   cross-thread channel,
2. fire: one round-robin pass in which each actor runs its controller until a
   ``WAIT`` or the instruction threshold,
3. publication of this thread's writes and frees,
4. post-fire: if nothing fired, try to sleep; the last thread to fall asleep
   after a quiet round ends the run.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable

from calflow.frontend.network import NetworkGraph
from calflow.frontend.xcf import PartitionPlan
from calflow.kernel import ActorState, peek_inputs
from calflow.machine import EXEC, TEST, ActorMachine, build_siam
from calflow.runtime.channel import FanOut, NullInput, NullOutput, RingChannel

log = logging.getLogger(__name__)

DEFAULT_FIFO_DEPTH = 4096
DEFAULT_THRESHOLD = 120


@dataclass
class RunOptions:
    fifo_depth: int = DEFAULT_FIFO_DEPTH
    threshold: int = DEFAULT_THRESHOLD
    trace: bool = False
    pin_threads: bool = True
    profile: bool = False
    check_publication: bool = False
    timeout: float | None = None
    seed: int | None = None  # seeded accelerator schedules
    # accelerator side
    cost_table: dict[str, int] | None = None
    buffer_bytes: int = 1 << 20
    hw_fifo_depth: int = 4096
    cycle_budget: int = 50_000_000
    boundary_curves: Any = None  # BandwidthCurves for the transfer log


@dataclass
class RunResult:
    token_counts: dict[str, int]
    firings: dict[str, Counter]
    status: str  # "quiescent" or "deadlock"
    channels_nonempty: list[str]
    wall_time: float
    traces: dict[str, list] | None = None
    exec_ns: dict[str, int] = field(default_factory=dict)
    sim_cycles: int = 0
    kernel_calls: int = 0
    transfer_log: list = field(default_factory=list)
    sim_report: Any = None
    states: dict[str, ActorState] = field(default_factory=dict, repr=False)

    @property
    def firing_counts(self) -> dict[str, int]:
        return {a: sum(c.values()) for a, c in self.firings.items()}


# -- one actor ------------------------------------------------------------------------


class ActorRunner:
    """Software execution of one actor machine against channel views."""

    def __init__(self, am: ActorMachine, state: ActorState, inputs: dict, outputs: dict, profile: bool = False):
        self.am = am
        self.state = state
        self.inputs = inputs
        self.outputs = outputs
        self.profile = profile
        self.exec_ns = 0
        self.instructions = 0
        # waited: a whole TEST chain started after the last visible change ended in WAIT
        self.waited = False
        self.stale = False
        self.chain_starts = {am.initial} | {i.next for i in am.instructions if i.kind is not TEST}
        actor = am.actor
        self._tests: list[Callable[[], bool]] = [self._make_test(c) for c in am.conditions]
        self._execs = [self._make_exec(a) for a in actor.actions]

    @property
    def name(self) -> str:
        return self.am.name

    def _make_test(self, cond) -> Callable[[], bool]:
        if cond.kind == "input":
            view, n = self.inputs[cond.port], cond.count
            return lambda: view.available() >= n
        if cond.kind == "output":
            view, n = self.outputs[cond.port], cond.count
            return lambda: view.space() >= n
        action = self.am.actor.actions[cond.action]
        gi = cond.guard_index
        st = self.state.vars
        ins = self.inputs

        def guard() -> bool:
            sc = action.scope(st, peek_inputs(action, ins))
            return action.guard(gi, sc, st)

        return guard

    def _make_exec(self, action) -> Callable[[], None]:
        ins, outs = self.inputs, self.outputs
        st = self.state
        types = self.am.actor.output_types

        def fire() -> None:
            sc = action.scope(st.vars, peek_inputs(action, ins))
            produced = action.fire(sc, st.vars, types)
            for port, n, _ in action.inputs:
                ins[port].consume(n)
            for port, toks in produced.items():
                out = outs[port]
                for t in toks:
                    out.push(t)
            st.firings[action.name] += 1

        return fire

    def run(self, threshold: int) -> int:
        """Run the controller; returns the number of EXECs."""
        steps, execs = run_controller_sw(self, threshold)
        self.instructions += steps
        return execs


def run_controller_sw(runner: ActorRunner, threshold: int) -> tuple[int, int]:
    """Execute controller instructions until a WAIT or ``threshold`` instructions.

    Returns ``(steps, execs)``.  States may be revisited within one call.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    instrs = runner.am.instructions
    tests = runner._tests
    execs_fn = runner._execs
    pc = runner.state.pc
    steps = 0
    execs = 0
    profile = runner.profile
    while steps < threshold:
        ins = instrs[pc]
        steps += 1
        kind = ins.kind
        if kind is TEST:
            pc = ins.then if tests[ins.condition]() else ins.orelse
        elif kind is EXEC:
            if profile:
                t0 = time.perf_counter_ns()
                execs_fn[ins.action]()
                runner.exec_ns += time.perf_counter_ns() - t0
            else:
                execs_fn[ins.action]()
            execs += 1
            pc = ins.next
        else:
            pc = ins.next
            if runner.stale:
                runner.stale = False  # the chain that got here may predate the change
            else:
                runner.waited = True
            break
    runner.state.pc = pc
    return steps, execs


# -- threads ------------------------------------------------------------------------


class ThreadPartition:
    def __init__(self, index: int, pid: str, threshold: int):
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.index = index
        self.id = pid
        self.threshold = threshold
        self.runners: list = []  # ActorRunner or anything with run(threshold) -> execs
        self.consumes: list[RingChannel] = []  # cross-thread, this thread reads
        self.produces: list[RingChannel] = []  # cross-thread, this thread writes
        self.local: list[RingChannel] = []
        self.readers_of: dict[int, int] = {}  # id(channel) -> consumer thread index
        self.writers_of: dict[int, int] = {}
        self.asleep = False

    def forget_waits(self) -> None:
        for r in self.runners:
            if hasattr(r, "waited"):
                r.waited = False
                r.stale = r.state.pc not in r.chain_starts


def thread_step(part: ThreadPartition) -> tuple[bool, set[int]]:
    """One pre-fire / fire / publish / post-fire iteration.

    Returns ``(progressed, peers)`` where ``peers`` are the threads that can now
    see new tokens or new space because of this iteration's publication.
    """
    changed = False
    for ch in part.consumes:
        before = ch.seen_write
        ch.refresh_writes()
        changed = changed or ch.seen_write != before
    for ch in part.produces:
        before = ch.seen_read
        ch.refresh_reads()
        changed = changed or ch.seen_read != before
    if changed:
        part.forget_waits()
    execs = 0
    th = part.threshold
    for r in part.runners:
        execs += r.run(th)
    if execs:
        part.forget_waits()
    # a slot cut short by the threshold is not a quiet round, even without an EXEC
    settled = all(getattr(r, "waited", True) for r in part.runners)
    peers: set[int] = set()
    for ch in part.produces:
        if ch.local_write != ch.global_write:
            ch.publish_writes()
            peers.add(part.readers_of[id(ch)])
    for ch in part.consumes:
        if ch.local_read != ch.global_read:
            ch.publish_reads()
            peers.add(part.writers_of[id(ch)])
    for ch in part.local:
        ch.publish_writes()
        ch.publish_reads()
    return execs > 0 or not settled, peers


class Coordinator:
    """Sleep/wake and quiescence detection shared by all scheduler threads."""

    def __init__(self, n: int):
        self.n = n
        self.lock = threading.Lock()
        self.events = [threading.Event() for _ in range(n)]
        self.epoch = 0
        self.sleeping: set[int] = set()
        self.done = False
        self.external_pending = 0
        self.error: BaseException | None = None
        self.rounds = [0] * n

    def activity(self, tid: int, peers: set[int]) -> None:
        with self.lock:
            self.epoch += 1
            for p in peers:
                if p in self.sleeping:
                    self.sleeping.discard(p)
                    self.events[p].set()

    def external_begin(self) -> None:
        with self.lock:
            self.external_pending += 1

    def external_end(self, wake: int) -> None:
        with self.lock:
            self.external_pending -= 1
            self.epoch += 1
            if wake in self.sleeping:
                self.sleeping.discard(wake)
            self.events[wake].set()

    def try_sleep(self, tid: int, seen_epoch: int) -> bool:
        """Called after a quiet round.  Returns True when the run is over."""
        with self.lock:
            if self.done:
                return True
            if self.epoch != seen_epoch:
                return False
            self.sleeping.add(tid)
            if len(self.sleeping) == self.n and self.external_pending == 0:
                self.done = True
                for e in self.events:
                    e.set()
                return True
            self.events[tid].clear()
        self.events[tid].wait()
        with self.lock:
            self.sleeping.discard(tid)
            return self.done

    def fail(self, exc: BaseException) -> None:
        with self.lock:
            if self.error is None:
                self.error = exc
            self.done = True
            for e in self.events:
                e.set()


def quiescence_check(coord: Coordinator) -> bool:
    """True iff every thread sleeps after a quiet round and nothing is in flight."""
    with coord.lock:
        return coord.done or (len(coord.sleeping) == coord.n and coord.external_pending == 0)


def _pin(core: int) -> None:
    if not hasattr(os, "sched_setaffinity"):
        return
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[core % len(cpus)]})
    except OSError:
        pass


def _thread_loop(part: ThreadPartition, coord: Coordinator, pin: bool, deadline: float | None) -> None:
    if pin:
        _pin(part.index)
    try:
        while True:
            seen = coord.epoch
            progressed, peers = thread_step(part)
            coord.rounds[part.index] += 1
            if coord.done:
                return
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError("software run exceeded its timeout")
            if progressed or peers:
                coord.activity(part.index, peers)
                continue
            if coord.try_sleep(part.index, seen):
                return
    except BaseException as e:  # noqa: BLE001 - forwarded to the caller
        coord.fail(e)


# -- whole network -------------------------------------------------------------------


def _capacity(graph: NetworkGraph, plan: PartitionPlan, key: str, default: int) -> int:
    cfg = plan.channels.get(key)
    if cfg is not None and cfg.depth is not None:
        return cfg.depth
    conn = graph.connection(key)
    return conn.depth if conn.depth is not None else default


def run_network(
    graph: NetworkGraph,
    plan: PartitionPlan | None = None,
    machines: dict[str, ActorMachine] | None = None,
    options: RunOptions | None = None,
) -> RunResult:
    """Execute ``graph`` according to ``plan`` until the network quiesces."""
    opts = options or RunOptions()
    plan = plan or PartitionPlan.single_thread(graph.instances)
    machines = machines or {n: build_siam(graph.actor(n)) for n in graph.instances}
    sw_parts = plan.software
    accel = plan.accelerator
    hw_members = set(accel.members) if accel is not None else set()
    if not sw_parts and graph.instances:
        raise ValueError("plan needs at least one software partition")

    thread_of: dict[str, int] = {}
    for i, p in enumerate(sw_parts):
        for m in p.members:
            thread_of[m] = i
    missing = [n for n in graph.instances if n not in thread_of and n not in hw_members]
    if missing:
        raise ValueError(f"instances not assigned by the plan: {missing}")

    parts = [ThreadPartition(i, p.id, opts.threshold) for i, p in enumerate(sw_parts)]
    states = {n: graph.actor(n).initial_state() for n in graph.instances}

    # channels for software-to-software connections; boundary ones go through the link
    channels: dict[str, RingChannel] = {}
    plink = None
    if hw_members:
        from calflow.plink import PLink

        plink = PLink(graph, plan, machines, states, opts)
    for c in graph.connections:
        if c.src in hw_members and c.dst in hw_members:
            continue
        cap = _capacity(graph, plan, c.key, opts.fifo_depth)
        src_t = thread_of.get(c.src, 0)  # accelerator side is served from p1
        dst_t = thread_of.get(c.dst, 0)
        ch = RingChannel(cap, c.key, intra=(src_t == dst_t), trace=opts.trace, check=opts.check_publication)
        channels[c.key] = ch
        if src_t == dst_t:
            parts[src_t].local.append(ch)
        else:
            parts[src_t].produces.append(ch)
            parts[dst_t].consumes.append(ch)
            parts[src_t].readers_of[id(ch)] = dst_t
            parts[dst_t].writers_of[id(ch)] = src_t

    runners: dict[str, ActorRunner] = {}
    for n, inst in graph.instances.items():
        if n in hw_members:
            continue
        actor = inst.actor
        ins: dict = {p: NullInput() for p in actor.input_types}
        outs: dict = {p: NullOutput() for p in actor.output_types}
        for c in graph.incoming(n):
            ins[c.dst_port] = channels[c.key]
        for p in actor.output_types:
            targets = [channels[c.key] for c in graph.outgoing(n) if c.src_port == p]
            if targets:
                outs[p] = targets[0] if len(targets) == 1 else FanOut(targets)
        runner = ActorRunner(machines[n], states[n], ins, outs, profile=opts.profile)
        runners[n] = runner
        parts[thread_of[n]].runners.append(runner)

    coord = Coordinator(len(parts))
    if plink is not None:
        plink.attach(channels, coord, thread_index=0)
        parts[0].runners.append(plink)

    start = time.perf_counter()
    deadline = time.monotonic() + opts.timeout if opts.timeout else None
    if len(parts) == 1:
        _thread_loop(parts[0], coord, pin=False, deadline=deadline)
    elif parts:
        threads = [
            threading.Thread(target=_thread_loop, args=(p, coord, opts.pin_threads, deadline),
                             name=f"calflow-p{p.index + 1}", daemon=True)
            for p in parts
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    wall = time.perf_counter() - start
    if plink is not None:
        plink.shutdown()
    if coord.error is not None:
        raise coord.error

    counts: dict[str, int] = {}
    traces: dict[str, list] | None = {} if opts.trace else None
    nonempty: list[str] = []
    for c in graph.connections:
        if c.key in channels:
            ch = channels[c.key]
            counts[c.key] = ch.local_write
            if traces is not None:
                traces[c.key] = list(ch.trace)
            if ch.pending():
                nonempty.append(c.key)
        else:
            counts[c.key] = plink.sim.pushed(c.key)
            if traces is not None:
                traces[c.key] = plink.sim.trace(c.key)
            if plink.sim.queue_count(c.key):
                nonempty.append(c.key)
    if plink is not None:
        for key, n in plink.held_tokens().items():
            if n and key not in nonempty:
                nonempty.append(key)
    result = RunResult(
        token_counts=counts,
        firings={n: s.firings for n, s in states.items()},
        status="deadlock" if nonempty else "quiescent",
        channels_nonempty=nonempty,
        wall_time=wall,
        traces=traces,
        exec_ns={n: r.exec_ns for n, r in runners.items()},
        states=states,
    )
    if plink is not None:
        result.sim_cycles = plink.sim.cycle
        result.kernel_calls = plink.kernel_calls
        result.transfer_log = list(plink.log)
        result.sim_report = plink.sim.report()
    return result
