"""Single-instruction actor machines (SIAM).

The controller of an actor is a state machine over *knowledge*: one value in
``{0, 1, X}`` per firing condition.  Each knowledge state carries exactly one
instruction:

``TEST c``  evaluate condition ``c`` and move to the state with ``c`` set to 0 or 1
``EXEC a``  fire action ``a``; all knowledge is discarded
``WAIT``    give up until something outside the actor changes

``WAIT`` discards knowledge that an external event can invalidate.  A channel has
one producer and one consumer, so "at least k tokens available" and "at least k
free slots" can only be falsified by the actor itself; those facts survive a
``WAIT``.  Token-reading guards are re-evaluated after a ``WAIT``, while guards over
state variables only change on ``EXEC``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from calflow.errors import ControllerTooLarge
from calflow.kernel import CompiledAction, CompiledActor

MAX_STATES = 1 << 20

TEST, EXEC, WAIT = "TEST", "EXEC", "WAIT"


@dataclass(frozen=True)
class Condition:
    kind: str  # "input", "output" or "guard"
    port: str | None = None
    count: int = 0
    action: int | None = None
    guard_index: int | None = None
    transient: bool = True

    def label(self, actor: CompiledActor | None = None) -> str:
        if self.kind == "input":
            return f"{self.port} has {self.count} token(s)"
        if self.kind == "output":
            return f"{self.port} has {self.count} free slot(s)"
        name = actor.actions[self.action].name if actor is not None else f"action{self.action}"
        return f"guard {self.guard_index} of {name}"


@dataclass(frozen=True)
class Instruction:
    kind: str
    condition: int | None = None  # TEST
    then: int | None = None  # TEST, condition true
    orelse: int | None = None  # TEST, condition false
    action: int | None = None  # EXEC
    next: int | None = None  # EXEC / WAIT


@dataclass
class ActorMachine:
    actor: CompiledActor
    conditions: list[Condition]
    states: list[str]  # knowledge vectors like "1X0"
    instructions: list[Instruction]
    required: list[list[int]]  # per action: condition indices, ascending

    initial: int = 0

    @property
    def name(self) -> str:
        return self.actor.name

    def state_of(self, knowledge: str) -> int:
        return self.states.index(knowledge)

    def action_for(self, instr: Instruction) -> CompiledAction | None:
        if instr.kind == EXEC:
            return self.actor.actions[instr.action]
        if instr.kind == TEST:
            cond = self.conditions[instr.condition]
            if cond.kind == "guard":
                return self.actor.actions[cond.action]
        return None

    def counts(self) -> dict[str, int]:
        out = {TEST: 0, EXEC: 0, WAIT: 0}
        for ins in self.instructions:
            out[ins.kind] += 1
        return out

    def to_dot(self) -> str:
        """Graphviz rendering; states are labelled with their knowledge vector."""
        lines = [f'digraph "{self.actor.name}" {{', "  rankdir=TB;"]
        for i, (k, ins) in enumerate(zip(self.states, self.instructions)):
            if ins.kind == TEST:
                detail = f"TEST c{ins.condition}"
            elif ins.kind == EXEC:
                detail = f"EXEC {self.actor.actions[ins.action].name}"
            else:
                detail = "WAIT"
            lines.append(f'  s{i} [label="{k or "-"}\\n{detail}"];')
        for i, ins in enumerate(self.instructions):
            if ins.kind == TEST:
                lines.append(f'  s{i} -> s{ins.then} [label="1"];')
                lines.append(f'  s{i} -> s{ins.orelse} [label="0"];')
            else:
                style = "solid" if ins.kind == EXEC else "dashed"
                lines.append(f"  s{i} -> s{ins.next} [style={style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def condition_order(actor: CompiledActor) -> list[Condition]:
    """Input availability (port order), then output space, then guards by priority."""
    conds: list[Condition] = []
    for port in actor.input_types:
        counts = sorted({n for a in actor.actions for p, n, _ in a.inputs if p == port and n > 0})
        conds.extend(Condition("input", port, n) for n in counts)
    for port in actor.output_types:
        counts = sorted({len(es) for a in actor.actions for p, es in a.outputs if p == port and es})
        conds.extend(Condition("output", port, n) for n in counts)
    for ai in actor.priority_order:
        a = actor.actions[ai]
        for gi in range(len(a.guards)):
            conds.append(Condition("guard", action=ai, guard_index=gi, transient=a.guard_reads_tokens[gi]))
    return conds


def _required(actor: CompiledActor, conds: list[Condition]) -> list[list[int]]:
    out = []
    for ai, a in enumerate(actor.actions):
        req = []
        for ci, c in enumerate(conds):
            if c.kind == "input" and any(p == c.port and n == c.count for p, n, _ in a.inputs):
                req.append(ci)
            elif c.kind == "output" and any(p == c.port and len(es) == c.count for p, es in a.outputs):
                req.append(ci)
            elif c.kind == "guard" and c.action == ai:
                req.append(ci)
        out.append(req)
    return out


def build_siam(actor: CompiledActor, max_states: int = MAX_STATES) -> ActorMachine:
    """Construct the controller lazily from the all-unknown state."""
    conds = condition_order(actor)
    required = _required(actor, conds)
    order = actor.priority_order
    keep_on_wait = [c.kind in ("input", "output") for c in conds]
    sticky = [c.kind == "guard" and not c.transient for c in conds]
    # which unknown condition of an action to test first: inputs, state-only guards,
    # output space, then guards over peeked tokens
    rank = {"input": 0, "output": 2}
    test_key = [(rank.get(c.kind, 1 if not c.transient else 3), i) for i, c in enumerate(conds)]

    def select(k: str) -> tuple:
        for ai in order:
            req = required[ai]
            if any(k[c] == "0" and conds[c].kind != "output" for c in req):
                continue  # action cannot fire until it consumes differently
            unknown = [c for c in req if k[c] == "X"]
            if not unknown:
                if all(k[c] == "1" for c in req):
                    return (EXEC, ai)
                return (WAIT,)  # enabled but for output space; lower priorities must not fire
            return (TEST, min(unknown, key=test_key.__getitem__))
        return (WAIT,)

    def after_wait(k: str) -> str:
        return "".join(
            v if (v == "1" and keep_on_wait[i]) or sticky[i] else "X" for i, v in enumerate(k)
        )

    init = "X" * len(conds)
    index = {init: 0}
    states = [init]
    pending: deque[int] = deque([0])
    raw: dict[int, tuple] = {}

    def intern(k: str) -> int:
        if k not in index:
            if len(states) >= max_states:
                raise ControllerTooLarge(f"actor {actor.name}: more than {max_states} controller states")
            index[k] = len(states)
            states.append(k)
            pending.append(index[k])
        return index[k]

    while pending:
        s = pending.popleft()
        k = states[s]
        sel = select(k)
        if sel[0] == TEST:
            c = sel[1]
            t = intern(k[:c] + "1" + k[c + 1:])
            f = intern(k[:c] + "0" + k[c + 1:])
            raw[s] = (TEST, c, t, f)
        elif sel[0] == EXEC:
            raw[s] = (EXEC, sel[1], intern(init))
        else:
            raw[s] = (WAIT, intern(after_wait(k)))

    instructions = []
    for s in range(len(states)):
        r = raw[s]
        if r[0] == TEST:
            instructions.append(Instruction(TEST, condition=r[1], then=r[2], orelse=r[3]))
        elif r[0] == EXEC:
            instructions.append(Instruction(EXEC, action=r[1], next=r[2]))
        else:
            instructions.append(Instruction(WAIT, next=r[1]))
    return ActorMachine(actor, conds, states, instructions, required)


def is_idle_state(am: ActorMachine, state: int, observed: dict[int, bool] | None = None) -> bool:
    """True when no EXEC is reachable from ``state`` through TEST steps alone.

    ``observed`` pins condition outcomes (the last values seen on the channels);
    unpinned TESTs explore both branches.
    """
    observed = observed or {}
    seen = set()
    stack = [state]
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        ins = am.instructions[s]
        if ins.kind == EXEC:
            return False
        if ins.kind == TEST:
            if ins.condition in observed:
                stack.append(ins.then if observed[ins.condition] else ins.orelse)
            else:
                stack.extend((ins.then, ins.orelse))
    return True
