"""Action-body evaluation shared by every backend.

Actors are compiled once into Python closures.  Every closure takes the pair
``(scope, state)``: ``scope`` holds action-local bindings (input tokens, ``var``
locals, loop indices, function parameters) and ``state`` the actor's variable
store.  Parameters and constants are folded in at compile time.

Integer values are plain Python ints; they are wrapped to their declared width
whenever they are stored (variables, ports, function results), which gives the
same two's-complement results on every backend.
"""

from __future__ import annotations

import operator
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

from calflow.errors import CalSemanticError, EvaluationError
from calflow.frontend import syntax as S
from calflow.frontend.types import BoolType, CalType, IntType, ListType, default_value

Closure = Callable[[dict, dict], Any]


# -- host functions -------------------------------------------------------------


def lcg_rand(x: int) -> int:
    """Deterministic stand-in for an external ``rand``: one LCG step on its argument."""
    return (1103515245 * x + 12345) & 0x7FFFFFFF


class HostFunctions(dict):
    """Registry of external functions callable from actor code."""

    def register(self, name: str, fn: Callable | None = None):
        if fn is None:
            def deco(f):
                self[name] = f
                return f
            return deco
        self[name] = fn
        return fn


def default_host_functions(printer: Callable[[Any], None] | None = None) -> HostFunctions:
    host = HostFunctions()
    host["rand"] = lcg_rand
    host["println"] = printer if printer is not None else (lambda *a: print(*a))
    host["print"] = host["println"]
    return host


# -- port protocol ----------------------------------------------------------------


class InputView(Protocol):
    def available(self) -> int: ...
    def peek(self, i: int) -> Any: ...
    def consume(self, n: int) -> None: ...


class OutputView(Protocol):
    def space(self) -> int: ...
    def push(self, token: Any) -> None: ...


# -- runtime state ------------------------------------------------------------------


@dataclass
class ActorState:
    vars: dict[str, Any]
    pc: int = 0
    firings: Counter = field(default_factory=Counter)


# -- compiled forms -----------------------------------------------------------------


@dataclass
class CompiledAction:
    name: str
    index: int
    inputs: list[tuple[str, int, list[str]]]
    outputs: list[tuple[str, list[Closure]]]
    guards: list[Closure]
    guard_reads_tokens: list[bool]
    locals: list[tuple[str, CalType, Closure]]
    body: Closure
    weight: int
    free_vars: tuple[str, ...]
    actor: str = ""

    def consumption(self) -> dict[str, int]:
        return {p: n for p, n, _ in self.inputs}

    def production(self) -> dict[str, int]:
        return {p: len(es) for p, es in self.outputs}

    def scope(self, state: dict, peeked: Mapping[str, list]) -> dict:
        sc: dict[str, Any] = {}
        for port, _n, names in self.inputs:
            toks = peeked[port]
            for name, tok in zip(names, toks):
                sc[name] = tok
        try:
            for name, ty, init in self.locals:
                sc[name] = ty.wrap(init(sc, state))
        except EvaluationError as e:
            if e.actor is not None:
                raise
            raise EvaluationError(e.args[0], self.actor, self.name) from None
        except (ZeroDivisionError, IndexError, ValueError, TypeError, OverflowError) as e:
            raise EvaluationError(str(e), self.actor, self.name) from None
        return sc

    def guard(self, i: int, sc: dict, state: dict) -> bool:
        try:
            return bool(self.guards[i](sc, state))
        except EvaluationError as e:
            if e.actor is not None:
                raise
            raise EvaluationError(e.args[0], self.actor, self.name) from None
        except (ZeroDivisionError, IndexError, ValueError, TypeError, OverflowError) as e:
            raise EvaluationError(str(e), self.actor, self.name) from None

    def fire(self, sc: dict, state: dict, port_types: Mapping[str, CalType]) -> dict[str, list]:
        """Evaluate output expressions, then run the body; returns tokens per output port.

        Outputs see the state as it was before the body ran.
        """
        try:
            out: dict[str, list] = {}
            for port, exprs in self.outputs:
                ty = port_types[port]
                out[port] = [_freeze(ty.wrap(e(sc, state))) for e in exprs]
            self.body(sc, state)
            return out
        except EvaluationError as e:
            if e.actor is not None:
                raise
            raise EvaluationError(e.args[0], self.actor, self.name) from None
        except (ZeroDivisionError, IndexError, ValueError, TypeError, OverflowError, RecursionError) as e:
            raise EvaluationError(str(e), self.actor, self.name) from None


def _freeze(v):
    return tuple(v) if isinstance(v, list) else v


@dataclass
class CompiledActor:
    name: str  # instance name
    actor_name: str
    params: dict[str, Any]
    input_types: dict[str, CalType]
    output_types: dict[str, CalType]
    var_types: dict[str, CalType]
    var_inits: list[tuple[str, CalType, Closure]]
    actions: list[CompiledAction]
    priority_order: list[int]  # action indices, highest priority first
    software_only: bool = False

    def initial_state(self) -> ActorState:
        st: dict[str, Any] = {}
        try:
            for name, ty, init in self.var_inits:
                st[name] = ty.wrap(init({}, st)) if init is not None else default_value(ty)
        except (ZeroDivisionError, IndexError, ValueError, TypeError, OverflowError) as e:
            raise EvaluationError(f"state initialization: {e}", self.name) from None
        return ActorState(st)

    @property
    def port_types(self) -> dict[str, CalType]:
        return {**self.input_types, **self.output_types}


# -- compiler ----------------------------------------------------------------------------


def _trunc_div(a, b):
    if b == 0:
        raise EvaluationError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _trunc_mod(a, b):
    if b == 0:
        raise EvaluationError("modulo by zero")
    return a - b * _trunc_div(a, b)


def _shl(a, b):
    if b < 0:
        raise EvaluationError("negative shift")
    if b > 128:
        b = 128
    return a << b


def _shr(a, b):
    if b < 0:
        raise EvaluationError("negative shift")
    return a >> b


_BINOPS: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _trunc_div,
    "%": _trunc_mod,
    "<<": _shl,
    ">>": _shr,
    "&": operator.and_,
    "|": operator.or_,
    "^": operator.xor,
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class ActorCompiler:
    """Compile one instantiated actor declaration to closures."""

    def __init__(self, decl: S.ActorDecl, consts: dict[str, Any], host: Mapping[str, Callable]):
        self.decl = decl
        self.consts = dict(consts)
        self.host = host
        self.var_types: dict[str, CalType] = {}
        self.functions: dict[str, Callable] = {}
        self._func_decls = {f.name: f for f in decl.functions}
        self._extern_decls = {e.name: e for e in decl.externs}
        self._compiling: list[str] = []

    def err(self, msg: str, pos: S.Pos = (0, 0)) -> CalSemanticError:
        return CalSemanticError(f"in actor {self.decl.name}: {msg}", pos[0], pos[1], self.decl.source)

    # -- types ---------------------------------------------------------------

    def resolve_type(self, t: S.TypeExpr) -> CalType:
        try:
            if t.kind == "bool":
                return BoolType()
            if t.kind in ("int", "uint"):
                width = 32 if t.size is None else self.const_eval(t.size)
                return IntType(int(width), t.kind == "int")
            elem = self.resolve_type(t.elem)
            size = int(self.const_eval(t.size))
            if size < 1:
                raise ValueError("list size must be positive")
            return ListType(elem, size)
        except ValueError as e:
            raise self.err(str(e), t.pos) from None

    def const_eval(self, e: S.Expr):
        f = self.expr(e, frozenset())
        try:
            return f({}, {})
        except KeyError as ex:
            raise self.err(f"{ex.args[0]!r} is not a compile-time constant", e.pos) from None
        except EvaluationError as ex:
            raise self.err(str(ex), e.pos) from None

    # -- expressions ---------------------------------------------------------

    def expr(self, e: S.Expr, scope: frozenset[str]) -> Closure:
        if isinstance(e, S.IntLit):
            v = e.value
            return lambda sc, st: v
        if isinstance(e, S.BoolLit):
            b = e.value
            return lambda sc, st: b
        if isinstance(e, S.Name):
            name = e.id
            if name in scope:
                return lambda sc, st: sc[name]
            if name in self.var_types:
                return lambda sc, st: st[name]
            if name in self.consts:
                v = self.consts[name]
                return lambda sc, st: v
            raise self.err(f"unknown name {name!r}", e.pos)
        if isinstance(e, S.Index):
            base = self.expr(e.base, scope)
            idx = self.expr(e.index, scope)

            def index(sc, st):
                seq = base(sc, st)
                i = idx(sc, st)
                if not 0 <= i < len(seq):
                    raise EvaluationError(f"index {i} out of bounds for list of length {len(seq)}")
                return seq[i]

            return index
        if isinstance(e, S.Unary):
            a = self.expr(e.operand, scope)
            if e.op == "not":
                return lambda sc, st: not a(sc, st)
            if e.op == "-":
                return lambda sc, st: -a(sc, st)
            return lambda sc, st: ~a(sc, st)
        if isinstance(e, S.Binary):
            left = self.expr(e.left, scope)
            right = self.expr(e.right, scope)
            if e.op == "and":
                return lambda sc, st: bool(left(sc, st)) and bool(right(sc, st))
            if e.op == "or":
                return lambda sc, st: bool(left(sc, st)) or bool(right(sc, st))
            op = _BINOPS[e.op]
            return lambda sc, st: op(left(sc, st), right(sc, st))
        if isinstance(e, S.IfExpr):
            c = self.expr(e.cond, scope)
            a = self.expr(e.then, scope)
            b = self.expr(e.orelse, scope)
            return lambda sc, st: a(sc, st) if c(sc, st) else b(sc, st)
        if isinstance(e, S.ListLit):
            items = [self.expr(x, scope) for x in e.items]
            return lambda sc, st: [f(sc, st) for f in items]
        if isinstance(e, S.Call):
            return self.call(e.func, e.args, scope, e.pos, need_value=True)
        raise self.err(f"unsupported expression {type(e).__name__}", getattr(e, "pos", (0, 0)))

    def call(self, fname: str, args: list[S.Expr], scope: frozenset[str], pos: S.Pos, need_value: bool) -> Closure:
        argf = [self.expr(a, scope) for a in args]
        if fname in self._func_decls:
            fn = self.function(fname, pos)
            fd = self._func_decls[fname]
            if len(args) != len(fd.params):
                raise self.err(f"function {fname!r} expects {len(fd.params)} arguments, got {len(args)}", pos)
            return lambda sc, st: fn(st, [f(sc, st) for f in argf])
        if fname in self._extern_decls:
            ed = self._extern_decls[fname]
            if len(args) != len(ed.params):
                raise self.err(f"external {fname!r} expects {len(ed.params)} arguments, got {len(args)}", pos)
            if need_value and ed.ret is None:
                raise self.err(f"procedure {fname!r} used as a value", pos)
            if fname not in self.host:
                raise self.err(f"external function {fname!r} is not registered with the host", pos)
            host_fn = self.host[fname]
            ptypes = [self.resolve_type(p.type) for p in ed.params]
            rtype = self.resolve_type(ed.ret) if ed.ret is not None else None
            if rtype is None:
                return lambda sc, st: host_fn(*[t.wrap(f(sc, st)) for t, f in zip(ptypes, argf)])
            return lambda sc, st: rtype.wrap(host_fn(*[t.wrap(f(sc, st)) for t, f in zip(ptypes, argf)]))
        raise self.err(f"unknown function {fname!r}", pos)

    def function(self, name: str, pos: S.Pos) -> Callable:
        if name in self.functions:
            return self.functions[name]
        if name in self._compiling:
            raise self.err(f"recursive function {name!r} is not supported", pos)
        fd = self._func_decls[name]
        self._compiling.append(name)
        ptypes = [(p.name, self.resolve_type(p.type)) for p in fd.params]
        rtype = self.resolve_type(fd.ret)
        body = self.expr(fd.body, frozenset(n for n, _ in ptypes))
        self._compiling.pop()

        def fn(st, argv):
            sc = {n: t.wrap(v) for (n, t), v in zip(ptypes, argv)}
            return rtype.wrap(body(sc, st))

        self.functions[name] = fn
        return fn

    # -- statements ---------------------------------------------------------------

    def stmts(self, body: list[S.Stmt], scope: dict[str, CalType]) -> Closure:
        fs = [self.stmt(s, scope) for s in body]
        if not fs:
            return lambda sc, st: None
        if len(fs) == 1:
            return fs[0]

        def run(sc, st):
            for f in fs:
                f(sc, st)

        return run

    def stmt(self, s: S.Stmt, scope: dict[str, CalType]) -> Closure:
        names = frozenset(scope)
        if isinstance(s, S.Assign):
            value = self.expr(s.value, names)
            if s.target in scope:
                ty, store = scope[s.target], "sc"
            elif s.target in self.var_types:
                ty, store = self.var_types[s.target], "st"
            elif s.target in self.consts:
                raise self.err(f"cannot assign to constant {s.target!r}", s.pos)
            else:
                raise self.err(f"unknown variable {s.target!r}", s.pos)
            target = s.target
            if s.index is None:
                def assign(sc, st):
                    (sc if store == "sc" else st)[target] = ty.wrap(value(sc, st))
                return assign
            if not isinstance(ty, ListType):
                raise self.err(f"{target!r} is not a list", s.pos)
            idx = self.expr(s.index, names)
            ety = ty.elem

            def assign_elem(sc, st):
                seq = (sc if store == "sc" else st)[target]
                i = idx(sc, st)
                if not 0 <= i < len(seq):
                    raise EvaluationError(f"index {i} out of bounds for list of length {len(seq)}")
                seq[i] = ety.wrap(value(sc, st))

            return assign_elem
        if isinstance(s, S.CallStmt):
            return self.call(s.func, s.args, names, s.pos, need_value=False)
        if isinstance(s, S.If):
            c = self.expr(s.cond, names)
            a = self.stmts(s.then, scope)
            b = self.stmts(s.orelse, scope)

            def if_(sc, st):
                if c(sc, st):
                    a(sc, st)
                else:
                    b(sc, st)

            return if_
        if isinstance(s, S.While):
            c = self.expr(s.cond, names)
            body = self.stmts(s.body, scope)

            def while_(sc, st):
                while c(sc, st):
                    body(sc, st)

            return while_
        if isinstance(s, S.Foreach):
            lo = self.expr(s.lo, names)
            hi = self.expr(s.hi, names)
            vty = self.resolve_type(s.var_type) if s.var_type is not None else IntType(32)
            inner = dict(scope)
            inner[s.var] = vty
            body = self.stmts(s.body, inner)
            var = s.var

            def foreach(sc, st):
                for i in range(lo(sc, st), hi(sc, st) + 1):
                    sc[var] = vty.wrap(i)
                    body(sc, st)

            return foreach
        raise self.err(f"unsupported statement {type(s).__name__}", getattr(s, "pos", (0, 0)))

    # -- whole actor ----------------------------------------------------------------

    def compile(self, instance_name: str, params: dict[str, Any]) -> CompiledActor:
        d = self.decl
        input_types = {p.name: self.resolve_type(p.type) for p in d.inputs}
        output_types = {p.name: self.resolve_type(p.type) for p in d.outputs}
        var_inits: list[tuple[str, CalType, Closure]] = []
        for v in d.vars:
            ty = self.resolve_type(v.type)
            if v.name in self.consts or v.name in self.var_types:
                raise self.err(f"duplicate declaration of {v.name!r}", v.pos)
            if v.constant:
                self.consts[v.name] = ty.wrap(self.const_eval(v.init))
                continue
            init = self.expr(v.init, frozenset()) if v.init is not None else None
            self.var_types[v.name] = ty
            var_inits.append((v.name, ty, init))
        for fname in self._func_decls:
            self.function(fname, self._func_decls[fname].pos)

        actions = []
        for i, a in enumerate(d.actions):
            actions.append(self.action(a, i, input_types, output_types, instance_name))
        order = priority_order(d)
        return CompiledActor(
            name=instance_name,
            actor_name=d.name,
            params=params,
            input_types=input_types,
            output_types=output_types,
            var_types=dict(self.var_types),
            var_inits=var_inits,
            actions=actions,
            priority_order=order,
            # host procedures do I/O, which the accelerator cannot
            software_only=any(an.name == "software" for an in d.annotations)
            or any(x.ret is None for x in d.externs),
        )

    def action(self, a: S.ActionDecl, index: int, input_types, output_types, instance: str) -> CompiledAction:
        scope: dict[str, CalType] = {}
        inputs = []
        token_names: set[str] = set()
        for pat in a.inputs:
            if pat.port not in input_types:
                raise self.err(f"action {action_name(a, index)!r} reads unknown input port {pat.port!r}", pat.pos)
            for n in pat.vars:
                if n in scope:
                    raise self.err(f"duplicate binding {n!r}", pat.pos)
                scope[n] = input_types[pat.port]
                token_names.add(n)
            inputs.append((pat.port, len(pat.vars), list(pat.vars)))
        local_fs = []
        for v in a.locals:
            ty = self.resolve_type(v.type)
            init = self.expr(v.init, frozenset(scope)) if v.init is not None else (lambda sc, st, _t=ty: default_value(_t))
            scope[v.name] = ty
            local_fs.append((v.name, ty, init))
        names = frozenset(scope)
        guards = [self.expr(g, names) for g in a.guards]
        local_reads_tokens = any(_reads(v.init, token_names) for v in a.locals if v.init is not None)
        guard_tokens = [local_reads_tokens or _reads(g, token_names) for g in a.guards]
        body = self.stmts(a.body, scope)
        outputs = []
        for out in a.outputs:
            if out.port not in output_types:
                raise self.err(f"action {action_name(a, index)!r} writes unknown output port {out.port!r}", out.pos)
            outputs.append((out.port, [self.expr(x, names) for x in out.exprs]))
        weight = 1
        for an in a.annotations:
            if an.name == "weight" and an.args:
                weight = int(an.args[0])
        free = _free_vars(a, set(self.var_types))
        return CompiledAction(
            name=action_name(a, index),
            index=index,
            inputs=inputs,
            outputs=outputs,
            guards=guards,
            guard_reads_tokens=guard_tokens,
            locals=local_fs,
            body=body,
            weight=weight,
            free_vars=free,
            actor=instance,
        )


def action_name(a: S.ActionDecl, index: int) -> str:
    return a.label if a.label else f"action{index}"


def priority_order(d: S.ActorDecl) -> list[int]:
    """Linearize the priority partial order; unrelated actions keep declaration order."""
    names = [action_name(a, i) for i, a in enumerate(d.actions)]
    idx = {n: i for i, n in enumerate(names)}
    succ: dict[int, set[int]] = {i: set() for i in range(len(names))}
    indeg = [0] * len(names)
    for chain in d.priorities:
        for hi, lo in zip(chain, chain[1:]):
            a, b = idx[hi], idx[lo]
            if b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
    order: list[int] = []
    ready = sorted(i for i in range(len(names)) if indeg[i] == 0)
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in sorted(succ[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
                ready.sort()
    return order


def _walk(node):
    """Yield every syntax node below ``node`` (expressions and statements)."""
    stack = [node]
    while stack:
        n = stack.pop()
        if n is None:
            continue
        if isinstance(n, list):
            stack.extend(n)
            continue
        yield n
        for attr in ("left", "right", "operand", "base", "index", "cond", "then", "orelse",
                     "value", "args", "items", "body", "lo", "hi"):
            child = getattr(n, attr, None)
            if child is not None and not isinstance(child, (str, int, bool)):
                stack.append(child)


def _reads(e: S.Expr, names: set[str]) -> bool:
    return any(isinstance(n, S.Name) and n.id in names for n in _walk(e))


def _free_vars(a: S.ActionDecl, state_vars: set[str]) -> tuple[str, ...]:
    bound = {n for p in a.inputs for n in p.vars} | {v.name for v in a.locals}
    seen: list[str] = []
    roots: list = list(a.guards) + [v.init for v in a.locals] + list(a.body)
    roots += [x for o in a.outputs for x in o.exprs]
    for n in _walk(roots):
        ident = None
        if isinstance(n, S.Name):
            ident = n.id
        elif isinstance(n, S.Assign):
            ident = n.target
        if ident and (ident in bound or ident in state_vars) and ident not in seen:
            seen.append(ident)
    return tuple(sorted(seen))


# -- operations shared by the backends -------------------------------------------------


def peek_inputs(action: CompiledAction, inputs: Mapping[str, InputView]) -> dict[str, list]:
    return {port: [inputs[port].peek(i) for i in range(n)] for port, n, _ in action.inputs}


def eval_scope(am, actor_state: ActorState, state_id: int, peeked: Mapping[str, list]) -> dict[str, Any]:
    """Bindings for the instruction pending at ``state_id``; never mutates ``actor_state``."""
    instr = am.instructions[state_id]
    action = am.action_for(instr)
    if action is None:
        return {}
    sc = action.scope(actor_state.vars, peeked)
    out = {}
    for name in action.free_vars:
        if name in sc:
            out[name] = sc[name]
        elif name in actor_state.vars:
            v = actor_state.vars[name]
            out[name] = list(v) if isinstance(v, list) else v
    return out


def eval_condition(am, actor_state: ActorState, condition, inputs: Mapping[str, InputView],
                   outputs: Mapping[str, OutputView]) -> bool:
    """Evaluate one controller condition without consuming tokens."""
    if condition.kind == "input":
        return inputs[condition.port].available() >= condition.count
    if condition.kind == "output":
        return outputs[condition.port].space() >= condition.count
    action = am.actor.actions[condition.action]
    sc = action.scope(actor_state.vars, peek_inputs(action, inputs))
    return action.guard(condition.guard_index, sc, actor_state.vars)


def exec_transition(am, actor_state: ActorState, action_index: int, inputs: Mapping[str, InputView],
                    outputs: Mapping[str, OutputView]) -> None:
    """Fire one action: consume, run body, produce.  Channels are touched only after the
    body succeeded, so a fault leaves them unchanged."""
    action = am.actor.actions[action_index]
    sc = action.scope(actor_state.vars, peek_inputs(action, inputs))
    produced = action.fire(sc, actor_state.vars, am.actor.output_types)
    for port, n, _ in action.inputs:
        inputs[port].consume(n)
    for port, toks in produced.items():
        out = outputs[port]
        for t in toks:
            out.push(t)
    actor_state.firings[action.name] += 1
