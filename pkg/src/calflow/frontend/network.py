"""Elaboration: validate declarations and flatten the top network into a graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from calflow.errors import CalSemanticError
from calflow.frontend import syntax as S
from calflow.frontend.parser import parse_source
from calflow.frontend.types import CalType
from calflow.kernel import ActorCompiler, CompiledActor, action_name, default_host_functions


@dataclass(frozen=True)
class Connection:
    src: str
    src_port: str
    dst: str
    dst_port: str
    type: CalType
    depth: int | None = None

    @property
    def key(self) -> str:
        return f"{self.src}.{self.src_port}->{self.dst}.{self.dst_port}"

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class ActorInstance:
    name: str
    actor: CompiledActor
    decl: S.ActorDecl = field(compare=False, repr=False)


@dataclass
class NetworkGraph:
    """A flattened, closed network: actor instances plus point-to-point connections."""

    name: str
    instances: dict[str, ActorInstance]
    connections: list[Connection]

    def instance_names(self) -> list[str]:
        return list(self.instances)

    def outgoing(self, inst: str) -> list[Connection]:
        return [c for c in self.connections if c.src == inst]

    def incoming(self, inst: str) -> list[Connection]:
        return [c for c in self.connections if c.dst == inst]

    def connection(self, key: str) -> Connection:
        for c in self.connections:
            if c.key == key:
                return c
        raise KeyError(key)

    def actor(self, inst: str) -> CompiledActor:
        return self.instances[inst].actor


# -- validation ---------------------------------------------------------------------


def validate_actor(d: S.ActorDecl) -> None:
    def err(msg, pos=d.pos):
        return CalSemanticError(f"in actor {d.name}: {msg}", pos[0], pos[1], d.source)

    for direction, ports in (("input", d.inputs), ("output", d.outputs)):
        seen = set()
        for p in ports:
            if p.name in seen:
                raise err(f"duplicate {direction} port {p.name!r}", p.pos)
            seen.add(p.name)
    labels = {}
    for i, a in enumerate(d.actions):
        if a.label is not None:
            if a.label in labels:
                raise err(f"duplicate action label {a.label!r}", a.pos)
            labels[a.label] = i
        for pat_list in (a.inputs, a.outputs):
            ports = [p.port for p in pat_list]
            if len(ports) != len(set(ports)):
                raise err(f"action {action_name(a, i)!r} names a port twice", a.pos)
    edges: dict[str, set[str]] = {}
    for chain in d.priorities:
        for lab in chain:
            if lab not in labels:
                raise err(f"priority refers to unknown action {lab!r}")
        for hi, lo in zip(chain, chain[1:]):
            edges.setdefault(hi, set()).add(lo)
    # cycle check (three-colour DFS)
    colour: dict[str, int] = {}

    def visit(n: str) -> None:
        colour[n] = 1
        for m in sorted(edges.get(n, ())):
            c = colour.get(m, 0)
            if c == 1:
                raise err(f"cyclic priority involving {n!r} and {m!r}")
            if c == 0:
                visit(m)
        colour[n] = 2

    for n in sorted(edges):
        if colour.get(n, 0) == 0:
            visit(n)


def _const_eval(e: S.Expr, consts: Mapping[str, Any], source: str):
    dummy = S.ActorDecl("<network>", [], [], [], [], [], [], [], [], source=source)
    return ActorCompiler(dummy, dict(consts), {}).const_eval(e)


# -- elaboration ------------------------------------------------------------------------


def elaborate(
    unit: S.CompilationUnit,
    top: str,
    host: Mapping[str, Callable] | None = None,
    params: Mapping[str, Any] | None = None,
) -> NetworkGraph:
    host = default_host_functions() if host is None else host
    actors: dict[str, S.ActorDecl] = {}
    networks: dict[str, S.NetworkDecl] = {}
    for a in unit.actors:
        if a.name in actors or a.name in networks:
            raise CalSemanticError(f"duplicate entity {a.name!r}", *a.pos, a.source)
        validate_actor(a)
        actors[a.name] = a
    for n in unit.networks:
        if n.name in actors or n.name in networks:
            raise CalSemanticError(f"duplicate entity {n.name!r}", *n.pos, n.source)
        networks[n.name] = n
    if top not in networks:
        raise CalSemanticError(f"unknown top network {top!r}")
    net = networks[top]

    def err(msg, pos=net.pos):
        return CalSemanticError(f"in network {net.name}: {msg}", pos[0], pos[1], net.source)

    if net.inputs or net.outputs:
        raise err("network-level ports are not supported; the top network must be closed")

    # network parameters
    env: dict[str, Any] = {}
    overrides = dict(params or {})
    tmp = ActorCompiler(S.ActorDecl("<network>", [], [], [], [], [], [], [], [], source=net.source), {}, {})
    for p in net.params:
        ty = tmp.resolve_type(p.type)
        if p.name in overrides:
            env[p.name] = ty.wrap(overrides.pop(p.name))
        elif p.default is not None:
            env[p.name] = ty.wrap(_const_eval(p.default, env, net.source))
        else:
            raise err(f"network parameter {p.name!r} has no value")
        tmp.consts[p.name] = env[p.name]
    if overrides:
        raise err(f"unknown network parameter(s): {', '.join(sorted(overrides))}")

    instances: dict[str, ActorInstance] = {}
    for inst in net.instances:
        if inst.name in instances:
            raise err(f"duplicate instance {inst.name!r}", inst.pos)
        if inst.entity in networks:
            raise err(f"instance {inst.name!r}: hierarchical networks are not supported", inst.pos)
        if inst.entity not in actors:
            raise err(f"instance {inst.name!r}: unknown actor {inst.entity!r}", inst.pos)
        decl = actors[inst.entity]
        declared = {p.name: p for p in decl.params}
        unknown = [a for a in inst.args if a not in declared]
        if unknown:
            raise err(f"instance {inst.name!r}: actor {decl.name} has no parameter {unknown[0]!r}", inst.pos)
        consts: dict[str, Any] = {}
        bound: dict[str, Any] = {}
        actor_tmp = ActorCompiler(decl, {}, host)
        for p in decl.params:
            ty = actor_tmp.resolve_type(p.type)
            if p.name in inst.args:
                value = _const_eval(inst.args[p.name], env, net.source)
            elif p.default is not None:
                value = actor_tmp.const_eval(p.default)
            else:
                raise err(
                    f"instance {inst.name!r}: parameter arity mismatch, missing value for {p.name!r}", inst.pos
                )
            consts[p.name] = ty.wrap(value)
            bound[p.name] = consts[p.name]
            actor_tmp.consts[p.name] = consts[p.name]
        compiled = ActorCompiler(decl, consts, host).compile(inst.name, bound)
        instances[inst.name] = ActorInstance(inst.name, compiled, decl)

    connections: list[Connection] = []
    fed: set[tuple[str, str]] = set()
    for c in net.connections:
        for inst_name in (c.src, c.dst):
            if inst_name not in instances:
                raise err(f"connection refers to unknown instance {inst_name!r}", c.pos)
        src_actor = instances[c.src].actor
        dst_actor = instances[c.dst].actor
        if c.src_port not in src_actor.output_types:
            raise err(f"{c.src} has no output port {c.src_port!r}", c.pos)
        if c.dst_port not in dst_actor.input_types:
            raise err(f"{c.dst} has no input port {c.dst_port!r}", c.pos)
        if (c.dst, c.dst_port) in fed:
            raise err(f"input port {c.dst}.{c.dst_port} has more than one incoming connection", c.pos)
        fed.add((c.dst, c.dst_port))
        st = src_actor.output_types[c.src_port]
        dt = dst_actor.input_types[c.dst_port]
        if st != dt:
            raise err(
                f"type mismatch on {c.src}.{c.src_port} --> {c.dst}.{c.dst_port}: {st} vs {dt}", c.pos
            )
        depth = None
        for key in ("bufferSize", "size", "depth"):
            if key in c.attrs:
                depth = int(_const_eval(c.attrs[key], env, net.source))
                if depth <= 0:
                    raise err("buffer size must be positive", c.pos)
        connections.append(Connection(c.src, c.src_port, c.dst, c.dst_port, st, depth))
    return NetworkGraph(net.name, instances, connections)


def parse_program(
    sources: Iterable[str | tuple[str, str]],
    top: str,
    host: Mapping[str, Callable] | None = None,
    params: Mapping[str, Any] | None = None,
) -> NetworkGraph:
    """Parse one or more CAL documents and return the flattened ``top`` network.

    ``sources`` items are either document text or ``(name, text)`` pairs; the name
    only shows up in diagnostics.
    """
    unit = S.CompilationUnit()
    count = 0
    for i, item in enumerate(sources):
        name, text = item if isinstance(item, tuple) else (f"<source {i}>", item)
        part = parse_source(text, name)
        unit.actors.extend(part.actors)
        unit.networks.extend(part.networks)
        count += 1
    if count == 0:
        raise CalSemanticError("no source documents given")
    return elaborate(unit, top, host, params)
