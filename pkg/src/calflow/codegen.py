"""Text emission for accelerator actors and the accelerator network.

``emit_ham`` renders one controller as a C++-dialect class: an ``IO`` struct
with the FWFT view of every port, ``scope_i``/``condition_k``/``transition_i``
members, and ``operator()`` switching over ``program_counter``.  ``emit_network``
renders a Verilog-style structural netlist.  Neither is meant for a vendor
tool; both are checked structurally and against golden files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

from calflow.frontend import syntax as S
from calflow.frontend.types import BoolType, CalType, IntType, ListType
from calflow.machine import EXEC, TEST, ActorMachine

DEFAULT_DEPTH = 4096
RETURN_CODES = (("RETURN_WAIT", 0), ("RETURN_EXEC", 1))
UNROLL_LIMIT = 64

_CMP = {"and": "&&", "or": "||"}


def c_type(t: CalType) -> str:
    if isinstance(t, BoolType):
        return "bool"
    if isinstance(t, IntType):
        return f"ap_{'' if t.signed else 'u'}int<{t.width}>"
    return c_type(t.elem)


def _decl(t: CalType, name: str) -> str:
    dims = ""
    while isinstance(t, ListType):
        dims += f"[{t.size}]"
        t = t.elem
    return f"{c_type(t)} {name}{dims}"


def _ident(text: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in text)


class _Printer:
    """Expressions and statements as C text; ``names`` maps CAL names to C lvalues."""

    def __init__(self, names: Mapping[str, str]):
        self.names = dict(names)

    def expr(self, e: S.Expr) -> str:
        if isinstance(e, S.IntLit):
            return str(e.value)
        if isinstance(e, S.BoolLit):
            return "true" if e.value else "false"
        if isinstance(e, S.Name):
            return self.names.get(e.id, e.id)
        if isinstance(e, S.Index):
            return f"{self.expr(e.base)}[{self.expr(e.index)}]"
        if isinstance(e, S.Unary):
            op = "!" if e.op == "not" else e.op
            return f"{op}({self.expr(e.operand)})"
        if isinstance(e, S.Binary):
            return f"({self.expr(e.left)} {_CMP.get(e.op, e.op)} {self.expr(e.right)})"
        if isinstance(e, S.IfExpr):
            return f"({self.expr(e.cond)} ? {self.expr(e.then)} : {self.expr(e.orelse)})"
        if isinstance(e, S.ListLit):
            return "{" + ", ".join(self.expr(x) for x in e.items) + "}"
        if isinstance(e, S.Call):
            return f"{e.func}(" + ", ".join(self.expr(a) for a in e.args) + ")"
        raise TypeError(type(e).__name__)

    def stmts(self, body: list[S.Stmt], ind: str) -> list[str]:
        out: list[str] = []
        for s in body:
            out.extend(self.stmt(s, ind))
        return out

    def stmt(self, s: S.Stmt, ind: str) -> list[str]:
        if isinstance(s, S.Assign):
            tgt = self.names.get(s.target, s.target)
            if s.index is not None:
                tgt += f"[{self.expr(s.index)}]"
            return [f"{ind}{tgt} = {self.expr(s.value)};"]
        if isinstance(s, S.CallStmt):
            return [f"{ind}{s.func}(" + ", ".join(self.expr(a) for a in s.args) + ");"]
        if isinstance(s, S.If):
            out = [f"{ind}if ({self.expr(s.cond)}) {{", *self.stmts(s.then, ind + "    ")]
            if s.orelse:
                out += [f"{ind}}} else {{", *self.stmts(s.orelse, ind + "    ")]
            return out + [f"{ind}}}"]
        if isinstance(s, S.While):
            return [f"{ind}while ({self.expr(s.cond)}) {{", *self.stmts(s.body, ind + "    "), f"{ind}}}"]
        if isinstance(s, S.Foreach):
            v = s.var
            saved = self.names.pop(v, None)
            lo, hi = self.expr(s.lo), self.expr(s.hi)
            out = [f"{ind}for (ap_int<32> {v} = {lo}; {v} <= {hi}; {v}++) {{"]
            if isinstance(s.lo, S.IntLit) and isinstance(s.hi, S.IntLit) and s.hi.value - s.lo.value + 1 < UNROLL_LIMIT:
                out.append(f"{ind}    // @pragma HLS UNROLL")
            out += self.stmts(s.body, ind + "    ") + [f"{ind}}}"]
            if saved is not None:
                self.names[v] = saved
            return out
        raise TypeError(type(s).__name__)


def _type_expr(t: S.TypeExpr | None) -> str:
    if t is None:
        return "void"
    if t.kind == "bool":
        return "bool"
    if t.kind in ("int", "uint"):
        w = t.size.value if isinstance(t.size, S.IntLit) else 32
        return f"ap_{'' if t.kind == 'int' else 'u'}int<{w}>"
    return _type_expr(t.elem) + "*"


def emit_ham(am: ActorMachine, decl: S.ActorDecl | None = None) -> str:
    """C++-dialect source for one actor machine.

    Without ``decl`` the guard, local and body code is replaced by calls to
    opaque ``guard_*``/``body_*`` hooks; the controller is unaffected.
    """
    actor = am.actor
    inst = _ident(actor.name)
    io = f"IO_{inst}"
    cls = f"class_{inst}"
    in_depth = {p: 1 for p in actor.input_types}
    for a in actor.actions:
        for port, n, _ in a.inputs:
            in_depth[port] = max(in_depth[port], n)

    L: list[str] = []
    w = L.append
    w(f"// HAM for instance {actor.name} (actor {actor.actor_name})")
    w(f"// conditions: {len(am.conditions)}, controller states: {len(am.states)}")
    w("#include <ap_int.h>")
    w("#include <hls_stream.h>")
    w("")
    for name, code in RETURN_CODES:
        w(f"#define {name} {code}")
    w("")
    w(f"struct {io} {{")
    for port, t in actor.input_types.items():
        w(f"    int {port}_count;")
        w(f"    int {port}_size;")
        w(f"    {c_type(t)} {port}_peek[{in_depth[port]}];")
    for port in actor.output_types:
        w(f"    int {port}_count;")
        w(f"    int {port}_size;")
    w("};")
    w("")
    if decl is not None:
        for x in decl.externs:
            args = ", ".join(f"{_type_expr(p.type)} {p.name}" for p in x.params)
            w(f"extern {_type_expr(x.ret)} {x.name}({args});")
        if decl.externs:
            w("")

    # C names for state, parameters and per-action scope
    names: dict[str, str] = {}
    scope_names: list[dict[str, str]] = []
    for a in actor.actions:
        sn: dict[str, str] = {}
        for _port, _n, vars_ in a.inputs:
            for v in vars_:
                sn[v] = f"{_ident(a.name)}_{v}"
        for v, _t, _f in a.locals:
            sn[v] = f"{_ident(a.name)}_{v}"
        scope_names.append(sn)

    streams = [f"hls::stream<{c_type(t)}> &{p}" for p, t in actor.input_types.items()]
    streams += [f"hls::stream<{c_type(t)}> &{p}" for p, t in actor.output_types.items()]
    sig = ", ".join(streams + [f"{io} io"])

    w(f"class {cls} {{")
    w("private:")
    if actor.params:
        w("    // parameters")
        for k, v in actor.params.items():
            if isinstance(v, bool):
                w(f"    static constexpr bool {k} = {'true' if v else 'false'};")
            elif isinstance(v, int):
                w(f"    static constexpr ap_int<64> {k} = {v};")
    if decl is not None:
        consts = [v for v in decl.vars if v.constant]
        for v in consts:
            t = actor.var_types.get(v.name)
            ty = c_type(t) if t is not None else _type_expr(v.type)
            w(f"    static constexpr {ty} {v.name} = {_Printer(names).expr(v.init)};")
    w("    // state")
    for v, t in actor.var_types.items():
        w(f"    {_decl(t, v)};")
    w("    unsigned int program_counter;")
    w("    // action scope")
    for a, sn in zip(actor.actions, scope_names):
        types = {}
        for port, _n, vars_ in a.inputs:
            for v in vars_:
                types[v] = actor.input_types[port]
        for v, t, _f in a.locals:
            types[v] = t
        for v, cname in sn.items():
            w(f"    {_decl(types[v], cname)};")
    if decl is not None and decl.functions:
        w("")
        for f in decl.functions:
            args = ", ".join(f"{_type_expr(p.type)} {p.name}" for p in f.params)
            shadow = {k: v for k, v in names.items() if k not in {p.name for p in f.params}}
            w(f"    {_type_expr(f.ret)} {f.name}({args}) {{")
            w("        // @pragma HLS INLINE")
            w(f"        return {_Printer(shadow).expr(f.body)};")
            w("    }")

    decl_actions = decl.actions if decl is not None else [None] * len(actor.actions)
    for a, sn, da in zip(actor.actions, scope_names, decl_actions):
        i = a.index
        pr = _Printer({**names, **sn})
        w("")
        w(f"    void scope_{i}({io} io) {{")
        w("        // @pragma HLS INLINE")
        for port, _n, vars_ in a.inputs:
            for k, v in enumerate(vars_):
                w(f"        {sn[v]} = io.{port}_peek[{k}];")
        if da is not None:
            for v in da.locals:
                if v.init is not None:
                    w(f"        {sn[v.name]} = {pr.expr(v.init)};")
        elif a.locals:
            w(f"        locals_{i}();")
        w("    }")

    for k, c in enumerate(am.conditions):
        w("")
        w(f"    bool condition_{k}({io} io) {{")
        w("        // @pragma HLS INLINE")
        if c.kind == "input":
            w(f"        return io.{c.port}_count >= {c.count};")
        elif c.kind == "output":
            w(f"        return io.{c.port}_size >= {c.count};")
        else:
            a = actor.actions[c.action]
            w(f"        scope_{a.index}(io);")
            da = decl_actions[c.action]
            if da is not None:
                pr = _Printer({**names, **scope_names[c.action]})
                w(f"        return {pr.expr(da.guards[c.guard_index])};")
            else:
                w(f"        return guard_{a.index}_{c.guard_index}();")
        w("    }")

    for a, sn, da in zip(actor.actions, scope_names, decl_actions):
        i = a.index
        pr = _Printer({**names, **sn})
        w("")
        w(f"    void transition_{i}({sig}) {{")
        w("        // @pragma HLS INLINE")
        w(f"        scope_{i}(io);")
        for port, n, _ in a.inputs:
            for _ in range(n):
                w(f"        {port}.read();")
        if da is not None:
            for out in da.outputs:
                for x in out.exprs:
                    w(f"        {out.port}.write({pr.expr(x)});")
            for line in pr.stmts(da.body, "        "):
                w(line)
        else:
            for port, exprs in a.outputs:
                for j in range(len(exprs)):
                    w(f"        {port}.write(output_{i}_{port}_{j}());")
            w(f"        body_{i}();")
        w("    }")

    w("")
    w("public:")
    inits = [v for v in decl.vars if not v.constant and v.init is not None] if decl is not None else []
    if inits:
        w(f"    {cls}() : program_counter({am.initial}) {{")
        for v in inits:
            w(f"        {v.name} = {_Printer(names).expr(v.init)};")
        w("    }")
    else:
        w(f"    {cls}() : program_counter({am.initial}) {{}}")
    w("")
    w(f"    int operator()({sig});")
    w("};")
    w("")

    entries = sorted({am.initial} | {ins.next for ins in am.instructions if ins.kind != TEST})
    args = ", ".join([p for p in actor.input_types] + [p for p in actor.output_types] + ["io"])
    w(f"int {cls}::operator()({sig}) {{")
    w("    // @pragma HLS INLINE")
    w("    switch (program_counter) {")
    for s in entries:
        w(f"    case {s}: goto S{s};")
    w("    }")
    for s, (k, ins) in enumerate(zip(am.states, am.instructions)):
        w(f"S{s}: // {k or '-'}")
        if ins.kind == TEST:
            w(f"    if (condition_{ins.condition}(io)) goto S{ins.then}; else goto S{ins.orelse};")
        elif ins.kind == EXEC:
            w(f"    transition_{ins.action}({args});")
            w(f"    program_counter = {ins.next};")
            w("    return RETURN_EXEC;")
        else:
            w(f"    program_counter = {ins.next};")
            w("    return RETURN_WAIT;")
    w("}")
    w("")
    w(f"int {inst}({sig}) {{")
    w("    // @pragma HLS INTERFACE ap_ctrl_hs port=return")
    w(f"    static {cls} i_{inst};")
    w(f"    return i_{inst}({args});")
    w("}")
    return "\n".join(L) + "\n"


def _depth(conn, channels: Mapping | None, default: int) -> int:
    cfg = (channels or {}).get(conn.key)
    if cfg is not None and cfg.depth:
        return cfg.depth
    return conn.depth or default


def emit_network(graph, members: Iterable[str] | None = None, channels: Mapping | None = None,
                 default_depth: int = DEFAULT_DEPTH) -> str:
    """Structural netlist of the accelerator partition.

    One module and one trigger per member; one FWFT queue per connection with
    at least one member end.  Boundary connections attach to an input or
    output stage.
    """
    mset = set(graph.instances if members is None else members)
    order = [n for n in graph.instances if n in mset]
    conns = [c for c in graph.connections if c.src in mset or c.dst in mset]
    L = [
        f"// netlist for network {graph.name}",
        f"// default queue depth {default_depth}",
        f"// actors {len(order)}, queues {len(conns)}",
    ]
    if not order:
        return "\n".join(L) + "\n"
    top = f"{_ident(graph.name)}_accel"
    L.append(f"module {top} (input wire ap_clk, input wire ap_rst_n, input wire ap_start, output wire ap_idle);")
    L.append("  wire " + ", ".join(f"{_ident(n)}_done, {_ident(n)}_idle" for n in order) + ";")
    L.append("")
    qname = {}
    for i, c in enumerate(conns):
        q = f"q{i}_{_ident(c.src)}_{_ident(c.src_port)}__{_ident(c.dst)}_{_ident(c.dst_port)}"
        qname[c.key] = q
        L.append(f"  fifo #(.WIDTH({c.type.bits}), .DEPTH({_depth(c, channels, default_depth)})) {q} "
                 f"(.ap_clk(ap_clk), .ap_rst_n(ap_rst_n));")
    stages = []
    for c in conns:
        q = qname[c.key]
        if c.src not in mset:
            stages.append(f"  input_stage #(.WIDTH({c.type.bits})) is_{q} (.ap_clk(ap_clk), .dout({q}));")
        if c.dst not in mset:
            stages.append(f"  output_stage #(.WIDTH({c.type.bits})) os_{q} (.ap_clk(ap_clk), .din({q}));")
    if stages:
        L.append("")
        L.extend(stages)
    L.append("")
    for n in order:
        a = graph.actor(n)
        ports = [f".{c.dst_port}({qname[c.key]})" for c in conns if c.dst == n]
        ports += [f".{c.src_port}({qname[c.key]})" for c in conns if c.src == n]
        L.append(f"  trigger trigger_{_ident(n)} (.ap_clk(ap_clk), .ap_rst_n(ap_rst_n), "
                 f".start(ap_start), .actor_done({_ident(n)}_done), .idle({_ident(n)}_idle));")
        L.append(f"  {_ident(a.actor_name)} {_ident(n)} (.ap_clk(ap_clk), " + ", ".join(ports + [f".ap_done({_ident(n)}_done)"]) + ");")
    L.append("")
    L.append("  assign ap_idle = " + " & ".join(f"{_ident(n)}_idle" for n in order) + ";")
    L.append("endmodule")
    return "\n".join(L) + "\n"


def write_gen(graph, out_dir: str | Path, members: Iterable[str] | None = None,
              channels: Mapping | None = None, machines: Mapping | None = None,
              default_depth: int = DEFAULT_DEPTH) -> list[Path]:
    """Write ``gen/<actor>.cpp-dialect`` per member and ``gen/network.netlist``."""
    from calflow.machine import build_siam

    gen = Path(out_dir) / "gen"
    gen.mkdir(parents=True, exist_ok=True)
    mset = list(graph.instances if members is None else members)
    written = []
    for n in graph.instances:
        if n not in mset:
            continue
        am = machines[n] if machines and n in machines else build_siam(graph.actor(n))
        p = gen / f"{n}.cpp-dialect"
        p.write_text(emit_ham(am, graph.instances[n].decl))
        written.append(p)
    p = gen / "network.netlist"
    p.write_text(emit_network(graph, mset, channels, default_depth))
    written.append(p)
    return written
