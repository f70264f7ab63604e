"""Recursive-descent parser for the CAL subset.

Accepted surface syntax (a strict subset of RVC-CAL with a few shorthands)::

    actor Filter(int param) int IN ==> int OUT :
        function pred(int v) --> bool : v > param end
        t0: action IN:[t] ==> OUT:[t] guard pred(t) end
        t1: action IN:[t] ==> end
        priority t0 > t1; end
    end

    network Top() ==> :
    entities
        f = Filter(param = 5);
    structure
        a.OUT --> f.IN { bufferSize = 64; };
    end
"""

from __future__ import annotations

from calflow.errors import CalSyntaxError
from calflow.frontend import syntax as S
from calflow.frontend.lexer import Token, tokenize

_TYPE_KEYWORDS = ("int", "uint", "bool", "List")


class Parser:
    def __init__(self, text: str, source: str = "<input>"):
        self.source = source
        self.toks = tokenize(text, source)
        self.i = 0

    # -- token helpers ---------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        j = min(self.i + k, len(self.toks) - 1)
        return self.toks[j]

    def error(self, msg: str, tok: Token | None = None) -> CalSyntaxError:
        t = tok or self.tok
        found = t.text if t.kind != "eof" else "end of input"
        return CalSyntaxError(f"{msg} (found {found!r})", t.line, t.col, self.source)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            raise self.error(f"expected {text!r}")
        return t

    def ident(self) -> str:
        t = self.tok
        if t.kind != "id":
            raise self.error("expected identifier")
        self.i += 1
        return t.text

    def pos(self) -> S.Pos:
        return (self.tok.line, self.tok.col)

    # -- top level ---------------------------------------------------------------

    def parse_unit(self) -> S.CompilationUnit:
        unit = S.CompilationUnit()
        while self.tok.kind != "eof":
            anns = self.annotations()
            if self.at("actor"):
                actor = self.actor()
                actor.annotations = anns
                unit.actors.append(actor)
            elif self.at("network"):
                unit.networks.append(self.network())
            else:
                raise self.error("expected 'actor' or 'network'")
        return unit

    def annotations(self) -> list[S.Annotation]:
        anns = []
        while self.accept("@"):
            name = self.tok.text
            if self.tok.kind not in ("id", "kw"):
                raise self.error("expected annotation name")
            self.i += 1
            args: list[int] = []
            if self.accept("("):
                while not self.at(")"):
                    neg = self.accept("-") is not None
                    t = self.tok
                    if t.kind != "int":
                        raise self.error("annotation arguments must be integers")
                    self.i += 1
                    args.append(-t.value if neg else t.value)
                    if not self.accept(","):
                        break
                self.expect(")")
            anns.append(S.Annotation(name, args))
        return anns

    # -- types -------------------------------------------------------------------

    def at_type(self) -> bool:
        return self.tok.kind == "kw" and self.tok.text in _TYPE_KEYWORDS

    def type_expr(self) -> S.TypeExpr:
        pos = self.pos()
        t = self.tok
        if not self.at_type():
            raise self.error("expected a type")
        self.i += 1
        if t.text in ("int", "uint"):
            size = None
            if self.accept("("):
                if self.tok.kind == "id" and self.tok.text == "size" and self.peek().text == "=":
                    self.i += 2
                size = self.expr()
                self.expect(")")
            return S.TypeExpr(t.text, size=size, pos=pos)
        if t.text == "bool":
            return S.TypeExpr("bool", pos=pos)
        # List(type: T, size = N)
        self.expect("(")
        if self.tok.kind == "id" and self.tok.text == "type":
            self.i += 1
            self.expect(":")
        elem = self.type_expr()
        self.expect(",")
        if self.tok.kind == "id" and self.tok.text == "size":
            self.i += 1
            self.expect("=")
        size = self.expr()
        self.expect(")")
        return S.TypeExpr("list", size=size, elem=elem, pos=pos)

    def params(self) -> list[S.Param]:
        self.expect("(")
        out: list[S.Param] = []
        while not self.at(")"):
            pos = self.pos()
            ty = self.type_expr()
            name = self.ident()
            default = self.expr() if self.accept("=") else None
            out.append(S.Param(name, ty, default, pos))
            if not self.accept(","):
                break
        self.expect(")")
        return out

    def port_decls(self, terminator: str) -> list[S.PortDecl]:
        ports: list[S.PortDecl] = []
        while not self.at(terminator):
            pos = self.pos()
            ty = self.type_expr()
            ports.append(S.PortDecl(self.ident(), ty, pos))
            if not self.accept(","):
                break
        return ports

    # -- actors ------------------------------------------------------------------

    def actor(self) -> S.ActorDecl:
        pos = self.pos()
        self.expect("actor")
        name = self.ident()
        params = self.params()
        inputs = self.port_decls("==>")
        self.expect("==>")
        outputs = self.port_decls(":")
        self.expect(":")
        actor = S.ActorDecl(name, params, inputs, outputs, [], [], [], [], [], source=self.source, pos=pos)
        while not self.at("end"):
            if self.tok.kind == "eof":
                raise self.error(f"unterminated actor {name!r}")
            anns = self.annotations()
            if self.at("action") or (self.tok.kind == "id" and self.peek().text == ":" and self.peek(2).text == "action"):
                label = None
                if self.tok.kind == "id":
                    label = self.ident()
                    self.expect(":")
                act = self.action(label)
                act.annotations = anns
                actor.actions.append(act)
            elif self.at("priority"):
                self.i += 1
                while not self.at("end"):
                    chain = [self.ident()]
                    while self.accept(">"):
                        chain.append(self.ident())
                    actor.priorities.append(chain)
                    self.expect(";")
                self.expect("end")
            elif self.at("function"):
                actor.functions.append(self.function())
            elif self.at("external"):
                actor.externs.append(self.external())
            elif self.at_type():
                actor.vars.append(self.var_decl())
                self.expect(";")
            else:
                raise self.error("expected action, priority, function, external or variable declaration")
        self.expect("end")
        return actor

    def var_decl(self) -> S.VarDecl:
        pos = self.pos()
        ty = self.type_expr()
        name = self.ident()
        if self.accept(":="):
            return S.VarDecl(name, ty, self.expr(), False, pos)
        if self.accept("="):
            return S.VarDecl(name, ty, self.expr(), True, pos)
        return S.VarDecl(name, ty, None, False, pos)

    def function(self) -> S.FuncDecl:
        pos = self.pos()
        self.expect("function")
        name = self.ident()
        params = self.params()
        self.expect("-->")
        ret = self.type_expr()
        self.expect(":")
        body = self.expr()
        self.expect("end")
        return S.FuncDecl(name, params, ret, body, pos)

    def external(self) -> S.ExternDecl:
        pos = self.pos()
        self.expect("external")
        if self.accept("procedure"):
            name = self.ident()
            params = self.params()
            self.expect("end")
            return S.ExternDecl(name, params, None, pos)
        self.expect("function")
        name = self.ident()
        params = self.params()
        self.expect("-->")
        ret = self.type_expr()
        self.expect("end")
        return S.ExternDecl(name, params, ret, pos)

    def action(self, label: str | None) -> S.ActionDecl:
        pos = self.pos()
        self.expect("action")
        inputs: list[S.InputPattern] = []
        while not self.at("==>"):
            ppos = self.pos()
            port = self.ident()
            self.expect(":")
            self.expect("[")
            names: list[str] = []
            while not self.at("]"):
                names.append(self.ident())
                if not self.accept(","):
                    break
            self.expect("]")
            inputs.append(S.InputPattern(port, names, ppos))
            if not self.accept(","):
                break
        self.expect("==>")
        outputs: list[S.OutputExpr] = []
        while self.tok.kind == "id" and self.peek().text == ":":
            ppos = self.pos()
            port = self.ident()
            self.expect(":")
            self.expect("[")
            exprs: list[S.Expr] = []
            while not self.at("]"):
                exprs.append(self.expr())
                if not self.accept(","):
                    break
            self.expect("]")
            outputs.append(S.OutputExpr(port, exprs, ppos))
            if not self.accept(","):
                break
        guards: list[S.Expr] = []
        if self.accept("guard"):
            guards.append(self.expr())
            while self.accept(","):
                guards.append(self.expr())
        local_vars: list[S.VarDecl] = []
        if self.accept("var"):
            local_vars.append(self.var_decl())
            while self.accept(","):
                local_vars.append(self.var_decl())
        body: list[S.Stmt] = []
        if self.accept("do"):
            body = self.statements(("end",))
        self.expect("end")
        return S.ActionDecl(label, inputs, outputs, guards, local_vars, body, pos=pos)

    # -- statements ----------------------------------------------------------------

    def statements(self, stop: tuple[str, ...]) -> list[S.Stmt]:
        out: list[S.Stmt] = []
        while not any(self.at(s) for s in stop):
            if self.tok.kind == "eof":
                raise self.error("unexpected end of input in statement block")
            out.append(self.statement())
        return out

    def statement(self) -> S.Stmt:
        pos = self.pos()
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.statements(("else", "elsif", "end"))
            orelse: list[S.Stmt] = []
            if self.at("elsif"):
                # elsif chains desugar to nested if
                self.toks[self.i] = Token("kw", "if", self.tok.line, self.tok.col)
                orelse = [self.statement()]
                return S.If(cond, then, orelse, pos)
            if self.accept("else"):
                orelse = self.statements(("end",))
            self.expect("end")
            return S.If(cond, then, orelse, pos)
        if self.accept("while"):
            cond = self.expr()
            self.expect("do")
            body = self.statements(("end",))
            self.expect("end")
            return S.While(cond, body, pos)
        if self.accept("foreach"):
            vtype = self.type_expr() if self.at_type() else None
            var = self.ident()
            self.expect("in")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            self.expect("do")
            body = self.statements(("end",))
            self.expect("end")
            return S.Foreach(var, vtype, lo, hi, body, pos)
        name = self.ident()
        if self.accept("("):
            args = self.args(")")
            self.expect(";")
            return S.CallStmt(name, args, pos)
        index = None
        if self.accept("["):
            index = self.expr()
            self.expect("]")
        self.expect(":=")
        value = self.expr()
        self.expect(";")
        return S.Assign(name, index, value, pos)

    def args(self, close: str) -> list[S.Expr]:
        out: list[S.Expr] = []
        while not self.at(close):
            out.append(self.expr())
            if not self.accept(","):
                break
        self.expect(close)
        return out

    # -- expressions ---------------------------------------------------------------

    def expr(self) -> S.Expr:
        return self.or_expr()

    def _binary_level(self, ops: dict[str, str], sub) -> S.Expr:
        left = sub()
        while True:
            t = self.tok
            if t.kind in ("op", "kw") and t.text in ops:
                self.i += 1
                right = sub()
                left = S.Binary(ops[t.text], left, right, (t.line, t.col))
            else:
                return left

    def or_expr(self) -> S.Expr:
        return self._binary_level({"or": "or"}, self.and_expr)

    def and_expr(self) -> S.Expr:
        return self._binary_level({"and": "and"}, self.not_expr)

    def not_expr(self) -> S.Expr:
        t = self.accept("not")
        if t:
            return S.Unary("not", self.not_expr(), (t.line, t.col))
        return self.cmp_expr()

    def cmp_expr(self) -> S.Expr:
        ops = {"=": "==", "==": "==", "!=": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}
        left = self.bor_expr()
        t = self.tok
        if t.kind == "op" and t.text in ops:
            self.i += 1
            right = self.bor_expr()
            return S.Binary(ops[t.text], left, right, (t.line, t.col))
        return left

    def bor_expr(self) -> S.Expr:
        return self._binary_level({"|": "|", "bitor": "|"}, self.bxor_expr)

    def bxor_expr(self) -> S.Expr:
        return self._binary_level({"^": "^", "bitxor": "^"}, self.band_expr)

    def band_expr(self) -> S.Expr:
        return self._binary_level({"&": "&", "bitand": "&"}, self.shift_expr)

    def shift_expr(self) -> S.Expr:
        return self._binary_level({"<<": "<<", ">>": ">>"}, self.add_expr)

    def add_expr(self) -> S.Expr:
        return self._binary_level({"+": "+", "-": "-"}, self.mul_expr)

    def mul_expr(self) -> S.Expr:
        return self._binary_level({"*": "*", "/": "/", "div": "/", "mod": "%", "%": "%"}, self.unary_expr)

    def unary_expr(self) -> S.Expr:
        t = self.tok
        if self.accept("-"):
            return S.Unary("-", self.unary_expr(), (t.line, t.col))
        if self.accept("~") or self.accept("bitnot"):
            return S.Unary("~", self.unary_expr(), (t.line, t.col))
        return self.postfix_expr()

    def postfix_expr(self) -> S.Expr:
        e = self.primary()
        while self.at("["):
            t = self.expect("[")
            idx = self.expr()
            self.expect("]")
            e = S.Index(e, idx, (t.line, t.col))
        return e

    def primary(self) -> S.Expr:
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "int":
            self.i += 1
            return S.IntLit(t.value, pos)
        if self.accept("true"):
            return S.BoolLit(True, pos)
        if self.accept("false"):
            return S.BoolLit(False, pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("["):
            return S.ListLit(self.args("]"), pos)
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            a = self.expr()
            self.expect("else")
            b = self.expr()
            self.expect("end")
            return S.IfExpr(cond, a, b, pos)
        if t.kind == "id":
            self.i += 1
            if self.accept("("):
                return S.Call(t.text, self.args(")"), pos)
            return S.Name(t.text, pos)
        raise self.error("expected expression")

    # -- networks ------------------------------------------------------------------

    def network(self) -> S.NetworkDecl:
        pos = self.pos()
        self.expect("network")
        name = self.ident()
        params = self.params()
        inputs = self.port_decls("==>")
        self.expect("==>")
        outputs = self.port_decls(":")
        self.expect(":")
        instances: list[S.InstanceDecl] = []
        connections: list[S.ConnectionDecl] = []
        if self.accept("entities"):
            while self.tok.kind == "id":
                ipos = self.pos()
                iname = self.ident()
                self.expect("=")
                entity = self.ident()
                self.expect("(")
                args: dict[str, S.Expr] = {}
                while not self.at(")"):
                    apos = self.tok
                    aname = self.ident()
                    self.expect("=")
                    if aname in args:
                        raise self.error(f"duplicate argument {aname!r}", apos)
                    args[aname] = self.expr()
                    if not self.accept(","):
                        break
                self.expect(")")
                self.expect(";")
                instances.append(S.InstanceDecl(iname, entity, args, ipos))
        if self.accept("structure"):
            while self.tok.kind == "id":
                cpos = self.pos()
                src = self.ident()
                self.expect(".")
                sport = self.ident()
                self.expect("-->")
                dst = self.ident()
                self.expect(".")
                dport = self.ident()
                attrs: dict[str, S.Expr] = {}
                if self.accept("{"):
                    while not self.at("}"):
                        key = self.ident()
                        self.expect("=")
                        attrs[key] = self.expr()
                        self.expect(";")
                    self.expect("}")
                self.expect(";")
                connections.append(S.ConnectionDecl(src, sport, dst, dport, attrs, cpos))
        self.expect("end")
        return S.NetworkDecl(name, params, inputs, outputs, instances, connections, self.source, pos)


def parse_source(text: str, source: str = "<input>") -> S.CompilationUnit:
    return Parser(text, source).parse_unit()
