"""Syntax tree for the CAL subset.

Nodes carry a ``pos`` of ``(line, col)`` for diagnostics; everything else is
plain data so trees can be compared and pickled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Pos = tuple[int, int]


# -- types -------------------------------------------------------------------


@dataclass
class TypeExpr:
    kind: str  # "int", "uint", "bool", "list"
    size: "Expr | None" = None
    elem: "TypeExpr | None" = None
    pos: Pos = (0, 0)


# -- expressions ---------------------------------------------------------------


class Expr:
    pos: Pos


@dataclass
class IntLit(Expr):
    value: int
    pos: Pos = (0, 0)


@dataclass
class BoolLit(Expr):
    value: bool
    pos: Pos = (0, 0)


@dataclass
class Name(Expr):
    id: str
    pos: Pos = (0, 0)


@dataclass
class Index(Expr):
    base: Expr
    index: Expr
    pos: Pos = (0, 0)


@dataclass
class Call(Expr):
    func: str
    args: list[Expr]
    pos: Pos = (0, 0)


@dataclass
class Unary(Expr):
    op: str
    operand: Expr
    pos: Pos = (0, 0)


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    pos: Pos = (0, 0)


@dataclass
class IfExpr(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    pos: Pos = (0, 0)


@dataclass
class ListLit(Expr):
    items: list[Expr]
    pos: Pos = (0, 0)


# -- statements ----------------------------------------------------------------


class Stmt:
    pos: Pos


@dataclass
class Assign(Stmt):
    target: str
    index: Expr | None
    value: Expr
    pos: Pos = (0, 0)


@dataclass
class CallStmt(Stmt):
    func: str
    args: list[Expr]
    pos: Pos = (0, 0)


@dataclass
class If(Stmt):
    cond: Expr
    then: list[Stmt]
    orelse: list[Stmt]
    pos: Pos = (0, 0)


@dataclass
class While(Stmt):
    cond: Expr
    body: list[Stmt]
    pos: Pos = (0, 0)


@dataclass
class Foreach(Stmt):
    var: str
    var_type: TypeExpr | None
    lo: Expr
    hi: Expr
    body: list[Stmt]
    pos: Pos = (0, 0)


# -- declarations --------------------------------------------------------------


@dataclass
class Annotation:
    name: str
    args: list[int] = field(default_factory=list)


@dataclass
class VarDecl:
    name: str
    type: TypeExpr
    init: Expr | None
    constant: bool = False
    pos: Pos = (0, 0)


@dataclass
class Param:
    name: str
    type: TypeExpr
    default: Expr | None = None
    pos: Pos = (0, 0)


@dataclass
class PortDecl:
    name: str
    type: TypeExpr
    pos: Pos = (0, 0)


@dataclass
class FuncDecl:
    name: str
    params: list[Param]
    ret: TypeExpr
    body: Expr
    pos: Pos = (0, 0)


@dataclass
class ExternDecl:
    name: str
    params: list[Param]
    ret: TypeExpr | None  # None for procedures
    pos: Pos = (0, 0)


@dataclass
class InputPattern:
    port: str
    vars: list[str]
    pos: Pos = (0, 0)


@dataclass
class OutputExpr:
    port: str
    exprs: list[Expr]
    pos: Pos = (0, 0)


@dataclass
class ActionDecl:
    label: str | None
    inputs: list[InputPattern]
    outputs: list[OutputExpr]
    guards: list[Expr]
    locals: list[VarDecl]
    body: list[Stmt]
    annotations: list[Annotation] = field(default_factory=list)
    pos: Pos = (0, 0)


@dataclass
class ActorDecl:
    name: str
    params: list[Param]
    inputs: list[PortDecl]
    outputs: list[PortDecl]
    vars: list[VarDecl]
    actions: list[ActionDecl]
    priorities: list[list[str]]
    functions: list[FuncDecl]
    externs: list[ExternDecl]
    annotations: list[Annotation] = field(default_factory=list)
    source: str = "<input>"
    pos: Pos = (0, 0)


@dataclass
class InstanceDecl:
    name: str
    entity: str
    args: dict[str, Expr]
    pos: Pos = (0, 0)


@dataclass
class ConnectionDecl:
    src: str
    src_port: str
    dst: str
    dst_port: str
    attrs: dict[str, Expr] = field(default_factory=dict)
    pos: Pos = (0, 0)


@dataclass
class NetworkDecl:
    name: str
    params: list[Param]
    inputs: list[PortDecl]
    outputs: list[PortDecl]
    instances: list[InstanceDecl]
    connections: list[ConnectionDecl]
    source: str = "<input>"
    pos: Pos = (0, 0)


@dataclass
class CompilationUnit:
    actors: list[ActorDecl] = field(default_factory=list)
    networks: list[NetworkDecl] = field(default_factory=list)
