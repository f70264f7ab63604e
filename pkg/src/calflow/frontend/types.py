"""Resolved value types: bounded integers, booleans and fixed-size lists."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class IntType:
    width: int = 32
    signed: bool = True

    def __post_init__(self):
        if not 1 <= self.width <= 64:
            raise ValueError(f"integer width must be in 1..64, got {self.width}")

    def wrap(self, v):
        if isinstance(v, bool):
            v = int(v)
        mask = (1 << self.width) - 1
        v &= mask
        if self.signed and v >> (self.width - 1):
            v -= 1 << self.width
        return v

    @property
    def bits(self) -> int:
        return self.width

    def __str__(self) -> str:
        return f"{'int' if self.signed else 'uint'}({self.width})"


@dataclass(frozen=True)
class BoolType:
    def wrap(self, v):
        return bool(v)

    @property
    def bits(self) -> int:
        return 1

    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class ListType:
    elem: "CalType"
    size: int

    def wrap(self, v):
        if len(v) != self.size:
            raise ValueError(f"list of length {len(v)} does not fit {self}")
        return [self.elem.wrap(x) for x in v]

    @property
    def bits(self) -> int:
        return self.elem.bits * self.size

    def __str__(self) -> str:
        return f"List({self.elem}, {self.size})"


CalType = IntType | BoolType | ListType


def token_bytes(t: CalType) -> int:
    """Bytes one token of type ``t`` occupies in a host buffer (power of two for scalars)."""
    if isinstance(t, ListType):
        return token_bytes(t.elem) * t.size
    nbytes = max(1, (t.bits + 7) // 8)
    p = 1
    while p < nbytes:
        p *= 2
    return p


def default_value(t: CalType):
    if isinstance(t, ListType):
        return [default_value(t.elem) for _ in range(t.size)]
    if isinstance(t, BoolType):
        return False
    return 0


def parse_type_name(text: str) -> CalType:
    """Inverse of ``str(t)`` for serialized bundles."""
    text = text.strip()
    if text == "bool":
        return BoolType()
    if text.startswith("List(") and text.endswith(")"):
        inner = text[5:-1]
        elem, _, size = inner.rpartition(",")
        return ListType(parse_type_name(elem), int(size))
    for prefix, signed in (("int(", True), ("uint(", False)):
        if text.startswith(prefix) and text.endswith(")"):
            return IntType(int(text[len(prefix):-1]), signed)
    raise ValueError(f"unknown type {text!r}")
