"""Tokenizer for the CAL subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from calflow.errors import CalSyntaxError

KEYWORDS = frozenset(
    """
    actor network action end guard do var priority function external procedure
    entities structure if then else elsif while foreach in and or not true false
    int uint bool List div mod bitand bitor bitxor bitnot
    """.split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<unterminated>/\*)
  | (?P<hex>0[xX][0-9a-fA-F_]+)
  | (?P<int>[0-9][0-9_]*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==>|-->|\.\.|:=|==|!=|<=|>=|<<|>>|[-+*/%<>=()\[\]{},;:.@&|^~])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # "int", "id", "kw", "op", "eof"
    text: str
    line: int
    col: int
    value: int | None = None


def tokenize(text: str, source: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise CalSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source)
        kind = m.lastgroup
        lexeme = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "bcomment":
            newlines = lexeme.count("\n")
            if newlines:
                line += newlines
                line_start = pos + lexeme.rfind("\n") + 1
        elif kind == "unterminated":
            raise CalSyntaxError("unterminated block comment", line, col, source)
        elif kind in ("ws", "lcomment"):
            pass
        elif kind == "hex":
            tokens.append(Token("int", lexeme, line, col, int(lexeme.replace("_", ""), 16)))
        elif kind == "int":
            tokens.append(Token("int", lexeme, line, col, int(lexeme.replace("_", ""))))
        elif kind == "id":
            tokens.append(Token("kw" if lexeme in KEYWORDS else "id", lexeme, line, col))
        else:
            tokens.append(Token("op", lexeme, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens
