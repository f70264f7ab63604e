"""CPLEX-LP encoding of the model, an LP-file reader, and a fixed-point evaluator.

``emit_lp`` writes the mixed integer program; ``parse_lp`` reads the dialect
back; ``evaluate_lp`` computes the objective of a parsed program once every
placement boolean is fixed, by propagating the constraints.  Because the
program only minimizes sums and maxima, the least value satisfying a
variable's lower bounds is its optimal value.  The evaluator never looks at the
model object, so it checks the encoder independently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from calflow.errors import PartitionError
from calflow.partitioner.model import ACCEL, MilpInstance

# A linear expression: (coefficients, constant)
Expr = tuple[dict[str, float], float]

ZERO: Expr = ({}, 0.0)


def _fmt(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


class _Writer:
    def __init__(self):
        self.rows: list[str] = []
        self.binaries: list[str] = []
        self.aux = 0

    def row(self, name: str, coeffs: Mapping[str, float], sense: str, rhs: float) -> None:
        terms = []
        for v, c in coeffs.items():
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            terms.append(f"{sign} {v}" if mag == 1 else f"{sign} {_fmt(mag)} {v}")
        if not terms:
            return
        body = " ".join(terms)
        body = body[2:] if body.startswith("+ ") else body
        self.rows.append(f" {name}: {body} {sense} {_fmt(rhs)}")

    def new_bool(self, prefix: str) -> str:
        self.aux += 1
        name = f"{prefix}{self.aux}"
        self.binaries.append(name)
        return name

    def conj(self, a: Expr, b: Expr, tag: str) -> Expr:
        """y = a AND b for 0/1-valued expressions."""
        if (not a[0] and a[1] == 0) or (not b[0] and b[1] == 0):
            return ZERO
        if not a[0]:  # constant 1
            return b
        if not b[0]:
            return a
        y = self.new_bool("y")
        self._le(f"c{self.aux}a", {y: 1.0}, a)
        self._le(f"c{self.aux}b", {y: 1.0}, b)
        # y >= a + b - 1
        co = {y: 1.0}
        for e in (a, b):
            for v, c in e[0].items():
                co[v] = co.get(v, 0.0) - c
        self.row(f"c{self.aux}c", co, ">=", a[1] + b[1] - 1.0)
        return ({y: 1.0}, 0.0)

    def disj(self, parts: list[Expr], tag: str) -> Expr:
        """z = OR(parts) for 0/1-valued expressions."""
        parts = [p for p in parts if p[0] or p[1] != 0]
        if not parts:
            return ZERO
        if len(parts) == 1:
            return parts[0]
        z = self.new_bool("z")
        for i, p in enumerate(parts):
            co = {z: 1.0}
            for v, c in p[0].items():
                co[v] = co.get(v, 0.0) - c
            self.row(f"o{self.aux}_{i}", co, ">=", p[1])
        co = {z: 1.0}
        const = 0.0
        for p in parts:
            for v, c in p[0].items():
                co[v] = co.get(v, 0.0) - c
            const += p[1]
        self.row(f"o{self.aux}_s", co, "<=", const)
        return ({z: 1.0}, 0.0)

    def _le(self, name: str, lhs: dict[str, float], e: Expr) -> None:
        co = dict(lhs)
        for v, c in e[0].items():
            co[v] = co.get(v, 0.0) - c
        self.row(name, co, "<=", e[1])


def emit_lp(inst: MilpInstance) -> str:
    """The instance as a CPLEX-LP program minimizing ``Texec``."""
    w = _Writer()
    parts = inst.partitions
    threads = inst.threads
    acc = ACCEL if inst.use_accel else None
    dvar: dict[tuple[str, str], str] = {}
    for i, a in enumerate(inst.actors):
        for j, p in enumerate(parts):
            if (a, p) not in inst.forbidden:
                dvar[(a, p)] = f"d_{i}_{j}"

    def d(a: str, p: str | None) -> Expr:
        if p is None or (a, p) not in dvar:
            return ZERO
        return ({dvar[(a, p)]: 1.0}, 0.0)

    def neg(e: Expr) -> Expr:
        return ({v: -c for v, c in e[0].items()}, 1.0 - e[1])

    header = ["\\ placement variables d_<actor>_<partition>"]
    header += [f"\\   {v}: {a} -> {p}" for (a, p), v in dvar.items()]

    for i, a in enumerate(inst.actors):
        w.row(f"assign_{i}", {dvar[(a, p)]: 1.0 for p in parts if (a, p) in dvar}, "=", 1.0)

    for j, p in enumerate(threads):
        co = {f"Tp_{j}": 1.0}
        for a in inst.actors:
            if (a, p) in dvar:
                co[dvar[(a, p)]] = co.get(dvar[(a, p)], 0.0) - inst.exec[(a, p)]
        w.row(f"thread_{j}", co, "=", 0.0)
    if acc:
        w.row("hw", {"Thw": 1.0}, ">=", 0.0)
        for i, a in enumerate(inst.actors):
            if (a, acc) in dvar:
                w.row(f"hw_{i}", {"Thw": 1.0, dvar[(a, acc)]: -inst.exec[(a, acc)]}, ">=", 0.0)

    plink = {"Tplink": 1.0, "Thw": -1.0}
    crossing: dict[str, float] = {}
    crossing_const = 0.0
    intra = {j: {f"ti_{j}": 1.0} for j in range(len(threads))}
    inter = {"Tinter": 1.0}
    inter_const = 0.0

    def add(target: dict, e: Expr, k: float) -> float:
        for v, c in e[0].items():
            target[v] = target.get(v, 0.0) - k * c
        return k * e[1]

    const_plink = 0.0
    const_intra = {j: 0.0 for j in range(len(threads))}
    for ci, ln in enumerate(inst.links):
        s, t = ln.src, ln.dst
        if acc:
            wr = w.conj(neg(d(s, acc)), d(t, acc), f"w{ci}")
            rd = w.conj(d(s, acc), neg(d(t, acc)), f"r{ci}")
            const_plink += add(plink, wr, ln.tau_w) + add(plink, rd, ln.tau_r)
            for e in (wr, rd):
                for v, c in e[0].items():
                    crossing[v] = crossing.get(v, 0.0) + c
                crossing_const += e[1]
        for j, p in enumerate(threads):
            y = w.conj(d(s, p), d(t, p), f"i{ci}_{j}")
            const_intra[j] += add(intra[j], y, ln.tau_intra)
        if acc:
            z = w.disj([w.conj(d(s, "p1"), d(t, acc), f"pa{ci}"), w.conj(d(s, acc), d(t, "p1"), f"ap{ci}")],
                       f"pl{ci}")
            const_intra[0] += add(intra[0], z, ln.tau_intra)
        others = threads[1:]
        if others:
            host_s = w.disj([d(s, "p1"), d(s, acc)], f"hs{ci}") if acc else d(s, "p1")
            host_t = w.disj([d(t, "p1"), d(t, acc)], f"ht{ci}") if acc else d(t, "p1")
        for q in others:
            v = w.disj([w.conj(host_s, d(t, q), f"x{ci}{q}a"), w.conj(d(s, q), host_t, f"x{ci}{q}b")], f"x{ci}{q}")
            inter_const += add(inter, v, ln.tau_inter)
        for p in others:
            for q in others:
                if p == q:
                    continue
                g = w.disj([w.conj(d(s, p), d(t, q), f"g{ci}{p}{q}a"), w.conj(d(s, q), d(t, p), f"g{ci}{p}{q}b")],
                           f"g{ci}{p}{q}")
                inter_const += add(inter, g, ln.tau_inter)

    if acc:
        w.row("plink", plink, "=", const_plink)
    for j in range(len(threads)):
        w.row(f"intra_{j}", intra[j], "=", const_intra[j])
        w.row(f"intramax_{j}", {"Tintra": 1.0, f"ti_{j}": -1.0}, ">=", 0.0)
    w.row("inter", inter, "=", inter_const)
    for j in range(len(threads)):
        w.row(f"max_{j}", {"M": 1.0, f"Tp_{j}": -1.0}, ">=", 0.0)
    if acc:
        w.row("max_plink", {"M": 1.0, "Tplink": -1.0}, ">=", 0.0)
    w.row("texec", {"Texec": 1.0, "M": -1.0, "Tintra": -1.0, "Tinter": -1.0}, "=", 0.0)
    if inst.m is not None and acc:
        w.row("crossings", crossing, "<=", inst.m - crossing_const)

    out = header + ["Minimize", " obj: Texec", "Subject To"] + w.rows
    out += ["Binaries"]
    binaries = list(dvar.values()) + w.binaries
    for k in range(0, len(binaries), 8):
        out.append(" " + " ".join(binaries[k:k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


# -- reading ----------------------------------------------------------------------------


@dataclass
class LpConstraint:
    name: str
    coeffs: dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass
class LpProblem:
    objective: dict[str, float]
    constraints: list[LpConstraint]
    binaries: set[str]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    sense: str = "min"

    @property
    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for v in self.objective:
            seen[v] = None
        for c in self.constraints:
            for v in c.coeffs:
                seen[v] = None
        for v in sorted(self.binaries):
            seen[v] = None
        return list(seen)


_TERM = re.compile(r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][\w.]*)")
_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _parse_expr(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    pos = 0
    text = text.strip()
    if text == "0":
        return out
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos:
            raise PartitionError(f"LP syntax error near {text[pos:pos + 20]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        out[m.group(3)] = out.get(m.group(3), 0.0) + sign * coef
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return out


def _statements(lines: list[str]) -> Iterator[str]:
    """Join continuation lines: a statement ends where the next ``name:`` starts."""
    buf = ""
    for ln in lines:
        if re.match(r"^\s*[A-Za-z_][\w.]*\s*:", ln) and buf:
            yield buf
            buf = ""
        buf += " " + ln.strip()
    if buf.strip():
        yield buf


def parse_lp(text: str) -> LpProblem:
    sections: dict[str, list[str]] = {}
    current = None
    names = {"minimize": "obj", "minimum": "obj", "min": "obj", "maximize": "max", "maximum": "max",
             "max": "max", "subject to": "st", "such that": "st", "st": "st", "s.t.": "st", "bounds": "bounds",
             "binaries": "bin", "binary": "bin", "bin": "bin", "generals": "gen", "general": "gen", "end": "end"}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in names:
            current = names[key]
            if current == "max":
                raise PartitionError("maximization objectives are not supported")
            sections.setdefault(current, [])
            continue
        if current is None:
            raise PartitionError(f"LP content outside a section: {line.strip()!r}")
        if current == "end":
            raise PartitionError("content after End")
        sections[current].append(line)
    if "obj" not in sections or "st" not in sections:
        raise PartitionError("LP file needs Minimize and Subject To sections")
    obj_text = " ".join(s.strip() for s in sections["obj"])
    obj_text = obj_text.split(":", 1)[1] if ":" in obj_text else obj_text
    objective = _parse_expr(obj_text)
    constraints = []
    for k, stmt in enumerate(_statements(sections["st"])):
        stmt = stmt.strip()
        name = f"r{k}"
        m = re.match(r"^([A-Za-z_][\w.]*)\s*:\s*(.*)$", stmt)
        if m:
            name, stmt = m.group(1), m.group(2)
        m = re.match(r"^(.*?)(<=|>=|=<|=>|=|<|>)\s*(\S+)\s*$", stmt)
        if m is None or not _NUM.match(m.group(3)):
            raise PartitionError(f"bad constraint {name}: {stmt!r}")
        sense = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(m.group(2), m.group(2))
        constraints.append(LpConstraint(name, _parse_expr(m.group(1)), sense, float(m.group(3))))
    binaries: set[str] = set()
    for ln in sections.get("bin", []):
        binaries.update(ln.split())
    bounds: dict[str, tuple[float, float]] = {}
    for ln in sections.get("bounds", []):
        m = re.match(r"^\s*(\S+)\s*<=\s*([A-Za-z_][\w.]*)\s*<=\s*(\S+)\s*$", ln)
        if m:
            bounds[m.group(2)] = (float(m.group(1)), float(m.group(3)))
            continue
        m = re.match(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(\S+)\s*$", ln)
        if m:
            bounds[m.group(1)] = (float(m.group(2)), float(m.group(2)))
            continue
        raise PartitionError(f"unsupported bound: {ln.strip()!r}")
    return LpProblem(objective, constraints, binaries, bounds)


def placement_variables(text: str) -> dict[str, tuple[str, str]]:
    """``d_i_j -> (actor, partition)`` from the header comments of an emitted file."""
    out = {}
    for m in re.finditer(r"^\\\s+(d_\d+_\d+): (\S+) -> (\S+)$", text, re.M):
        out[m.group(1)] = (m.group(2), m.group(3))
    return out


def fix_assignment(text: str, assignment: Mapping[str, str]) -> dict[str, float]:
    """Values of every placement boolean for an actor -> partition assignment."""
    return {v: 1.0 if assignment.get(a) == p else 0.0 for v, (a, p) in placement_variables(text).items()}


# -- evaluation -------------------------------------------------------------------------------


def evaluate_lp(problem: LpProblem, fixed: Mapping[str, float], tol: float = 1e-9) -> float:
    """Objective of ``problem`` with the given booleans fixed, by propagation.

    Auxiliary booleans are pinned once their bounds exclude one value;
    continuous variables take the largest lower bound once every constraint
    bounding them from below is otherwise known.  All constraints are checked
    at the end.
    """
    val: dict[str, float] = dict(fixed)
    variables = problem.variables
    lb: dict[str, float] = {v: 0.0 for v in variables}
    ub: dict[str, float] = {v: (1.0 if v in problem.binaries else float("inf")) for v in variables}
    for v, (lo, hi) in problem.bounds.items():
        lb[v], ub[v] = lo, hi
    uses: dict[str, list[LpConstraint]] = {v: [] for v in variables}
    for c in problem.constraints:
        for v in c.coeffs:
            uses[v].append(c)

    def lower_bound_rows(v: str) -> list[LpConstraint]:
        rows = []
        for c in uses[v]:
            a = c.coeffs[v]
            if c.sense == ">=" and a > 0 or c.sense == "<=" and a < 0:
                rows.append(c)
        return rows

    changed = True
    while changed:
        changed = False
        for c in problem.constraints:
            unknown = [v for v in c.coeffs if v not in val]
            if len(unknown) != 1:
                continue
            v = unknown[0]
            a = c.coeffs[v]
            r = (c.rhs - sum(k * val[u] for u, k in c.coeffs.items() if u != v)) / a
            if c.sense == "=":
                val[v] = r
                changed = True
                continue
            is_lower = (c.sense == ">=") == (a > 0)
            if is_lower:
                lb[v] = max(lb[v], r)
            else:
                ub[v] = min(ub[v], r)
            if v in problem.binaries:
                if lb[v] > tol:
                    val[v] = 1.0
                    changed = True
                elif ub[v] < 1 - tol:
                    val[v] = 0.0
                    changed = True
        if changed:
            continue
        for v in variables:
            if v in val or v in problem.binaries:
                continue
            rows = lower_bound_rows(v)
            pending_eq = any(c.sense == "=" and any(u not in val for u in c.coeffs if u != v) for c in uses[v])
            if not rows and pending_eq:
                continue
            if all(all(u in val for u in c.coeffs if u != v) for c in rows):
                bound = lb[v]
                for c in rows:
                    a = c.coeffs[v]
                    bound = max(bound, (c.rhs - sum(k * val[u] for u, k in c.coeffs.items() if u != v)) / a)
                val[v] = bound
                changed = True
                break
    missing = [v for v in variables if v not in val]
    if missing:
        raise PartitionError(f"could not determine {missing[:5]} from the fixed booleans")
    for c in problem.constraints:
        lhs = sum(k * val[v] for v, k in c.coeffs.items())
        slack = tol * max(1.0, abs(c.rhs), abs(lhs))
        ok = (abs(lhs - c.rhs) <= slack if c.sense == "=" else
              lhs <= c.rhs + slack if c.sense == "<=" else lhs >= c.rhs - slack)
        if not ok:
            raise PartitionError(f"constraint {c.name} violated at the fixed point")
    return sum(k * val[v] for v, k in problem.objective.items())


# -- scipy cross-check ---------------------------------------------------------------------------


def to_matrices(problem: LpProblem):
    """``(variables, c, A, lower, upper, var_lb, var_ub, integrality)`` for scipy."""
    variables = problem.variables
    index = {v: i for i, v in enumerate(variables)}
    n = len(variables)
    c = np.zeros(n)
    for v, k in problem.objective.items():
        c[index[v]] = k
    A = np.zeros((len(problem.constraints), n))
    lo = np.full(len(problem.constraints), -np.inf)
    hi = np.full(len(problem.constraints), np.inf)
    for r, con in enumerate(problem.constraints):
        for v, k in con.coeffs.items():
            A[r, index[v]] = k
        if con.sense in ("<=", "="):
            hi[r] = con.rhs
        if con.sense in (">=", "="):
            lo[r] = con.rhs
    vlb = np.zeros(n)
    vub = np.array([1.0 if v in problem.binaries else np.inf for v in variables])
    for v, (a, b) in problem.bounds.items():
        vlb[index[v]], vub[index[v]] = a, b
    integrality = np.array([1 if v in problem.binaries else 0 for v in variables])
    return variables, c, A, lo, hi, vlb, vub, integrality


def solve_with_scipy(problem: LpProblem, fixed: Mapping[str, float] | None = None,
                     time_limit: float | None = None) -> tuple[float, dict[str, float]]:
    """Solve the program (optionally with some booleans fixed) using HiGHS."""
    variables, c, A, lo, hi, vlb, vub, integ = to_matrices(problem)
    for v, x in (fixed or {}).items():
        i = variables.index(v)
        vlb[i] = vub[i] = x
    opts = {"disp": False, "mip_rel_gap": 0.0}
    if time_limit is not None:
        opts["time_limit"] = time_limit
    res = milp(c, constraints=LinearConstraint(A, lo, hi), bounds=Bounds(vlb, vub), integrality=integ,
               options=opts)
    if res.x is None:
        raise PartitionError(f"scipy solve failed: {res.message}")
    return float(res.fun), dict(zip(variables, res.x))
