"""Plain-text LP format (the CPLEX dialect understood by most solvers).

Variable names carry their stage and symbol, e.g. ``h(i3,l6)`` or
``s(k0,m2,j4)``, so a dump can be cross-checked by hand or in an external
solver. The objective constant is written as a term on a fixed variable
``__const`` because the format has no portable constant syntax.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .model import EQ, GE, LE, ModelBuilder, MilpModel

_CONST = "__const"
_SENSE_OUT = {LE: "<=", GE: ">=", EQ: "="}
_TOKEN = re.compile(r"([+-])\s*([0-9.eE+-]+)?\s*([A-Za-z_][\w().,\[\]{}#~&^@!:;'|-]*)")


def _num(v: float) -> str:
    return repr(float(v))


def _terms(pairs) -> str:
    parts = []
    for name, a in pairs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {name}")
    return " ".join(parts) if parts else "0 " + _CONST


def write_lp(model: MilpModel, path=None) -> str:
    names = model.var_names
    lines = ["\\ stage/symbol metadata: " + ", ".join(
        sorted({f"{m.symbol}@{m.stage}" for m in model.meta.values()}))]
    lines.append("Minimize")
    obj = [(names[j], model.obj[j]) for j in np.flatnonzero(model.obj)]
    if model.obj_const:
        obj.append((_CONST, model.obj_const))
    lines.append(" obj: " + _terms(obj))
    lines.append("Subject To")
    A = model.A.tocsr()
    for i, rname in enumerate(model.row_names):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        pairs = [(names[j], a) for j, a in zip(A.indices[lo:hi], A.data[lo:hi])]
        lines.append(f" {rname}: {_terms(pairs)} {_SENSE_OUT[model.sense[i]]} {_num(model.rhs[i])}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lb, ub = model.lb[j], model.ub[j]
        if lb == ub:
            lines.append(f" {name} = {_num(lb)}")
        elif math.isinf(lb) and math.isinf(ub):
            lines.append(f" {name} free")
        else:
            left = "-inf" if math.isinf(lb) else _num(lb)
            right = "+inf" if math.isinf(ub) else _num(ub)
            lines.append(f" {left} <= {name} <= {right}")
    if model.obj_const:
        lines.append(f" {_CONST} = 1")
    ints = [names[j] for j in np.flatnonzero(model.integer)]
    if ints:
        lines.append("General")
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_lp(text: str) -> MilpModel:
    """Parse the subset of LP format that ``write_lp`` emits."""
    section = None
    obj_terms: list[tuple[str, float]] = []
    rows: list[tuple[str, list, str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    integers: list[str] = []
    order: list[str] = []
    declared: list[str] = []

    def note(name):
        order.append(name)

    heads = {"minimize": "obj", "subject to": "rows", "bounds": "bounds", "general": "int",
             "generals": "int", "end": "end"}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        if line.lower() in heads:
            section = heads[line.lower()]
            continue
        if section == "obj":
            _, expr = line.split(":", 1)
            for name, a in _parse_expr(expr):
                note(name)
                obj_terms.append((name, a))
        elif section == "rows":
            rname, rest = line.split(":", 1)
            m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)\s*$", rest)
            if not m:
                raise ValueError(f"cannot parse row {line!r}")
            terms = _parse_expr(m.group(1))
            for name, _ in terms:
                note(name)
            rows.append((rname.strip(), terms, {"<=": LE, ">=": GE, "=": EQ}[m.group(2)],
                         float(m.group(3))))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1] == "free":
                declared.append(parts[0])
                bounds[parts[0]] = (-math.inf, math.inf)
            elif len(parts) == 3 and parts[1] == "=":
                declared.append(parts[0])
                v = float(parts[2])
                bounds[parts[0]] = (v, v)
            elif len(parts) == 5:
                declared.append(parts[2])
                bounds[parts[2]] = (float(parts[0]), float(parts[4]))
            else:
                raise ValueError(f"cannot parse bound {line!r}")
        elif section == "int":
            integers.extend(line.split())

    const = 0.0
    mb = ModelBuilder()
    ints = set(integers)
    # the Bounds section lists every variable in model order
    for name in dict.fromkeys(declared + order):
        if name == _CONST:
            continue
        lb, ub = bounds.get(name, (0.0, math.inf))
        stage, symbol, index = _meta_from_name(name)
        mb.add_var(name, lb, ub, integer=name in ints, stage=stage, symbol=symbol, index=index)
    for name, a in obj_terms:
        if name == _CONST:
            const += a
        else:
            mb.add_obj(mb.var(name), a)
    for rname, terms, sense, rhs in rows:
        mb.add_row(rname, [(mb.var(n), a) for n, a in terms if n != _CONST], sense, rhs)
    mb.obj_const = const
    return mb.build()


def _parse_expr(expr: str) -> list[tuple[str, float]]:
    expr = expr.strip()
    if not expr.startswith(("+", "-")):
        expr = "+ " + expr
    out = []
    pos = 0
    for m in _TOKEN.finditer(expr):
        if expr[pos:m.start()].strip():
            raise ValueError(f"cannot parse expression near {expr[pos:m.start()]!r}")
        coef = float(m.group(2)) if m.group(2) else 1.0
        out.append((m.group(3), -coef if m.group(1) == "-" else coef))
        pos = m.end()
    if expr[pos:].strip():
        raise ValueError(f"trailing text {expr[pos:]!r}")
    return out


_STAGE_OF = {"h": 1, "n": 1, "t": 2, "p": 2}


def _meta_from_name(name: str):
    m = re.fullmatch(r"([A-Za-z_]+)(?:\((.*)\))?", name)
    if not m:
        return 0, name, ()
    symbol = m.group(1)
    index = ()
    if m.group(2):
        index = tuple(int(re.sub(r"^[a-z]+", "", part)) for part in m.group(2).split(","))
    return _STAGE_OF.get(symbol, 3), symbol, index
