"""Solver-neutral sparse MILP container and an incremental builder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)


class VarMeta(NamedTuple):
    stage: int
    symbol: str
    index: tuple


@dataclass(frozen=True, eq=False)
class MilpModel:
    """min c.x + const  s.t.  A x (sense) rhs,  lb <= x <= ub,  x_j integer where marked.

    Arrays are treated as read-only; the solvers copy bounds before
    modifying them.
    """

    var_names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    obj: np.ndarray
    obj_const: float
    A: sp.csr_matrix
    sense: tuple[str, ...]
    rhs: np.ndarray
    row_names: tuple[str, ...]
    meta: Mapping[str, VarMeta] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def index_of(self, name: str) -> int:
        try:
            return self._name_index[name]
        except AttributeError:
            object.__setattr__(self, "_name_index", {n: j for j, n in enumerate(self.var_names)})
            return self._name_index[name]

    def relaxed(self) -> "MilpModel":
        """Copy with every integrality mark dropped."""
        return MilpModel(self.var_names, self.lb, self.ub, np.zeros_like(self.integer), self.obj,
                         self.obj_const, self.A, self.sense, self.rhs, self.row_names, self.meta)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj @ x) + self.obj_const

    def row_violation(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0) of the constraint rows at ``x``."""
        act = self.A @ x
        viol = np.zeros(self.num_rows)
        for i, s in enumerate(self.sense):
            d = act[i] - self.rhs[i]
            if s == LE:
                viol[i] = max(d, 0.0)
            elif s == GE:
                viol[i] = max(-d, 0.0)
            else:
                viol[i] = abs(d)
        return viol

    def bound_violation(self, x: np.ndarray) -> float:
        return float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))

    def tally(self) -> dict[str, int]:
        """Variable count per symbol, from the metadata."""
        out: dict[str, int] = {}
        for name in self.var_names:
            sym = self.meta[name].symbol if name in self.meta else "?"
            out[sym] = out.get(sym, 0) + 1
        return out

    def check(self) -> list[str]:
        """Structural invariants: unique names, metadata coverage, shapes."""
        problems = []
        if len(set(self.var_names)) != len(self.var_names):
            problems.append("duplicate variable names")
        if len(set(self.row_names)) != len(self.row_names):
            problems.append("duplicate row names")
        missing = [n for n in self.var_names if n not in self.meta]
        if missing:
            problems.append(f"{len(missing)} variables lack metadata (e.g. {missing[0]})")
        if self.A.shape != (self.num_rows, self.num_vars):
            problems.append(f"matrix shape {self.A.shape} != ({self.num_rows}, {self.num_vars})")
        if np.any(self.lb > self.ub):
            problems.append("lower bound above upper bound")
        return problems


class ModelBuilder:
    """Accumulates variables and rows, then freezes them into a MilpModel."""

    def __init__(self):
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._int: list[bool] = []
        self._obj: list[float] = []
        self._meta: dict[str, VarMeta] = {}
        self._index: dict[str, int] = {}
        self._rows: list[tuple[str, str, float]] = []
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._vals: list[float] = []
        self.obj_const = 0.0

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf, integer: bool = False,
                obj: float = 0.0, stage: int = 0, symbol: str = "", index: tuple = ()) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        j = len(self._names)
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._int.append(bool(integer))
        self._obj.append(float(obj))
        self._meta[name] = VarMeta(stage, symbol or name, tuple(index))
        self._index[name] = j
        return j

    def var(self, name: str) -> int:
        return self._index[name]

    def add_obj(self, j: int, coef: float) -> None:
        self._obj[j] += coef

    def add_row(self, name: str, terms: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        i = len(self._rows)
        merged: dict[int, float] = {}
        for j, a in terms:
            merged[j] = merged.get(j, 0.0) + a
        for j, a in merged.items():
            if a != 0.0:
                self._ri.append(i)
                self._ci.append(j)
                self._vals.append(a)
        self._rows.append((name, sense, float(rhs)))
        return i

    def build(self) -> MilpModel:
        m, n = len(self._rows), len(self._names)
        A = sp.csr_matrix((self._vals, (self._ri, self._ci)), shape=(m, n))
        A.sum_duplicates()
        A.sort_indices()
        return MilpModel(
            var_names=tuple(self._names),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            integer=np.array(self._int, dtype=bool),
            obj=np.array(self._obj, dtype=float),
            obj_const=float(self.obj_const),
            A=A,
            sense=tuple(r[1] for r in self._rows),
            rhs=np.array([r[2] for r in self._rows], dtype=float),
            row_names=tuple(r[0] for r in self._rows),
            meta=dict(self._meta),
        )
