"""Transmission grid data model for the flood-aware DC power flow.

Power quantities are per-unit. Branch flow ``e_r`` is signed: positive
means head -> tail, so every branch sits in the *out* list of its head bus
and the *in* list of its tail bus regardless of the runtime flow direction.

Ids are dense 0-based indices; the ids found in an input file are kept in
``GridModel.bus_labels`` / ``branch_labels`` / ``substation_labels`` for
reporting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

log = logging.getLogger(__name__)


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    substation_id: int
    demand: float
    gen_min: float = 0.0
    gen_max: float = 0.0
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    id: int
    head: int
    tail: int
    susceptance: float
    capacity: float
    max_angle_diff: float


@dataclass(frozen=True)
class Substation:
    id: int
    bus_ids: tuple[int, ...]
    is_flood_exposed: bool = False
    hardening_levels: tuple[int, ...] = ()
    tigerdam_levels: tuple[int, ...] = ()

    @property
    def hardening_max(self) -> int:
        return max(self.hardening_levels, default=0)

    @property
    def tigerdam_max(self) -> int:
        return max(self.tigerdam_levels, default=0)


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    substations: tuple[Substation, ...]
    bus_labels: tuple[Any, ...] = field(default=(), compare=False)
    branch_labels: tuple[Any, ...] = field(default=(), compare=False)
    substation_labels: tuple[Any, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for attr, items in (("bus_labels", self.buses), ("branch_labels", self.branches),
                            ("substation_labels", self.substations)):
            if not getattr(self, attr):
                object.__setattr__(self, attr, tuple(range(len(items))))

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, ...], ...]]:
        return build_adjacency(self)

    @property
    def exposed(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.substations if s.is_flood_exposed)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.is_slack)

    @property
    def total_demand(self) -> float:
        return sum(b.demand for b in self.buses)

    def with_tigerdam_levels(self, levels: dict[int, tuple[int, ...]]) -> "GridModel":
        subs = tuple(
            Substation(s.id, s.bus_ids, s.is_flood_exposed, s.hardening_levels,
                       tuple(levels.get(s.id, s.tigerdam_levels)))
            for s in self.substations
        )
        return GridModel(self.buses, self.branches, subs, self.bus_labels,
                         self.branch_labels, self.substation_labels)


def build_adjacency(g: GridModel):
    """Per-bus ``(out_lists, in_lists)`` of branch ids from the static orientation."""
    out = [[] for _ in g.buses]
    inc = [[] for _ in g.buses]
    for br in g.branches:
        out[br.head].append(br.id)
        inc[br.tail].append(br.id)
    return tuple(map(tuple, out)), tuple(map(tuple, inc))


def validate_grid(g: GridModel) -> list[str]:
    """Return a list of invariant violations; empty when the grid is well formed."""
    problems: list[str] = []
    nb = len(g.buses)
    for k, b in enumerate(g.buses):
        if b.id != k:
            problems.append(f"bus {k}: id {b.id} is not its index")
        if b.demand < 0:
            problems.append(f"bus {b.id}: negative demand")
        if b.gen_min < 0 or b.gen_min > b.gen_max:
            problems.append(f"bus {b.id}: generation limits must satisfy 0 <= gen_min <= gen_max")
        if not 0 <= b.substation_id < len(g.substations):
            problems.append(f"bus {b.id}: unknown substation {b.substation_id}")
    slacks = sum(b.is_slack for b in g.buses)
    if slacks == 0:
        problems.append("no slack bus")
    elif slacks > 1:
        problems.append("multiple slack buses")

    for k, br in enumerate(g.branches):
        if br.id != k:
            problems.append(f"branch {k}: id {br.id} is not its index")
        if not (0 <= br.head < nb and 0 <= br.tail < nb):
            problems.append(f"branch {br.id}: endpoint references a missing bus")
        elif br.head == br.tail:
            problems.append(f"branch {br.id}: head equals tail")
        if br.susceptance <= 0:
            problems.append(f"branch {br.id}: susceptance must be positive")
        if br.capacity <= 0:
            problems.append(f"branch {br.id}: capacity must be positive")
        if not 0 < br.max_angle_diff <= 2 * math.pi:
            problems.append(f"branch {br.id}: max_angle_diff outside (0, 2pi]")

    owners: dict[int, list[int]] = {}
    for k, s in enumerate(g.substations):
        if s.id != k:
            problems.append(f"substation {k}: id {s.id} is not its index")
        if not s.bus_ids:
            problems.append(f"substation {s.id}: no buses")
        for j in s.bus_ids:
            owners.setdefault(j, []).append(s.id)
        for name, lv in (("hardening", s.hardening_levels), ("tigerdam", s.tigerdam_levels)):
            if any(l <= 0 or int(l) != l for l in lv):
                problems.append(f"substation {s.id}: {name} levels must be positive integers")
            if any(a >= b for a, b in zip(lv, lv[1:])):
                problems.append(f"substation {s.id}: {name} levels not strictly increasing")
        if not s.is_flood_exposed and (s.hardening_levels or s.tigerdam_levels):
            problems.append(f"substation {s.id}: protection levels on a non-exposed substation")
    for j in range(nb):
        subs = owners.get(j, [])
        if len(subs) != 1:
            problems.append(f"bus {j} in {len(subs)} substations")
        elif subs[0] != g.buses[j].substation_id:
            problems.append(f"bus {j}: substation_id disagrees with substation {subs[0]} bus list")
    for j in owners:
        if not 0 <= j < nb:
            problems.append(f"substation lists missing bus {j}")

    gen = sum(b.gen_max for b in g.buses)
    if not problems and gen < g.total_demand:
        log.warning("total generation %.4g below total demand %.4g; load will be shed", gen,
                    g.total_demand)
    return problems


_BUS_KEYS = {"id", "substation", "demand", "gen_min", "gen_max", "slack"}
_BRANCH_KEYS = {"id", "head", "tail", "susceptance", "capacity", "max_angle_diff"}
_SUB_KEYS = {"id", "flood_exposed", "hardening_levels", "tigerdam_levels"}


def _check_keys(kind: str, obj: dict, allowed: set, required: set) -> None:
    if not isinstance(obj, dict):
        raise GridFormatError(f"{kind} entry must be an object")
    extra = set(obj) - allowed
    if extra:
        raise GridFormatError(f"{kind} {obj.get('id')!r}: unknown keys {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise GridFormatError(f"{kind} {obj.get('id')!r}: missing keys {sorted(missing)}")


def grid_from_dict(data: dict) -> GridModel:
    """Parse the grid JSON document, remapping file ids to dense indices."""
    if not isinstance(data, dict):
        raise GridFormatError("grid document must be an object")
    extra = set(data) - {"buses", "branches", "substations"}
    if extra:
        raise GridFormatError(f"grid: unknown keys {sorted(extra)}")
    raw_subs = data.get("substations", [])
    raw_buses = data.get("buses", [])
    raw_branches = data.get("branches", [])
    for s in raw_subs:
        _check_keys("substation", s, _SUB_KEYS, {"id"})
    for b in raw_buses:
        _check_keys("bus", b, _BUS_KEYS, {"id", "substation", "demand"})
    for r in raw_branches:
        _check_keys("branch", r, _BRANCH_KEYS, _BRANCH_KEYS)

    sub_labels = [s["id"] for s in raw_subs]
    bus_labels = [b["id"] for b in raw_buses]
    br_labels = [r["id"] for r in raw_branches]
    for kind, labels in (("substation", sub_labels), ("bus", bus_labels), ("branch", br_labels)):
        if len(set(labels)) != len(labels):
            raise GridFormatError(f"duplicate {kind} ids")
    sub_index = {lab: k for k, lab in enumerate(sub_labels)}
    bus_index = {lab: k for k, lab in enumerate(bus_labels)}

    buses = []
    members: list[list[int]] = [[] for _ in raw_subs]
    for k, b in enumerate(raw_buses):
        if b["substation"] not in sub_index:
            raise GridFormatError(f"bus {b['id']!r}: unknown substation {b['substation']!r}")
        si = sub_index[b["substation"]]
        members[si].append(k)
        buses.append(Bus(k, si, float(b["demand"]), float(b.get("gen_min", 0.0)),
                         float(b.get("gen_max", 0.0)), bool(b.get("slack", False))))
    branches = []
    for k, r in enumerate(raw_branches):
        for end in ("head", "tail"):
            if r[end] not in bus_index:
                raise GridFormatError(f"branch {r['id']!r}: unknown {end} bus {r[end]!r}")
        branches.append(Branch(k, bus_index[r["head"]], bus_index[r["tail"]],
                               float(r["susceptance"]), float(r["capacity"]),
                               float(r["max_angle_diff"])))
    subs = []
    for k, s in enumerate(raw_subs):
        subs.append(Substation(k, tuple(members[k]), bool(s.get("flood_exposed", False)),
                               _levels(s, "hardening_levels"), _levels(s, "tigerdam_levels")))
    return GridModel(tuple(buses), tuple(branches), tuple(subs), tuple(bus_labels),
                     tuple(br_labels), tuple(sub_labels))


def _levels(s: dict, key: str) -> tuple[int, ...]:
    out = []
    for v in s.get(key, []):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise GridFormatError(f"substation {s['id']!r}: {key} must be integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


def grid_to_dict(g: GridModel) -> dict:
    return {
        "buses": [
            {"id": g.bus_labels[b.id], "substation": g.substation_labels[b.substation_id],
             "demand": b.demand, "gen_min": b.gen_min, "gen_max": b.gen_max, "slack": b.is_slack}
            for b in g.buses
        ],
        "branches": [
            {"id": g.branch_labels[r.id], "head": g.bus_labels[r.head],
             "tail": g.bus_labels[r.tail], "susceptance": r.susceptance,
             "capacity": r.capacity, "max_angle_diff": r.max_angle_diff}
            for r in g.branches
        ],
        "substations": [
            {"id": g.substation_labels[s.id], "flood_exposed": s.is_flood_exposed,
             "hardening_levels": list(s.hardening_levels),
             "tigerdam_levels": list(s.tigerdam_levels)}
            for s in g.substations
        ],
    }
