"""Cost parameters: hardening, Tiger Dam capital and deployment, load-loss economics.

Money is held as integer cents. ``voll`` is dollars per MWh and may be
fractional; ``L`` (dollars per per-unit of load shed per hurricane) is
derived from it, the restoration time and the power base.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from .grid import GridModel

DEFAULT_HARDENING_PER_FT = 100_000
DEFAULT_DAM_UNIT = 40_000
DEFAULT_DEPLOYMENT_FEE = 10_000
DEFAULT_STORMS = 10
DEFAULT_VOLL = 6000.0
DEFAULT_RESTORATION_HOURS = 48.0
DEFAULT_POWER_BASE_MW = 10.0


class CostFormatError(ValueError):
    pass


def to_cents(dollars: float) -> int:
    cents = round(dollars * 100)
    if abs(cents - dollars * 100) > 1e-6 * max(1.0, abs(dollars)):
        raise CostFormatError(f"{dollars!r} is not a whole number of cents")
    return int(cents)


def compute_L(voll: float, restoration_hours: float, power_base_mw: float) -> float:
    """Dollars lost per per-unit of load shed per hurricane."""
    for name, v in (("voll", voll), ("restoration_hours", restoration_hours),
                    ("power_base_mw", power_base_mw)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    return voll * restoration_hours * power_base_mw


@dataclass(frozen=True)
class CostParams:
    hardening_cost: Mapping[tuple[int, int], int]  # (substation, level) -> cents
    dam_unit_cost: int  # cents per unit (one foot of dam at one substation)
    deployment_cost: Mapping[tuple[int, int], int]  # (substation, level) -> cents
    storms: int = DEFAULT_STORMS
    voll: float = DEFAULT_VOLL
    restoration_hours: float = DEFAULT_RESTORATION_HOURS
    power_base_mw: float = DEFAULT_POWER_BASE_MW

    @property
    def L(self) -> float:
        return compute_L(self.voll, self.restoration_hours, self.power_base_mw)

    @property
    def L_cents(self) -> int:
        return round(self.L * 100)

    def V(self, i: int, level: int) -> int:
        return 0 if level == 0 else self.hardening_cost[i, level]

    def C(self, i: int, level: int) -> int:
        return 0 if level == 0 else self.deployment_cost[i, level]

    def validate(self, g: GridModel) -> list[str]:
        problems = []
        if isinstance(self.storms, bool) or not isinstance(self.storms, int) or self.storms < 1:
            problems.append("storms per horizon must be an integer >= 1")
        if self.dam_unit_cost < 0:
            problems.append("dam unit cost must be nonnegative")
        for name, v in (("voll", self.voll), ("restoration_hours", self.restoration_hours),
                        ("power_base_mw", self.power_base_mw)):
            if not v > 0:
                problems.append(f"{name} must be positive")
        for table, name in ((self.hardening_cost, "hardening"), (self.deployment_cost, "deployment")):
            for key, v in table.items():
                if v < 0:
                    problems.append(f"{name} cost at {key} is negative")
        for s in g.substations:
            lab = g.substation_labels[s.id]
            for l in s.hardening_levels:
                if (s.id, l) not in self.hardening_cost:
                    problems.append(f"substation {lab}: no hardening cost for level {l}")
            for l in s.tigerdam_levels:
                if (s.id, l) not in self.deployment_cost:
                    problems.append(f"substation {lab}: no deployment cost for level {l}")
        return problems


def default_case_study_costs(substations) -> CostParams:
    """$100k per foot of hardening, $40k per dam unit, $10k flat deployment fee."""
    return CostParams(
        hardening_cost={(s.id, l): DEFAULT_HARDENING_PER_FT * 100 * l
                        for s in substations for l in s.hardening_levels},
        dam_unit_cost=DEFAULT_DAM_UNIT * 100,
        deployment_cost={(s.id, l): DEFAULT_DEPLOYMENT_FEE * 100
                         for s in substations for l in s.tigerdam_levels},
    )


def with_overrides(costs: CostParams, g: GridModel, *, voll=None, restoration_hours=None,
                   storms=None, hardening_cost_per_ft=None, dam_unit_cost=None,
                   deployment_fee=None, base_mva=None) -> CostParams:
    """Apply command-line style overrides; dollar amounts are given in dollars."""
    changes: dict = {}
    if voll is not None:
        changes["voll"] = float(voll)
    if restoration_hours is not None:
        changes["restoration_hours"] = float(restoration_hours)
    if storms is not None:
        changes["storms"] = int(storms)
    if base_mva is not None:
        changes["power_base_mw"] = float(base_mva)
    if dam_unit_cost is not None:
        changes["dam_unit_cost"] = to_cents(dam_unit_cost)
    if hardening_cost_per_ft is not None:
        per = to_cents(hardening_cost_per_ft)
        changes["hardening_cost"] = {(s.id, l): per * l
                                     for s in g.substations for l in s.hardening_levels}
    if deployment_fee is not None:
        fee = to_cents(deployment_fee)
        changes["deployment_cost"] = {(s.id, l): fee
                                      for s in g.substations for l in s.tigerdam_levels}
    return replace(costs, **changes)


def extend_deployment_costs(costs: CostParams, g: GridModel) -> CostParams:
    """Fill deployment costs for dam levels that have none yet.

    A new level copies the price of the nearest priced level below it at the
    same substation (or the lowest priced level when none is below), which
    keeps a flat fee flat; a substation with no priced level at all gets the
    most common fee overall.
    """
    table = dict(costs.deployment_cost)
    fees = list(table.values())
    fallback = max(set(fees), key=lambda v: (fees.count(v), -v)) if fees else 0
    for s in g.substations:
        priced = sorted(l for (i, l) in table if i == s.id)
        for l in s.tigerdam_levels:
            if (s.id, l) not in table:
                below = [p for p in priced if p < l]
                ref = below[-1] if below else (priced[0] if priced else None)
                table[s.id, l] = table[s.id, ref] if ref is not None else fallback
    return replace(costs, deployment_cost=table)


def costs_from_dict(data: dict, g: GridModel) -> CostParams:
    """Parse costs JSON (dollars). Per-level tables override the per-foot/fee generators."""
    allowed = {"hardening_cost_per_ft", "hardening_cost", "dam_unit_cost", "deployment_fee",
               "deployment_cost", "storms", "voll", "restoration_hours", "power_base_mw"}
    if not isinstance(data, dict):
        raise CostFormatError("costs document must be an object")
    extra = set(data) - allowed
    if extra:
        raise CostFormatError(f"costs: unknown keys {sorted(extra)}")
    base = default_case_study_costs(g.substations)
    costs = with_overrides(
        base, g,
        voll=data.get("voll"), restoration_hours=data.get("restoration_hours"),
        storms=data.get("storms"), hardening_cost_per_ft=data.get("hardening_cost_per_ft"),
        dam_unit_cost=data.get("dam_unit_cost"), deployment_fee=data.get("deployment_fee"),
        base_mva=data.get("power_base_mw"),
    )
    if isinstance(data.get("storms"), float) and not float(data["storms"]).is_integer():
        raise CostFormatError("storms must be an integer")
    index = {str(lab): k for k, lab in enumerate(g.substation_labels)}
    changes = {}
    for name in ("hardening_cost", "deployment_cost"):
        if name not in data:
            continue
        table = dict(getattr(costs, name))
        for sid, levels in data[name].items():
            if str(sid) not in index:
                raise CostFormatError(f"{name}: unknown substation {sid!r}")
            for lv, dollars in levels.items():
                if not str(lv).isdigit():
                    raise CostFormatError(f"{name}[{sid}]: level {lv!r} is not an integer")
                table[index[str(sid)], int(lv)] = to_cents(dollars)
        changes[name] = table
    return replace(costs, **changes)


def costs_to_dict(costs: CostParams, g: GridModel) -> dict:
    def table(t):
        out: dict = {}
        for (i, l), cents in sorted(t.items()):
            out.setdefault(str(g.substation_labels[i]), {})[str(l)] = cents / 100
        return out

    return {
        "hardening_cost": table(costs.hardening_cost),
        "dam_unit_cost": costs.dam_unit_cost / 100,
        "deployment_cost": table(costs.deployment_cost),
        "storms": costs.storms,
        "voll": costs.voll,
        "restoration_hours": costs.restoration_hours,
        "power_base_mw": costs.power_base_mw,
    }

