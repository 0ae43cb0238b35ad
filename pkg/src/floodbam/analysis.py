"""Parameter sweeps, the value of full coordination, and the solution grid."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .bam import BamOptions, BamSolution
from .cost import extend_deployment_costs, with_overrides
from .instance import Instance
from .milp.bnb import BnbConfig
from .scenario import FloodMapSet, ScenarioTree
from .solve import solve_variant

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("voll", "restoration_hours", "tmax", "hardening_cost_per_ft")
COST_COLUMNS = ("hardening", "dam_capital", "expected_deployment", "expected_load_loss", "total")
TMAX_STEP = 3

WHITE, BLUE, GREEN, ORANGE = "white", "blue", "green", "orange"
HARDENED, UNHARDENED = "black", "yellow"


def apply_parameter(inst: Instance, param: str, value) -> Instance:
    """The instance with one sweep parameter set to ``value``."""
    g, costs = inst.grid, inst.costs
    if param == "voll":
        return inst.with_costs(with_overrides(costs, g, voll=value))
    if param == "restoration_hours":
        return inst.with_costs(with_overrides(costs, g, restoration_hours=value))
    if param == "hardening_cost_per_ft":
        return inst.with_costs(with_overrides(costs, g, hardening_cost_per_ft=value))
    if param == "tmax":
        tmax = int(value)
        if tmax != value or tmax < TMAX_STEP:
            raise ValueError(f"tmax must be an integer >= {TMAX_STEP}, got {value!r}")
        levels = tuple(range(TMAX_STEP, tmax + 1, TMAX_STEP))
        g2 = g.with_tigerdam_levels({i: levels for i in g.exposed})
        return Instance(g2, inst.floods, inst.tree, extend_deployment_costs(costs, g2), inst.name)
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


@dataclass
class SweepRow:
    param: str
    value: float
    millions: tuple[float, ...] | None  # the five cost columns, or None when the solve failed
    solution: BamSolution | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.millions is not None

    def formatted(self) -> list[str]:
        if self.millions is None:
            return [""] * len(COST_COLUMNS)
        return [f"{v:.2f}" for v in self.millions]


def _sweep_point(args):
    inst, param, value, options, cfg, backend = args
    try:
        sol = solve_variant(apply_parameter(inst, param, value), "bam", options=options,
                            cfg=cfg, backend=backend)
    except Exception as exc:  # a failed point is recorded, the sweep continues
        return SweepRow(param, value, None, None, f"{type(exc).__name__}: {exc}")
    sol.solver = None  # keep the row small when it crosses a process boundary
    return SweepRow(param, value, sol.breakdown.millions(), sol)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("BAM_THREADS")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BAM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"BAM_THREADS must be a positive integer, got {raw!r}")
    return n


def sweep(inst: Instance, param: str, values: Sequence, options: BamOptions | None = None,
          cfg: BnbConfig | None = None, backend: str = "embedded",
          workers: int | None = None) -> list[SweepRow]:
    """Solve the model once per value, from scratch; rows keep the input order."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    for v in values:  # reject bad values before any solve starts
        apply_parameter(inst, param, v)
    workers = worker_count() if workers is None else workers
    jobs = [(inst, param, v, options, cfg, backend) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    for row in rows:
        if not row.ok:
            log.warning("sweep %s=%s failed: %s", param, row.value, row.error)
    log_trends(rows)
    return rows


def log_trends(rows: Sequence[SweepRow]) -> list[str]:
    """Report, without asserting, where the hardening budget fails to grow along the sweep."""
    notes = []
    done = [r for r in rows if r.ok]
    for a, b in zip(done, done[1:]):
        if b.value > a.value and b.millions[0] < a.millions[0]:
            notes.append(f"hardening budget drops from {a.millions[0]:.2f} to {b.millions[0]:.2f} "
                         f"as {a.param} goes {a.value} -> {b.value}")
    for note in notes:
        log.info(note)
    return notes


def value_of_full_coordination(inst: Instance, options: BamOptions | None = None,
                               cfg: BnbConfig | None = None, backend: str = "embedded") -> dict:
    """Objectives of the three variants; the decoupled one reuses the no-dam hardening."""
    full = solve_variant(inst, "bam", options=options, cfg=cfg, backend=backend)
    no_prep = solve_variant(inst, "bam_np", options=options, cfg=cfg, backend=backend)
    decoupled = solve_variant(inst, "bam_d", fixed_h=no_prep.first.hardening,
                              options=options, cfg=cfg, backend=backend)
    return {
        "obj_bam": full.objective,
        "obj_bam_np": no_prep.objective,
        "obj_bam_d": decoupled.objective,
        "vofc": decoupled.objective - full.objective,
        "solutions": {"bam": full, "bam_np": no_prep, "bam_d": decoupled},
    }


def cell_color(max_flood: int, dam_level: int) -> str:
    if dam_level == 0:
        return WHITE if max_flood == 0 else BLUE
    return GREEN if dam_level >= max_flood else ORANGE


@dataclass
class CellGrid:
    substations: list[int]
    nodes: list[int]
    colors: dict[tuple[int, int], str]
    max_flood: dict[tuple[int, int], int]
    hardening: dict[int, int]

    def mark(self, i: int) -> str:
        return HARDENED if self.hardening[i] > 0 else UNHARDENED

    def rows(self) -> list[list[str]]:
        """Header plus one row per substation: id, mark, hardening level, one color per node."""
        out = [["substation", "hardening_mark", "hardening_level"] + [f"k{k}" for k in self.nodes]]
        for i in self.substations:
            out.append([str(i), self.mark(i), str(self.hardening[i])]
                       + [self.colors[i, k] for k in self.nodes])
        return out


def classify_cells(solution: BamSolution, tree: ScenarioTree, maps: FloodMapSet,
                   order: Sequence[int] | None = None) -> CellGrid:
    """Color every (substation, node) cell by its worst flood and deployed dam level."""
    subs = list(order) if order is not None else list(range(maps.num_substations))
    nodes = [node.index for node in tree.nodes]
    colors, worst = {}, {}
    for node in tree.nodes:
        k = node.index
        for i in subs:
            mf = max(maps.maps[s.key][i] for s in node.scenarios)
            worst[i, k] = mf
            colors[i, k] = cell_color(mf, solution.second[k][i])
    hard = {i: solution.first.hardening[i] for i in subs}
    return CellGrid(subs, nodes, colors, worst, hard)


def sort_substations_for_report(solution: BamSolution | None, maps: FloodMapSet) -> list[int]:
    """Substations flooded somewhere, by ascending mean flood height, ties by id."""
    flooded = [i for i in range(maps.num_substations)
               if any(h[i] > 0 for h in maps.maps.values())]
    return sorted(flooded, key=lambda i: (maps.mean_height(i), i))
