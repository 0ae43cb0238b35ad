"""Instance files in, result files out.

Inputs are four JSON documents (grid, floods, tree, costs). Every problem
found while loading is collected so that one run reports all of them.
Outputs are written atomically (temporary file, then rename) so a crash
never leaves a half-written result next to complete ones.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import time
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable

from .analysis import COST_COLUMNS, classify_cells, sort_substations_for_report
from .bam import BamSolution
from .cost import CostFormatError, costs_from_dict, costs_to_dict
from .grid import GridFormatError, grid_from_dict, grid_to_dict
from .instance import Instance
from .scenario import ScenarioFormatError, floods_from_dict, floods_to_dict, tree_from_dict, tree_to_dict

INPUT_FILES = ("grid", "floods", "tree", "costs")


class InstanceError(ValueError):
    """All problems found while loading an instance, one per line."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


def _read_json(path: Path, problems: list[str]):
    try:
        text = path.read_text()
    except OSError as exc:
        problems.append(f"{path}: cannot read ({exc.strerror or exc})")
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        problems.append(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
        return None


def load_instance(grid, floods, tree, costs, name: str | None = None) -> Instance:
    """Parse and cross-validate the four input files, raising :class:`InstanceError`."""
    paths = {"grid": Path(grid), "floods": Path(floods), "tree": Path(tree), "costs": Path(costs)}
    problems: list[str] = []
    docs = {k: _read_json(p, problems) for k, p in paths.items()}
    inst = instance_from_dicts(docs, problems, {k: str(p) for k, p in paths.items()},
                               name or paths["grid"].parent.name or "instance")
    if problems:
        raise InstanceError(problems)
    return inst


def instance_from_dicts(docs: dict, problems: list[str] | None = None,
                        where: dict | None = None, name: str = "instance") -> Instance | None:
    """Build an instance from parsed documents; problems are appended, not raised,
    when a list is passed."""
    own = problems is None
    problems = [] if own else problems
    where = where or {k: k for k in INPUT_FILES}
    g = maps = tr = cs = None

    def attempt(kind, fn):
        if docs.get(kind) is None:
            return None
        try:
            return fn()
        except (GridFormatError, ScenarioFormatError, CostFormatError, KeyError, TypeError,
                AttributeError, ValueError) as exc:
            problems.append(f"{where[kind]}: {exc}")
            return None

    g = attempt("grid", lambda: grid_from_dict(docs["grid"]))
    if g is not None:
        maps = attempt("floods", lambda: floods_from_dict(docs["floods"], g))
        cs = attempt("costs", lambda: costs_from_dict(docs["costs"], g))
    tr = attempt("tree", lambda: tree_from_dict(docs["tree"], maps))
    if None not in (g, maps, tr, cs):
        inst = Instance(g, maps, tr, cs, name)
        problems.extend(inst.validate())
        if not problems:
            return inst
    elif not problems:
        problems.append("instance incomplete")
    if own:
        raise InstanceError(problems)
    return None


def instance_to_dicts(inst: Instance) -> dict:
    return {
        "grid": grid_to_dict(inst.grid),
        "floods": floods_to_dict(inst.floods, inst.grid),
        "tree": tree_to_dict(inst.tree),
        "costs": costs_to_dict(inst.costs, inst.grid),
    }


def write_instance(inst: Instance, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind, doc in instance_to_dicts(inst).items():
        paths[kind] = out / f"{kind}.json"
        atomic_write(paths[kind], dump_json(doc))
    return paths


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def csv_text(rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def breakdown_row(millions) -> str:
    """``64.2, 3.12, ...`` as ``64.20,3.12,...``."""
    return ",".join(f"{v:.2f}" for v in millions)


def config_hash(inst: Instance, config: dict) -> str:
    payload = json.dumps({"inputs": instance_to_dicts(inst), "config": _plain(config)},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def solution_to_dict(sol: BamSolution, inst: Instance) -> dict:
    g = inst.grid
    labels = [str(lab) for lab in g.substation_labels]
    exposed = set(g.exposed)
    doc = {
        "variant": sol.variant,
        "objective_dollars": sol.objective,
        "breakdown_cents": sol.breakdown.as_dict(),
        "breakdown_millions": dict(zip(COST_COLUMNS, [round(v, 2) for v in sol.breakdown.millions()])),
        "hardening": {labels[i]: sol.first.hardening[i] for i in sorted(exposed)},
        "dam_units": sol.first.n,
        "deployment": {str(k): {labels[i]: lv[i] for i in sorted(exposed)}
                       for k, lv in sorted(sol.second.items())},
        "leaves": [
            {"k": k, "m": m, "scenario": str(inst.tree.scenario(k, m).key),
             **sol.leaf_recourse[k, m].summary()}
            for k, m in sorted(sol.leaf_recourse)
        ],
    }
    if sol.solver is not None:
        doc["solver"] = {"status": sol.solver.status.value, "objective": sol.solver.objective,
                         "best_bound": sol.solver.best_bound, "nodes": sol.solver.stats.nodes,
                         "incumbents": sol.solver.stats.incumbents}
    return doc


def emit_results(sol: BamSolution, inst: Instance, out_dir, config: dict | None = None,
                 extra: dict | None = None) -> dict[str, Path]:
    """Write solution.json, breakdown.csv, cells.csv, cells_legend.json and manifest.json."""
    out = Path(out_dir)
    config = config or {}
    files = {}

    files["solution"] = out / "solution.json"
    atomic_write(files["solution"], dump_json(solution_to_dict(sol, inst)))

    files["breakdown"] = out / "breakdown.csv"
    atomic_write(files["breakdown"],
                 ",".join(COST_COLUMNS) + "\n" + breakdown_row(sol.breakdown.millions()) + "\n")

    order = sort_substations_for_report(sol, inst.floods)
    cells = classify_cells(sol, inst.tree, inst.floods, order)
    rows = cells.rows()
    for row in rows[1:]:
        row[0] = str(inst.grid.substation_labels[int(row[0])])
    files["cells"] = out / "cells.csv"
    atomic_write(files["cells"], csv_text(rows))
    files["legend"] = out / "cells_legend.json"
    atomic_write(files["legend"], dump_json(cells_legend()))

    stats = {}
    timing = {}
    if sol.solver is not None:
        st = sol.solver.stats
        stats = {"status": sol.solver.status.value, "nodes": st.nodes, "incumbents": st.incumbents,
                 "lp_iterations": st.lp_iterations, "gap": sol.solver.gap}
        timing["solver_seconds"] = st.seconds
    manifest = {
        "config_hash": config_hash(inst, config),
        "config": _plain(config),
        "solver_stats": stats,
        "files": sorted(p.name for p in files.values()),
        "timing": {**timing, "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }
    if extra:
        manifest["extra"] = _plain(extra)
    files["manifest"] = out / "manifest.json"
    atomic_write(files["manifest"], dump_json(manifest))
    return files


def cells_legend() -> dict:
    return {
        "columns": "substation, hardening_mark, hardening_level, then one color per preparedness node",
        "white": "no flooding in any scenario of the node and no dam deployed",
        "blue": "flooded in some scenario of the node but no dam deployed",
        "green": "dam deployed at or above the node's worst flood",
        "orange": "dam deployed below the node's worst flood",
        "black": "hardening mark: substation hardened",
        "yellow": "hardening mark: substation not hardened",
    }


def sweep_csv(rows) -> str:
    out = [["param", "value", *COST_COLUMNS, "status"]]
    for r in rows:
        out.append([r.param, _num(r.value), *r.formatted(), "ok" if r.ok else f"failed: {r.error}"])
    return csv_text(out)


def _num(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))
