"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage, 2 a solver limit stopped
the search before optimality was proven.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from .analysis import SWEEP_PARAMS, sweep, value_of_full_coordination
from .bam import BamError, BamOptions
from .cost import with_overrides
from .instance import Instance, random_instance
from .io import (InstanceError, atomic_write, dump_json, emit_results, load_instance,
                 sweep_csv, write_instance)
from .milp.backends import BACKENDS
from .milp.bnb import BnbConfig
from .milp.lpformat import write_lp
from .oracle import SearchSpaceTooLarge, enumerate_optimum
from .solve import InfeasibleModelError, SolverLimitError, build_variant, solve_variant

EXIT_OK, EXIT_INVALID, EXIT_LIMIT = 0, 1, 2

SCHEMA_HELP = """\
input files (JSON):
  grid.json    {"substations": [{"id", "flood_exposed", "hardening_levels", "tigerdam_levels"}],
                "buses": [{"id", "substation", "demand", "gen_min", "gen_max", "slack"}],
                "branches": [{"id", "head", "tail", "susceptance", "capacity", "max_angle_diff"}]}
  floods.json  {"maps": [{"direction", "category", "speed", "heights": {substation id: feet}}]}
  tree.json    {"nodes": [{"prob", "scenarios": [{"direction", "category", "speed", "prob"}]}]}
               or {"case_study": {"directions", "categories", "speeds"}}
  costs.json   {"hardening_cost_per_ft", "dam_unit_cost", "deployment_fee", "voll",
                "restoration_hours", "storms", "power_base_mw",
                "hardening_cost": {substation: {level: dollars}}, "deployment_cost": {...}}
  power quantities are per unit; money in dollars.

environment: BAM_NODE_LIMIT, BAM_TIME_LIMIT (seconds), BAM_THREADS (sweep workers)
"""

log = logging.getLogger("floodbam")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_instance_args(p):
    g = p.add_argument_group("instance")
    g.add_argument("--instance", type=Path, help="directory holding grid/floods/tree/costs .json")
    g.add_argument("--example", action="store_true", help="use the bundled desk-scale example")
    for kind in ("grid", "floods", "tree", "costs"):
        g.add_argument(f"--{kind}", type=Path)
    g.add_argument("--voll", type=float, help="override value of lost load ($/MWh)")
    g.add_argument("--restoration-hours", type=float)
    g.add_argument("--storms", type=int)
    g.add_argument("--hardening-cost-per-ft", type=float, help="dollars per foot of hardening")
    g.add_argument("--dam-unit-cost", type=float, help="dollars per dam unit")
    g.add_argument("--deployment-fee", type=float, help="dollars per dam deployment")
    g.add_argument("--base-mva", type=float, help="power base used in the load-loss cost")


def _add_solver_args(p):
    s = p.add_argument_group("solver")
    s.add_argument("--backend", choices=BACKENDS, default="embedded")
    s.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap target")
    s.add_argument("--node-limit", type=int)
    s.add_argument("--time-limit", type=float)
    s.add_argument("--branching", choices=("most_fractional", "pseudo_cost"),
                   default="most_fractional")
    s.add_argument("--node-order", choices=("best_bound", "depth_first"), default="best_bound")
    s.add_argument("--loose-m", action="store_true", help="use M = 1e6 instead of tightened values")
    s.add_argument("--no-valid-inequalities", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="floodbam", description="Flood-resilience budget allocation model.",
                     epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, epilog=SCHEMA_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_instance_args(p)
        p.add_argument("--out", type=Path, required=True)
        return p

    p = command("solve", "solve the full model")
    _add_solver_args(p)
    p = command("variant", "solve a restricted variant")
    p.add_argument("--mode", choices=("np", "decoupled"), required=True)
    _add_solver_args(p)
    p = command("sweep", "re-solve over a list of parameter values")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, help="parallel solves (default: BAM_THREADS or 1)")
    _add_solver_args(p)
    p = command("oracle", "exhaustive enumeration (tiny instances only)")
    p.add_argument("--variant", choices=("bam", "bam_np"), default="bam")
    p.add_argument("--max-space", type=int, default=10_000_000)
    p = command("classify", "solve and write the substation-by-node color grid")
    _add_solver_args(p)
    p = command("dump-lp", "write the model in LP format")
    p.add_argument("--variant", choices=("bam", "bam_np"), default="bam")
    p.add_argument("--loose-m", action="store_true")
    p.add_argument("--no-valid-inequalities", action="store_true")

    p = sub.add_parser("generate", help="write a random desk-scale instance")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


COST_OVERRIDES = ("voll", "restoration_hours", "storms", "hardening_cost_per_ft", "dam_unit_cost",
                  "deployment_fee", "base_mva")


def example_dir() -> Path:
    return Path(str(resources.files("floodbam") / "data" / "desk"))


def _instance(args) -> Instance:
    if args.example:
        base = example_dir()
    else:
        base = args.instance
    paths = {}
    for kind in ("grid", "floods", "tree", "costs"):
        given = getattr(args, kind)
        if given is None and base is None:
            raise UsageError(f"missing --{kind} (or --instance DIR / --example)")
        paths[kind] = given if given is not None else base / f"{kind}.json"
    inst = load_instance(**paths)
    overrides = {k: getattr(args, k) for k in COST_OVERRIDES if getattr(args, k) is not None}
    if overrides:
        try:
            costs = with_overrides(inst.costs, inst.grid, **overrides)
        except ValueError as exc:
            raise InstanceError([f"cost override: {exc}"]) from None
        inst = inst.with_costs(costs)
        problems = inst.validate()
        if problems:
            raise InstanceError(problems)
    return inst


def _env_number(name, kind):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"{name} must be a number, got {raw!r}") from None


def _solver(args):
    node_limit = args.node_limit if args.node_limit is not None else _env_number("BAM_NODE_LIMIT", int)
    time_limit = args.time_limit if args.time_limit is not None else _env_number("BAM_TIME_LIMIT", float)
    try:
        cfg = BnbConfig(relative_gap_target=args.gap, node_limit=node_limit, time_limit=time_limit,
                        branching_rule=args.branching, node_order=args.node_order)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, _options(args)


def _options(args):
    return BamOptions(valid_inequalities=not args.no_valid_inequalities, tight_m=not args.loose_m)


def _config(args, **more) -> dict:
    skip = {"instance", "example", "grid", "floods", "tree", "costs", "out", "verbose"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg.update(more)
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def _summary(name, sol):
    vals = " ".join(f"{v:.2f}" for v in sol.breakdown.millions())
    print(f"{name}: objective ${sol.objective:,.2f}  [$M hardening dam_capital deployment "
          f"load_loss total: {vals}]")


def cmd_solve(args):
    inst = _instance(args)
    cfg, opt = _solver(args)
    sol = solve_variant(inst, "bam", options=opt, cfg=cfg, backend=args.backend)
    emit_results(sol, inst, args.out, _config(args, node_limit=cfg.node_limit,
                                               time_limit=cfg.time_limit))
    _summary("bam", sol)


def cmd_variant(args):
    inst = _instance(args)
    cfg, opt = _solver(args)
    config = _config(args, node_limit=cfg.node_limit, time_limit=cfg.time_limit)
    if args.mode == "np":
        sol = solve_variant(inst, "bam_np", options=opt, cfg=cfg, backend=args.backend)
        emit_results(sol, inst, args.out, config)
        _summary("bam_np", sol)
        return
    res = value_of_full_coordination(inst, options=opt, cfg=cfg, backend=args.backend)
    for name, sol in res["solutions"].items():
        emit_results(sol, inst, args.out / name, {**config, "variant": name})
        _summary(name, sol)
    summary = {k: res[k] for k in ("obj_bam", "obj_bam_np", "obj_bam_d", "vofc")}
    atomic_write(args.out / "vofc.json", dump_json(summary))
    print(f"value of full coordination: ${res['vofc']:,.2f}")


def cmd_sweep(args):
    inst = _instance(args)
    cfg, opt = _solver(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise UsageError("--values is empty")
    try:
        rows = sweep(inst, args.param, values, options=opt, cfg=cfg, backend=args.backend,
                     workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = args.out / f"sweep_{args.param}.csv"
    atomic_write(path, sweep_csv(rows))
    atomic_write(args.out / "manifest.json", dump_json({
        "config": _config(args, node_limit=cfg.node_limit, time_limit=cfg.time_limit),
        "rows": len(rows), "failed": sum(not r.ok for r in rows)}))
    print(sweep_csv(rows), end="")
    failed = [r for r in rows if not r.ok]
    if failed:
        limited = any("SolverLimitError" in (r.error or "") for r in failed)
        return EXIT_LIMIT if limited else EXIT_INVALID
    return EXIT_OK


def cmd_oracle(args):
    inst = _instance(args)
    try:
        sol = enumerate_optimum(inst.grid, inst.floods, inst.tree, inst.costs, args.variant,
                                max_space=args.max_space)
    except SearchSpaceTooLarge as exc:
        raise UsageError(str(exc)) from None
    emit_results(sol, inst, args.out, _config(args))
    _summary(f"oracle {args.variant}", sol)


def cmd_classify(args):
    inst = _instance(args)
    cfg, opt = _solver(args)
    sol = solve_variant(inst, "bam", options=opt, cfg=cfg, backend=args.backend)
    files = emit_results(sol, inst, args.out, _config(args))
    print(files["cells"].read_text(), end="")


def cmd_dump_lp(args):
    inst = _instance(args)
    model = build_variant(inst, args.variant, options=_options(args))
    path = args.out / f"{args.variant}.lp"
    atomic_write(path, write_lp(model))
    print(f"wrote {path} ({model.num_vars} variables, {model.num_rows} rows)")


def cmd_generate(args):
    paths = write_instance(random_instance(args.seed), args.out)
    print("wrote " + ", ".join(str(p) for p in paths.values()))


COMMANDS = {"solve": cmd_solve, "variant": cmd_variant, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "classify": cmd_classify, "dump-lp": cmd_dump_lp, "generate": cmd_generate}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        code = COMMANDS[args.command](args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"error: {exc}\n", file=sys.stderr)
        parser.print_usage(sys.stderr)
        print("\n" + SCHEMA_HELP, file=sys.stderr)
        return EXIT_INVALID
    except InstanceError as exc:
        print("invalid instance:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_INVALID
    except SolverLimitError as exc:
        print(f"solver limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except (BamError, InfeasibleModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
