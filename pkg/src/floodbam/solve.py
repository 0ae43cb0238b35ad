"""Build, solve and extract one model variant in a single call."""

from __future__ import annotations

from .bam import BamOptions, BamSolution, build_bam, build_bam_d, build_bam_np, extract_solution
from .instance import Instance
from .milp.backends import backend_solve
from .milp.bnb import BnbConfig, MilpResult, MilpStatus

VARIANTS = ("bam", "bam_np", "bam_d")


class SolverLimitError(RuntimeError):
    """A node or time limit stopped the search before optimality was proven."""

    def __init__(self, message: str, result: MilpResult):
        super().__init__(message)
        self.result = result


class InfeasibleModelError(RuntimeError):
    pass


def build_variant(inst: Instance, variant: str = "bam", fixed_h=None,
                  options: BamOptions | None = None):
    g, f, t, c = inst.grid, inst.floods, inst.tree, inst.costs
    if variant == "bam":
        return build_bam(g, f, t, c, options)
    if variant == "bam_np":
        return build_bam_np(g, f, t, c, options)
    if variant == "bam_d":
        if fixed_h is None:
            raise ValueError("variant bam_d needs fixed_h")
        return build_bam_d(g, f, t, c, fixed_h, options)
    raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")


def solve_variant(inst: Instance, variant: str = "bam", fixed_h=None,
                  options: BamOptions | None = None, cfg: BnbConfig | None = None,
                  backend: str = "embedded", accept_limit: bool = False) -> BamSolution:
    """Solve one variant to optimality and return the independently re-costed solution.

    With ``accept_limit`` an incumbent found before a limit is returned
    instead of raising :class:`SolverLimitError`.
    """
    model = build_variant(inst, variant, fixed_h, options)
    result = backend_solve(model, backend, cfg)
    if result.status is MilpStatus.INFEASIBLE:
        raise InfeasibleModelError(f"{variant} model is infeasible")
    if result.status is not MilpStatus.OPTIMAL:
        if not (accept_limit and result.has_solution):
            raise SolverLimitError(
                f"{variant}: solver stopped at a limit (status {result.status.value}, "
                f"gap {result.gap:.3g})", result)
        rel_tol = max(1e-6, result.gap)
    else:
        rel_tol = 1e-6
    return extract_solution(model, result, inst.grid, inst.floods, inst.tree, inst.costs,
                            variant=variant, rel_tol=rel_tol)
