"""Gauss-Newton and Levenberg-Marquardt optimization of a factor graph.

Robust kernels are realized by iteratively reweighted least squares: the
IRLS weights are recomputed from the current estimate every time the graph
is relinearized.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from robustnav.damping import DampingSchedule, DampingStatistics, solve_damped
from robustnav.exceptions import SingularSystemError
from robustnav.factors import Values
from robustnav.graph import FactorGraph, LinearSystem
from robustnav.logging import SolverLogger
from robustnav.models import SolverAlgorithm, SolverConfig

logger = logging.getLogger(__name__)


@dataclass
class IterationRecord:
    """One solver iteration."""

    iteration: int
    cost: float
    damping: float
    accepted: bool = True


@dataclass
class SolverReport:
    """Outcome of :func:`optimize`."""

    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    converged: bool = False
    gradient_norm: float = 0.0
    damping_retries: int = 0
    history: List[IterationRecord] = field(default_factory=list)

    def to_text(self, solver_logger: Optional[SolverLogger] = None) -> str:
        """Key-value rendering, one accepted or rejected iteration per line."""
        solver_logger = solver_logger or SolverLogger()
        lines = []
        for record in self.history:
            line = solver_logger.format_iteration(record.iteration, record.cost, record.damping)
            lines.append(line if record.accepted else f"{line} rejected")
        lines.append(
            f"iterations={self.iterations} initial_cost={self.initial_cost:.10g} "
            f"final_cost={self.final_cost:.10g} converged={str(self.converged).lower()} "
            f"gradient_norm={self.gradient_norm:.3g}"
        )
        return "\n".join(lines)


def _solve_normal_equations(hessian: sparse.csc_matrix, gradient: np.ndarray, damping: float) -> np.ndarray:
    size = hessian.shape[0]
    system = hessian + damping * sparse.identity(size, format="csc") if damping > 0 else hessian
    try:
        step = splu(system.tocsc()).solve(-gradient)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc), damping=damping) from None
    if not np.all(np.isfinite(step)):
        raise SingularSystemError("normal-equation solve produced non-finite step", damping=damping)
    return step


def gradient_norm(graph: FactorGraph, values: Values) -> float:
    """Norm of the IRLS-weighted gradient ``J^T r`` at ``values``."""
    if graph.factor_count == 0:
        return 0.0
    _, gradient = graph.linearize(values).normal_equations()
    return float(np.linalg.norm(gradient))


def optimize(
    graph: FactorGraph,
    initial: Values,
    config: Optional[SolverConfig] = None,
    solver_logger: Optional[SolverLogger] = None,
) -> Tuple[Values, SolverReport]:
    """Minimize the total graph cost starting from ``initial``.

    Args:
        graph: Gauge-fixed factor graph.
        initial: Initial estimate covering every graph variable.
        config: Solver settings.
        solver_logger: Receives per-iteration records.

    Returns:
        The final estimate and a report. Running out of iterations is
        reported through ``converged = False``, not raised.

    Raises:
        GraphError: If the graph is not gauge-fixed.
        SingularSystemError: If the normal equations stay singular after all
            damping retries.
    """
    config = config or SolverConfig()
    solver_logger = solver_logger or SolverLogger()
    levenberg = config.algorithm == SolverAlgorithm.LEVENBERG_MARQUARDT
    graph.check_gauge()

    values = initial
    cost = graph.total_cost(values)
    schedule = DampingSchedule.from_config(config, enabled=levenberg)
    stats = DampingStatistics()
    report = SolverReport(initial_cost=cost, final_cost=cost)
    report.history.append(IterationRecord(0, cost, schedule.damping))
    solver_logger.log_iteration(0, cost, schedule.damping)

    if cost <= config.abs_cost_tolerance:
        report.converged = True
        report.gradient_norm = gradient_norm(graph, values)
        solver_logger.log_solve(0, cost, cost, True)
        return values, report

    ordering = graph.keys
    for iteration in range(1, config.max_iterations + 1):
        system: LinearSystem = graph.linearize(values, ordering)
        hessian, gradient = system.normal_equations()

        while True:
            step = solve_damped(
                lambda damping: _solve_normal_equations(hessian, gradient, damping),
                schedule,
                solver_logger,
                stats,
            )
            candidate = values.retract(step, system.offsets)
            new_cost = graph.total_cost(candidate)
            if not levenberg or new_cost <= cost:
                break
            solver_logger.log_iteration(iteration, new_cost, schedule.damping, accepted=False)
            report.history.append(IterationRecord(iteration, new_cost, schedule.damping, False))
            if new_cost - cost <= config.abs_cost_tolerance:
                candidate, new_cost = values, cost
                break
            schedule.reject()
            if schedule.exhausted:
                break

        if levenberg and new_cost > cost:
            report.iterations = iteration
            logger.warning(
                f"Damping exceeded {config.max_damping:g} without reducing cost",
                extra={"iteration": iteration, "cost": cost},
            )
            break

        change = abs(cost - new_cost)
        previous = cost
        values, cost = candidate, new_cost
        report.iterations = iteration
        report.history.append(IterationRecord(iteration, cost, schedule.damping))
        solver_logger.log_iteration(iteration, cost, schedule.damping)
        schedule.accept()

        if change < config.abs_cost_tolerance or change < config.rel_cost_tolerance * previous:
            report.converged = True
            break
        if cost <= config.abs_cost_tolerance:
            report.converged = True
            break

    report.final_cost = cost
    report.damping_retries = stats.retries
    report.gradient_norm = gradient_norm(graph, values)
    solver_logger.log_solve(report.iterations, report.initial_cost, cost, report.converged)
    return values, report
