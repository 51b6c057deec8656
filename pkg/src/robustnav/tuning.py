"""Grid search over the Barron shape and scale."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple, Union

from robustnav.exceptions import ConfigurationError, RobustNavError, TuningError
from robustnav.fusion import Dataset, FusionEngine, FusionProblem, prepare_problem
from robustnav.logging import SolverLogger, LogConfig
from robustnav.metrics import compute_metrics
from robustnav.models import ErrorMode, FuseConfig, GridSpec, ObjectiveKind, TuneCell, TuneResult
from robustnav.robust import KernelKind

logger = logging.getLogger(__name__)


def default_objective(dataset: Dataset) -> ObjectiveKind:
    """Ground-truth RMSE when truth is available, residual MSE otherwise."""
    return ObjectiveKind.GT_RMSE if dataset.truth is not None else ObjectiveKind.RESIDUAL_MSE


def evaluate_cell(
    dataset: Dataset,
    problem: FusionProblem,
    config: FuseConfig,
    alpha: float,
    c: float,
    objective: ObjectiveKind,
    solver_logger: Optional[SolverLogger] = None,
) -> TuneCell:
    """Run one RFGO solve; failures are reported in the cell, not raised."""
    cell_config = config.model_copy(update={"loss": KernelKind.BARRON, "alpha": alpha, "c": c})
    try:
        result = FusionEngine(cell_config, solver_logger).fuse(dataset, problem)
        if objective == ObjectiveKind.GT_RMSE:
            value = compute_metrics(result.trajectory, dataset.truth, ErrorMode.HORIZONTAL).rmse
        else:
            value = result.residual_mse
    except RobustNavError as exc:
        logger.warning(
            f"Grid cell alpha={alpha:g} c={c:g} failed: {exc}",
            extra={"alpha": alpha, "c": c, "error_type": type(exc).__name__},
        )
        return TuneCell(alpha=alpha, c=c, failed=True, error=str(exc))

    if not math.isfinite(value):
        return TuneCell(alpha=alpha, c=c, failed=True, error="non-finite objective")
    logger.debug(f"alpha={alpha:g} c={c:g} objective={value:.6g}", extra={"alpha": alpha, "c": c})
    return TuneCell(alpha=alpha, c=c, objective=value)


def _rank(cell: TuneCell) -> Tuple[float, float, float]:
    # ties go to the least aggressive kernel: larger alpha, then larger c
    return (cell.objective, -cell.alpha, -cell.c)


def grid_search(
    dataset: Dataset,
    grid: Optional[GridSpec] = None,
    objective: Optional[Union[ObjectiveKind, str]] = None,
    config: Optional[FuseConfig] = None,
    workers: int = 1,
    solver_logger: Optional[SolverLogger] = None,
) -> TuneResult:
    """Evaluate every (alpha, c) cell and pick the best.

    Preintegration and initialization are shared by all cells. Cells are
    listed alpha-major in grid order regardless of ``workers``.

    Args:
        dataset: Data to fuse.
        grid: Shape and scale values; defaults to the full grid.
        objective: ``residual-mse`` or ``gt-rmse``; defaults to gt-rmse when
            truth is present.
        config: Base fusion settings (loss parameters are overridden per cell).
        workers: Threads solving cells concurrently.
        solver_logger: Receives solver records; quiet by default.

    Raises:
        ConfigurationError: If gt-rmse is requested without truth.
        TuningError: If every cell failed.
    """
    grid = grid or GridSpec()
    objective = ObjectiveKind(objective) if objective is not None else default_objective(dataset)
    if objective == ObjectiveKind.GT_RMSE and dataset.truth is None:
        raise ConfigurationError("gt-rmse objective needs a truth trajectory", field="objective")
    if workers < 1:
        raise ConfigurationError("workers must be >= 1", field="workers")
    config = config or FuseConfig()
    solver_logger = solver_logger or SolverLogger(LogConfig(log_iterations=False, log_timing=False))

    problem = prepare_problem(dataset, config, reanchor=config.window == 0)
    pairs = [(alpha, c) for alpha in grid.alphas for c in grid.cs]
    logger.info(
        f"Grid search over {len(pairs)} cells ({objective.value})",
        extra={"cells": len(pairs), "workers": workers},
    )

    def run(pair: Tuple[float, float]) -> TuneCell:
        return evaluate_cell(dataset, problem, config, pair[0], pair[1], objective, solver_logger)

    if workers == 1:
        cells: List[TuneCell] = [run(pair) for pair in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            cells = list(executor.map(run, pairs))

    valid = [cell for cell in cells if not cell.failed]
    if not valid:
        raise TuningError(f"All {len(cells)} grid cells failed", failed_cells=len(cells))
    best = min(valid, key=_rank)
    failed = len(cells) - len(valid)
    if failed:
        logger.warning(f"{failed} of {len(cells)} grid cells failed", extra={"failed_cells": failed})
    logger.info(
        f"Best cell alpha={best.alpha:g} c={best.c:g} objective={best.objective:.6g}",
        extra={"alpha": best.alpha, "c": best.c},
    )
    return TuneResult(
        objective=objective,
        cells=cells,
        best_alpha=best.alpha,
        best_c=best.c,
        best_objective=best.objective,
    )


def format_tune_report(result: TuneResult) -> str:
    """One ``alpha c objective`` line per cell followed by the best cell."""
    lines = []
    for cell in result.cells:
        value = "failed" if cell.failed else f"{cell.objective:.10g}"
        lines.append(f"alpha={cell.alpha:g} c={cell.c:g} objective={value}")
    lines.append(
        f"best alpha={result.best_alpha:g} c={result.best_c:g} "
        f"objective={result.best_objective:.10g} kind={result.objective.value} "
        f"failed_cells={len(result.failed_cells)}"
    )
    return "\n".join(lines) + "\n"
