"""Structured solver and estimator logging for RobustNav."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional


@dataclass
class LogConfig:
    """Configuration for logging behavior."""

    level: str = "INFO"
    log_iterations: bool = True
    log_timing: bool = True
    log_gate_events: bool = True
    float_format: str = ".10g"


class SolverLogger:
    """Emits solver iterations as stable key-value lines plus run summaries."""

    def __init__(self, config: Optional[LogConfig] = None, name: str = "robustnav.solver") -> None:
        """Initialize solver logger.

        Args:
            config: Logging configuration.
            name: Logger name.
        """
        self.config = config or LogConfig()
        self.logger = logging.getLogger(name)

    def format_iteration(self, iteration: int, cost: float, damping: float) -> str:
        """Render one iteration record.

        The format is ``iteration=<i> cost=<c> damping=<d>`` so runs can be
        diffed line by line.
        """
        fmt = self.config.float_format
        return f"iteration={iteration} cost={cost:{fmt}} damping={damping:{fmt}}"

    def log_iteration(
        self,
        iteration: int,
        cost: float,
        damping: float,
        accepted: bool = True,
    ) -> None:
        """Log a solver iteration at DEBUG.

        Args:
            iteration: Iteration index (0 is the initial linearization).
            cost: Total cost after the iteration.
            damping: LM damping in use (0 for Gauss-Newton).
            accepted: Whether the step was kept.
        """
        if not self.config.log_iterations:
            return
        line = self.format_iteration(iteration, cost, damping)
        if not accepted:
            line += " rejected"
        self.logger.debug(
            line,
            extra={"iteration": iteration, "cost": cost, "damping": damping, "accepted": accepted},
        )

    def log_solve(
        self,
        iterations: int,
        initial_cost: float,
        final_cost: float,
        converged: bool,
        context: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Log a finished solve: INFO when converged, WARNING otherwise."""
        extra: Dict[str, Any] = {
            "iterations": iterations,
            "initial_cost": initial_cost,
            "final_cost": final_cost,
            "converged": converged,
        }
        if context:
            extra.update(context)

        level = logging.INFO if converged else logging.WARNING
        status = "converged" if converged else "did not converge"
        self.logger.log(
            level,
            f"Solve {status} after {iterations} iterations: cost {initial_cost:.6g} -> {final_cost:.6g}",
            extra=extra,
        )

    def log_damping_retry(self, attempt: int, damping: float, reason: str) -> None:
        """Log a singular normal-equation solve retried with more damping."""
        self.logger.warning(
            f"Damping retry {attempt}: damping={damping:.3g} ({reason})",
            extra={"attempt": attempt, "damping": damping, "reason": reason},
        )

    def log_gate_event(self, epoch: int, rejected: int, total: int) -> None:
        """Log innovations rejected by the EKF gate during one epoch."""
        if not self.config.log_gate_events or rejected == 0:
            return
        self.logger.warning(
            f"Innovation gate rejected {rejected}/{total} pseudoranges at epoch {epoch}",
            extra={"epoch": epoch, "rejected": rejected, "total": total},
        )

    def log_epoch_timing(self, estimator: str, epoch: int, seconds: float) -> None:
        """Log the wall time of one epoch update at DEBUG."""
        if not self.config.log_timing:
            return
        self.logger.debug(
            f"{estimator} epoch {epoch} took {seconds * 1e3:.3f} ms",
            extra={"estimator": estimator, "epoch": epoch, "duration_seconds": seconds},
        )

    def log_error(self, error: Exception, context: Optional[Dict[str, Any]] = None) -> None:
        """Log an estimation failure.

        Args:
            error: The exception.
            context: Additional context.
        """
        extra: Dict[str, Any] = {"error_type": type(error).__name__}
        if context:
            extra.update(context)
        self.logger.error(f"Estimation error: {error}", extra=extra)


def setup_logging(
    level: str = "INFO",
    format_string: Optional[str] = None,
) -> None:
    """Set up logging for RobustNav.

    Args:
        level: Log level.
        format_string: Custom format string.
    """
    if format_string is None:
        format_string = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=format_string,
        force=True,
    )
