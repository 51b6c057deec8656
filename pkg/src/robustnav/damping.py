"""Levenberg-Marquardt damping schedule and retried linear solves."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt

from robustnav.exceptions import SingularSystemError
from robustnav.logging import SolverLogger
from robustnav.models import SolverConfig

logger = logging.getLogger(__name__)

MIN_DAMPING = 1e-12


@dataclass
class DampingSchedule:
    """Multiplicative damping updates.

    The damping drops after an accepted step and grows after a rejected
    step or a singular factorization.
    """

    initial: float = 1e-4
    increase: float = 10.0
    decrease: float = 10.0
    max_damping: float = 1e10
    max_retries: int = 8
    damping: float = 0.0

    def __post_init__(self) -> None:
        if self.damping == 0.0:
            self.damping = self.initial

    @classmethod
    def from_config(cls, config: SolverConfig, enabled: bool = True) -> "DampingSchedule":
        """Build a schedule from solver settings.

        With ``enabled=False`` (Gauss-Newton) the damping starts at zero and
        only grows when a factorization fails.
        """
        schedule = cls(
            initial=config.initial_damping,
            increase=config.damping_increase,
            decrease=config.damping_decrease,
            max_damping=config.max_damping,
            max_retries=config.max_damping_retries,
        )
        if not enabled:
            schedule.damping = 0.0
        return schedule

    def accept(self) -> None:
        """Relax damping after a successful step."""
        if self.damping > 0.0:
            self.damping = max(self.damping / self.decrease, MIN_DAMPING)

    def reject(self) -> None:
        """Raise damping after a failed step."""
        self.damping = max(self.damping, self.initial) * self.increase

    @property
    def exhausted(self) -> bool:
        """True once damping exceeds its ceiling."""
        return self.damping > self.max_damping


@dataclass
class DampingStatistics:
    """Counters for damped solves."""

    total_solves: int = 0
    retries: int = 0
    failures: int = 0

    def reset(self) -> None:
        """Reset statistics."""
        self.total_solves = 0
        self.retries = 0
        self.failures = 0


def solve_damped(
    solve: Callable[[float], np.ndarray],
    schedule: DampingSchedule,
    solver_logger: Optional[SolverLogger] = None,
    stats: Optional[DampingStatistics] = None,
) -> np.ndarray:
    """Run ``solve(damping)``, retrying with more damping when it is singular.

    Args:
        solve: Solves the damped normal equations for the given damping and
            raises :class:`SingularSystemError` when factorization fails.
        schedule: Damping schedule, updated in place on retries.
        solver_logger: Receives one record per retry.
        stats: Optional counters.

    Returns:
        The step returned by ``solve``.

    Raises:
        SingularSystemError: When the system stays singular after
            ``schedule.max_retries`` retries.
    """
    solver_logger = solver_logger or SolverLogger()

    def escalate(retry_state: RetryCallState) -> None:
        schedule.reject()
        if stats is not None:
            stats.retries += 1
        error = retry_state.outcome.exception() if retry_state.outcome else None
        solver_logger.log_damping_retry(retry_state.attempt_number, schedule.damping, str(error))

    retrying = Retrying(
        retry=retry_if_exception_type(SingularSystemError),
        stop=stop_after_attempt(schedule.max_retries + 1),
        after=escalate,
        reraise=True,
    )

    if stats is not None:
        stats.total_solves += 1
    step = None
    try:
        for attempt in retrying:
            with attempt:
                step = solve(schedule.damping)
    except SingularSystemError:
        if stats is not None:
            stats.failures += 1
        raise
    return step
