"""Single-epoch iterative weighted least-squares positioning."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from robustnav.exceptions import GeometryError, InsufficientObservationsError
from robustnav.geo import EcefCoord
from robustnav.state import SatObservation

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 20
STEP_TOLERANCE = 1e-8
STAGNATION_STEP = 1e-4
MAX_CONDITION = 1e12
MIN_OBSERVATIONS = 4


@dataclass(frozen=True)
class WlsSolution:
    """Receiver position/clock fix with its 4x4 covariance over ``[x, y, z, clock]``."""

    position: EcefCoord
    clock: float
    covariance: np.ndarray
    iterations: int
    converged: bool
    residuals: np.ndarray

    @property
    def position_array(self) -> np.ndarray:
        return self.position.as_array()

    @property
    def position_covariance(self) -> np.ndarray:
        """3x3 position block of the covariance."""
        return self.covariance[:3, :3]


def wls_solve_epoch(
    observations: Sequence[SatObservation],
    init: Optional[Tuple[Union[EcefCoord, np.ndarray], float]] = None,
    weighted: bool = True,
) -> WlsSolution:
    """Gauss-Newton fix of position and clock from one epoch of pseudoranges.

    Iteration stops when a step is shorter than ``STEP_TOLERANCE``. At Earth
    radius scale round-off can keep steps above that, so a step under
    ``STAGNATION_STEP`` that is at least half the previous one also counts
    as converged.

    Args:
        observations: Pseudoranges of one epoch.
        init: Initial ``(position, clock)``; defaults to the Earth's center
            with zero clock.
        weighted: Weight rows by ``1/sigma``; unit weights otherwise.

    Returns:
        The solution. Hitting the iteration limit yields ``converged=False``.

    Raises:
        InsufficientObservationsError: With fewer than 4 observations.
        GeometryError: If the design matrix condition number exceeds 1e12.
    """
    if len(observations) < MIN_OBSERVATIONS:
        raise InsufficientObservationsError(
            "WLS needs at least four pseudoranges", count=len(observations), required=MIN_OBSERVATIONS
        )

    sats = np.array([obs.sat_position for obs in observations])
    rho = np.array([obs.pseudorange for obs in observations])
    weights = (
        np.array([1.0 / obs.sigma for obs in observations]) if weighted else np.ones(len(observations))
    )

    x = np.zeros(4)
    if init is not None:
        position, clock = init
        x[:3] = position.as_array() if isinstance(position, EcefCoord) else np.asarray(position, dtype=float)
        x[3] = clock

    converged = False
    previous_step = np.inf
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        line_of_sight = sats - x[:3]
        ranges = np.linalg.norm(line_of_sight, axis=1)
        residuals = rho - (ranges + x[3])
        design = np.column_stack([-line_of_sight / ranges[:, None], np.ones(len(observations))])

        weighted_design = design * weights[:, None]
        condition = float(np.linalg.cond(weighted_design))
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise GeometryError(
                f"Satellite geometry is degenerate (condition number {condition:.3g})",
                condition_number=condition,
            )

        step = np.linalg.lstsq(weighted_design, residuals * weights, rcond=None)[0]
        x += step
        step_norm = float(np.linalg.norm(step))
        if step_norm < STEP_TOLERANCE or (
            step_norm < STAGNATION_STEP and step_norm >= 0.5 * previous_step
        ):
            converged = True
            break
        previous_step = step_norm

    line_of_sight = sats - x[:3]
    ranges = np.linalg.norm(line_of_sight, axis=1)
    residuals = rho - (ranges + x[3])
    weighted_design = np.column_stack(
        [-line_of_sight / ranges[:, None], np.ones(len(observations))]
    ) * weights[:, None]
    covariance = np.linalg.pinv(weighted_design.T @ weighted_design)
    covariance = 0.5 * (covariance + covariance.T)

    if not converged:
        logger.warning(
            f"WLS did not converge in {MAX_ITERATIONS} iterations",
            extra={"observations": len(observations), "last_step": previous_step},
        )
    return WlsSolution(
        position=EcefCoord.from_array(x[:3]),
        clock=float(x[3]),
        covariance=covariance,
        iterations=iterations,
        converged=converged,
        residuals=residuals,
    )
