"""Fixed-lag sliding-window smoothing with marginalization priors."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from robustnav.exceptions import ConfigurationError
from robustnav.factors import PriorFactor, Values, epoch_keys, factor_keys, retract_value
from robustnav.graph import FactorGraph
from robustnav.logging import SolverLogger
from robustnav.models import SolverConfig
from robustnav.solver import SolverReport, optimize
from robustnav.state import ImuBias, NavState

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-12


@dataclass(frozen=True)
class EpochEstimate:
    """Navigation state, bias and clock of one epoch."""

    state: NavState
    bias: ImuBias
    clock: float

    @classmethod
    def from_values(cls, values: Values, epoch: int) -> "EpochEstimate":
        return cls(values.nav_state(epoch), values.bias(epoch), values.clock(epoch))


@dataclass
class MarginalizationResult:
    """Outcome of one window slide."""

    dropped_epochs: List[int] = field(default_factory=list)
    prior: Optional[PriorFactor] = None
    estimates: Dict[int, EpochEstimate] = field(default_factory=dict)


def marginalize_epochs(graph: FactorGraph, values: Values, epochs: List[int]) -> Optional[PriorFactor]:
    """Replace some epochs by a Gaussian prior on the variables they touch.

    The factors touching the dropped variables are linearized at ``values``
    (IRLS-weighted) and the dropped block is eliminated with a Schur
    complement. The graph loses those epochs and gains the prior.

    Returns:
        The inserted prior, or None when nothing remained connected.
    """
    present = set(graph.keys)
    drop = [key for epoch in sorted(epochs) for key in epoch_keys(epoch) if key in present]
    if not drop:
        return None
    touching = graph.factors_touching(drop)
    dropped = set(drop)
    boundary = [key for key in factor_keys(touching) if key not in dropped]

    prior = None
    if boundary:
        ordering = drop + boundary
        hessian, gradient = graph.linearize(values, ordering, touching).normal_equations()
        hessian = hessian.toarray()
        m = sum(key.dim for key in drop)

        h_mm = hessian[:m, :m]
        h_mb = hessian[:m, m:]
        h_bb = hessian[m:, m:]
        try:
            solved = linalg.solve(h_mm, np.column_stack([h_mb, gradient[:m]]), assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            solved = np.linalg.lstsq(h_mm, np.column_stack([h_mb, gradient[:m]]), rcond=None)[0]
        info = h_bb - h_mb.T @ solved[:, :-1]
        grad = gradient[m:] - h_mb.T @ solved[:, -1]

        info = 0.5 * (info + info.T)
        eigenvalues, eigenvectors = np.linalg.eigh(info)
        floor = EIGENVALUE_FLOOR * max(float(eigenvalues.max()), 1.0)
        informative = eigenvalues > floor
        inverse = np.where(informative, 1.0 / np.maximum(eigenvalues, floor), 0.0)
        shift = -eigenvectors @ (inverse * (eigenvectors.T @ grad))
        sqrt_info = np.sqrt(np.maximum(eigenvalues, floor))[:, None] * eigenvectors.T

        means = {}
        column = 0
        for key in boundary:
            means[key] = retract_value(key.kind, values[key], shift[column:column + key.dim])
            column += key.dim
        prior = PriorFactor(means, sqrt_info)

    graph.remove_epochs(epochs)
    if prior is not None:
        graph.add_prior(prior)
    logger.debug(
        f"Marginalized epochs {sorted(epochs)} into a prior on {len(boundary)} variables",
        extra={"epochs": sorted(epochs), "factors": len(touching)},
    )
    return prior


def slide_window(graph: FactorGraph, values: Values, new_epoch: int, lag: int) -> MarginalizationResult:
    """Marginalize every epoch older than ``new_epoch - lag``.

    Args:
        graph: Window graph, modified in place.
        values: Current estimate; entries of dropped epochs are removed.
        new_epoch: Most recent epoch.
        lag: Number of past epochs kept besides ``new_epoch``.

    Raises:
        ConfigurationError: If ``lag < 1``.
    """
    if lag < 1:
        raise ConfigurationError(f"window lag must be >= 1, got {lag}", field="window")
    oldest = new_epoch - lag
    stale = [epoch for epoch in graph.epochs if epoch < oldest]
    result = MarginalizationResult(dropped_epochs=stale)
    if not stale:
        return result

    for epoch in stale:
        result.estimates[epoch] = EpochEstimate.from_values(values, epoch)
    result.prior = marginalize_epochs(graph, values, stale)
    for epoch in stale:
        for key in epoch_keys(epoch):
            if key in values:
                values.pop(key)
    return result


class FixedLagSmoother:
    """Keeps the newest ``lag + 1`` epochs in a graph and re-solves it per epoch."""

    def __init__(
        self,
        lag: int,
        config: Optional[SolverConfig] = None,
        solver_logger: Optional[SolverLogger] = None,
    ) -> None:
        if lag < 1:
            raise ConfigurationError(f"window lag must be >= 1, got {lag}", field="window")
        self.lag = lag
        self.config = config or SolverConfig()
        self.solver_logger = solver_logger or SolverLogger()
        self.graph = FactorGraph()
        self.values = Values()
        self.reports: List[SolverReport] = []
        self._finished: Dict[int, EpochEstimate] = {}

    def add_epoch(self, epoch: int, state: NavState, bias: ImuBias, clock: float) -> None:
        """Declare an epoch's variables with their initial guess."""
        self.graph.add_epoch(epoch)
        self.values.insert_epoch(epoch, state, bias, clock)

    def update(self, new_epoch: int) -> SolverReport:
        """Slide the window to ``new_epoch`` and re-solve it."""
        slid = slide_window(self.graph, self.values, new_epoch, self.lag)
        self._finished.update(slid.estimates)
        self.values, report = optimize(self.graph, self.values, self.config, self.solver_logger)
        self.reports.append(report)
        return report

    def estimate(self, epoch: int) -> EpochEstimate:
        """Marginalization-time estimate for old epochs, latest solve otherwise."""
        if epoch in self._finished:
            return self._finished[epoch]
        return EpochEstimate.from_values(self.values, epoch)

    def estimates(self) -> Dict[int, EpochEstimate]:
        """Estimates of every epoch seen so far."""
        merged = dict(self._finished)
        for epoch in self.graph.epochs:
            merged[epoch] = EpochEstimate.from_values(self.values, epoch)
        return dict(sorted(merged.items()))

    def window_epochs(self) -> Tuple[int, ...]:
        return tuple(self.graph.epochs)
