"""Innovation gating for sequential Kalman updates."""

import math
from dataclasses import dataclass, field
from typing import Dict

from robustnav.exceptions import ConfigurationError


@dataclass
class GateMetrics:
    """Counters for gate decisions."""

    total: int = 0
    accepted: int = 0
    rejected: int = 0
    rejected_by_epoch: Dict[int, int] = field(default_factory=dict)

    @property
    def rejection_rate(self) -> float:
        """Fraction of tested innovations that were rejected."""
        if self.total == 0:
            return 0.0
        return self.rejected / self.total

    def reset(self) -> None:
        """Reset metrics."""
        self.total = 0
        self.accepted = 0
        self.rejected = 0
        self.rejected_by_epoch.clear()


class InnovationGate:
    """Normalized innovation test ``|y| <= k * sqrt(S)``."""

    def __init__(self, sigma: float = 5.0) -> None:
        """Initialize the gate.

        Args:
            sigma: Gate width in standard deviations.

        Raises:
            ConfigurationError: If ``sigma`` is not positive and finite.
        """
        if not (math.isfinite(sigma) and sigma > 0):
            raise ConfigurationError(f"gate sigma must be positive, got {sigma}", field="gate_sigma")
        self.sigma = sigma
        self._metrics = GateMetrics()

    @property
    def metrics(self) -> GateMetrics:
        """Gate counters."""
        return self._metrics

    def test(self, innovation: float, variance: float, epoch: int = -1) -> bool:
        """Decide whether an innovation passes.

        Args:
            innovation: Measurement minus prediction.
            variance: Innovation variance ``S``.
            epoch: Epoch index, used for per-epoch counters.

        Returns:
            True if the update should be applied.
        """
        self._metrics.total += 1
        passed = math.isfinite(innovation) and variance > 0 and (
            abs(innovation) <= self.sigma * math.sqrt(variance)
        )
        if passed:
            self._metrics.accepted += 1
        else:
            self._metrics.rejected += 1
            self._metrics.rejected_by_epoch[epoch] = self._metrics.rejected_by_epoch.get(epoch, 0) + 1
        return passed

    def reset(self) -> None:
        """Reset counters."""
        self._metrics.reset()
