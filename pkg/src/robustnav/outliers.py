"""NLOS-style pseudorange outlier injection."""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Tuple, Union

import numpy as np

from robustnav.models import OutlierConfig
from robustnav.state import EpochObservations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutlierRecord:
    """One contaminated pseudorange (simulation metadata)."""

    time: float
    sat_id: int
    bias: float


def outlier_count(fraction: float, visible: int) -> int:
    """``ceil(fraction * visible)`` guarded against floating-point overshoot."""
    if fraction <= 0.0 or visible == 0:
        return 0
    return min(visible, math.ceil(fraction * visible - 1e-9))


def inject_outliers(
    epochs: List[EpochObservations],
    config: OutlierConfig,
    rng: Union[np.random.Generator, int, None] = None,
) -> Tuple[List[EpochObservations], List[List[bool]]]:
    """Add positive (or signed) biases to a share of pseudoranges in burst windows.

    Args:
        epochs: Clean observations, indexed by epoch.
        config: Fraction, bias range, burst windows and sign policy.
        rng: Generator or seed for the selection and bias draws.

    Returns:
        The contaminated epochs and, per epoch, a mask of flagged observations.
        Observations outside the mask are the original objects.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    contaminated: List[EpochObservations] = []
    masks: List[List[bool]] = []
    total = 0

    for index, epoch in enumerate(epochs):
        observations = list(epoch.observations)
        mask = [False] * len(observations)
        count = outlier_count(config.fraction, len(observations)) if config.in_burst(index) else 0
        if count:
            chosen = np.sort(rng.choice(len(observations), size=count, replace=False))
            for position in chosen:
                bias = float(rng.uniform(config.bias_min, config.bias_max))
                if config.symmetric and rng.random() < 0.5:
                    bias = -bias
                original = observations[position]
                observations[position] = replace(
                    original,
                    pseudorange=original.pseudorange + bias,
                    is_outlier=True,
                    injected_bias=bias,
                )
                mask[position] = True
            total += count
        contaminated.append(EpochObservations(epoch.time, observations))
        masks.append(mask)

    logger.info(
        f"Injected {total} pseudorange outliers",
        extra={"outliers": total, "fraction": config.fraction},
    )
    return contaminated, masks


def outlier_records(epochs: List[EpochObservations]) -> List[OutlierRecord]:
    """Flatten the outlier metadata of contaminated epochs."""
    return [
        OutlierRecord(obs.time, obs.sat_id, obs.injected_bias)
        for epoch in epochs
        for obs in epoch
        if obs.is_outlier
    ]
