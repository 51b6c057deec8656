"""Positioning error metrics, CDF/PDF data and text reports."""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np

from robustnav.exceptions import ConfigurationError, DataFormatError
from robustnav.geo import EcefCoord, FrameRef
from robustnav.models import CdfReport, ErrorMetrics, ErrorMode, PdfReport
from robustnav.state import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_ALIGNMENT_TOLERANCE = 0.5
CDF_PERCENTILES = (50, 68, 90, 95, 99)
PDF_BINS = 64
REPORT_FIELDS = (("RMSE", "rmse"), ("ME", "mean_error"), ("MaxE", "max_error"), ("SD", "std_dev"))


@dataclass
class AlignedErrors:
    """ENU errors of the matched epochs."""

    times: np.ndarray
    enu: np.ndarray
    dropped: int

    def norms(self, mode: ErrorMode = ErrorMode.HORIZONTAL) -> np.ndarray:
        """Error norm per epoch: East/North only in 2D mode."""
        components = self.enu[:, :2] if mode == ErrorMode.HORIZONTAL else self.enu
        return np.linalg.norm(components, axis=1)


def align_errors(
    estimate: Trajectory,
    truth: Trajectory,
    tolerance: float = DEFAULT_ALIGNMENT_TOLERANCE,
) -> AlignedErrors:
    """Match estimate epochs to the nearest truth epoch within ``tolerance``.

    Errors are expressed in the ENU frame at truth's first position.

    Raises:
        DataFormatError: If no epoch can be matched.
    """
    if not len(estimate) or not len(truth):
        raise DataFormatError("cannot compare empty trajectories")
    truth_times = np.asarray(truth.times)
    est_times = np.asarray(estimate.times)

    right = np.clip(np.searchsorted(truth_times, est_times), 0, len(truth_times) - 1)
    left = np.clip(right - 1, 0, len(truth_times) - 1)
    nearest = np.where(
        np.abs(truth_times[left] - est_times) <= np.abs(truth_times[right] - est_times), left, right
    )
    matched = np.abs(truth_times[nearest] - est_times) <= tolerance
    if not np.any(matched):
        raise DataFormatError("estimate and truth share no epochs")

    truth_positions = truth.positions()
    frame = FrameRef.from_ecef(EcefCoord.from_array(truth_positions[0]))
    difference = estimate.positions()[matched] - truth_positions[nearest[matched]]
    dropped = int(np.count_nonzero(~matched))
    if dropped:
        logger.warning(
            f"Dropped {dropped} estimate epochs without a truth match",
            extra={"dropped": dropped, "tolerance": tolerance},
        )
    return AlignedErrors(times=est_times[matched], enu=difference @ frame.rotation.T, dropped=dropped)


def metrics_from_errors(
    enu: np.ndarray,
    mode: ErrorMode = ErrorMode.HORIZONTAL,
    dropped: int = 0,
) -> ErrorMetrics:
    """Summary statistics of ENU error vectors.

    Raises:
        ConfigurationError: If ``enu`` is empty.
    """
    enu = np.atleast_2d(np.asarray(enu, dtype=float))
    if enu.size == 0:
        raise ConfigurationError("no errors to summarize")
    norms = np.linalg.norm(enu[:, :2] if mode == ErrorMode.HORIZONTAL else enu, axis=1)
    axis_rmse = np.sqrt(np.mean(enu ** 2, axis=0))
    return ErrorMetrics(
        mode=mode,
        rmse=float(np.sqrt(np.mean(norms ** 2))),
        mean_error=float(np.mean(norms)),
        max_error=float(np.max(norms)),
        std_dev=float(np.std(norms)),
        rmse_east=float(axis_rmse[0]),
        rmse_north=float(axis_rmse[1]),
        rmse_up=float(axis_rmse[2]),
        count=len(norms),
        dropped=dropped,
    )


def compute_metrics(
    estimate: Trajectory,
    truth: Trajectory,
    mode: Union[ErrorMode, str] = ErrorMode.HORIZONTAL,
    tolerance: float = DEFAULT_ALIGNMENT_TOLERANCE,
) -> ErrorMetrics:
    """RMSE, ME, MaxE and SD of position errors against truth.

    Args:
        estimate: Estimated trajectory.
        truth: Reference trajectory.
        mode: ``2d`` (East/North) or ``3d``.
        tolerance: Largest timestamp gap (s) for nearest-neighbor matching.

    Raises:
        DataFormatError: If the trajectories share no epochs.
    """
    mode = ErrorMode(mode)
    aligned = align_errors(estimate, truth, tolerance)
    return metrics_from_errors(aligned.enu, mode, aligned.dropped)


def error_norms(
    estimate: Trajectory,
    truth: Trajectory,
    mode: Union[ErrorMode, str] = ErrorMode.HORIZONTAL,
    tolerance: float = DEFAULT_ALIGNMENT_TOLERANCE,
) -> np.ndarray:
    return align_errors(estimate, truth, tolerance).norms(ErrorMode(mode))


def compute_cdf(errors: Sequence[float], percentiles: Sequence[float] = CDF_PERCENTILES) -> CdfReport:
    """Empirical CDF with a linear-interpolation percentile table.

    Raises:
        ConfigurationError: If ``errors`` is empty.
    """
    samples = np.sort(np.asarray(errors, dtype=float))
    if samples.size == 0:
        raise ConfigurationError("CDF needs at least one error sample")
    fractions = np.arange(1, samples.size + 1) / samples.size
    table = {f"p{q:g}": float(np.percentile(samples, q)) for q in percentiles}
    return CdfReport(samples=samples.tolist(), fractions=fractions.tolist(), percentiles=table)


def compute_pdf(errors: Sequence[float], bins: int = PDF_BINS) -> PdfReport:
    """Histogram density over ``[0, max(errors)]``.

    Raises:
        ConfigurationError: If ``errors`` is empty or ``bins < 1``.
    """
    samples = np.asarray(errors, dtype=float)
    if samples.size == 0:
        raise ConfigurationError("PDF needs at least one error sample")
    if bins < 1:
        raise ConfigurationError("bins must be positive", field="bins")
    upper = float(samples.max())
    density, edges = np.histogram(samples, bins=bins, range=(0.0, upper if upper > 0 else 1.0), density=True)
    return PdfReport(edges=edges.tolist(), density=density.tolist())


def improvement(candidate: ErrorMetrics, baseline: ErrorMetrics) -> Dict[str, float]:
    """Percentage reduction of each headline metric of ``candidate`` vs ``baseline``."""
    result = {}
    for label, name in REPORT_FIELDS:
        reference = getattr(baseline, name)
        value = getattr(candidate, name)
        result[label] = 100.0 * (reference - value) / reference if reference > 0 else 0.0
    return result


def format_metrics(metrics: ErrorMetrics, name: Optional[str] = None, precision: int = 4) -> str:
    """One ``key=value`` line per report."""
    parts = [f"estimator={name}"] if name else []
    parts.append(f"mode={metrics.mode.value}")
    parts.extend(f"{label}={getattr(metrics, field):.{precision}f}" for label, field in REPORT_FIELDS)
    parts.append(f"count={metrics.count}")
    parts.append(f"dropped={metrics.dropped}")
    return " ".join(parts)


def format_metrics_report(reports: Mapping[str, ErrorMetrics], reference: Optional[str] = None) -> str:
    """Multi-estimator report, optionally followed by improvements of ``reference``."""
    lines = [format_metrics(metrics, name) for name, metrics in reports.items()]
    if reference is not None and reference in reports:
        for name, metrics in reports.items():
            if name == reference:
                continue
            gains = improvement(reports[reference], metrics)
            lines.append(
                f"improvement={reference}_vs_{name} "
                + " ".join(f"{label}={value:.2f}%" for label, value in gains.items())
            )
    return "\n".join(lines) + "\n"


def format_cdf_report(cdf: CdfReport) -> str:
    """Percentile table as ``key=value`` text."""
    lines = [f"count={len(cdf.samples)}"]
    lines.extend(f"{key}={value:.4f}" for key, value in cdf.percentiles.items())
    return "\n".join(lines) + "\n"
