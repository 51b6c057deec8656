"""Pydantic models for RobustNav configuration and reports."""

from enum import Enum
from statistics import median
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from robustnav.robust import KernelKind, RobustKernel

Vector3 = Tuple[float, float, float]
Waypoint = Tuple[float, float, float, float]

DEFAULT_ROUTE: List[Waypoint] = [
    (0.0, 0.0, 0.0, 3.4),
    (150.0, -10.0, 0.0, 3.4),
    (300.0, 0.0, 0.0, 3.4),
    (310.0, 100.0, 0.0, 3.4),
    (300.0, 200.0, 0.0, 3.4),
    (150.0, 210.0, 0.0, 3.4),
    (0.0, 200.0, 0.0, 3.4),
    (-10.0, 100.0, 0.0, 3.4),
    (0.0, 0.0, 0.0, 3.4),
]


def _split_numbers(value: str) -> List[float]:
    return [float(part) for part in value.replace(" ", "").split(",") if part]


class FusionMode(str, Enum):
    """GNSS/IMU coupling modes."""
    TC = "tc"
    LC = "lc"


class SolverAlgorithm(str, Enum):
    """Nonlinear least-squares algorithms."""
    GAUSS_NEWTON = "gauss_newton"
    LEVENBERG_MARQUARDT = "levenberg_marquardt"


class ObjectiveKind(str, Enum):
    """Grid-search objectives."""
    RESIDUAL_MSE = "residual-mse"
    GT_RMSE = "gt-rmse"


class ErrorMode(str, Enum):
    """Positioning error dimensionality."""
    HORIZONTAL = "2d"
    SPATIAL = "3d"


class ImuNoiseParams(BaseModel):
    """Continuous-time IMU noise model assumed by the estimators."""

    gyro_noise_density: float = Field(default=1e-3, gt=0, description="rad/s/sqrt(Hz)")
    accel_noise_density: float = Field(default=1e-2, gt=0, description="m/s^2/sqrt(Hz)")
    gyro_bias_walk: float = Field(default=1e-5, gt=0, description="rad/s^2/sqrt(Hz)")
    accel_bias_walk: float = Field(default=1e-4, gt=0, description="m/s^3/sqrt(Hz)")


class OutlierConfig(BaseModel):
    """Pseudorange outlier injection settings."""

    model_config = ConfigDict(extra="forbid")

    fraction: float = Field(default=0.3, ge=0.0, le=1.0)
    bias_min: float = Field(default=10.0, gt=0, description="Smallest injected bias (m)")
    bias_max: float = Field(default=50.0, gt=0, description="Largest injected bias (m)")
    burst_windows: List[Tuple[int, int]] = Field(
        default_factory=lambda: [(80, 120), (180, 220)],
        description="Epoch intervals [start, end) receiving outliers",
    )
    symmetric: bool = False

    @field_validator("burst_windows", mode="before")
    @classmethod
    def parse_windows(cls, v: Any) -> Any:
        """Accept ``"80:120, 180:220"`` as well as a list of pairs."""
        if isinstance(v, str):
            windows = []
            for chunk in v.split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                start, _, end = chunk.partition(":")
                windows.append((int(start), int(end)))
            return windows
        return v

    @field_validator("burst_windows")
    @classmethod
    def validate_windows(cls, v: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        """Ensure every window is a non-empty, non-negative interval."""
        for start, end in v:
            if start < 0 or end <= start:
                raise ValueError(f"invalid burst window {start}:{end}")
        return v

    @model_validator(mode="after")
    def check_bias_range(self) -> "OutlierConfig":
        """Ensure the bias range is ordered."""
        if self.bias_max < self.bias_min:
            raise ValueError("bias_max must be >= bias_min")
        return self

    def in_burst(self, epoch: int) -> bool:
        """Check whether an epoch index falls inside a burst window."""
        return any(start <= epoch < end for start, end in self.burst_windows)


class ScenarioConfig(BaseModel):
    """Configuration of a synthetic GNSS/IMU scenario."""

    model_config = ConfigDict(extra="forbid")

    duration: float = Field(default=300.0, gt=0, description="Scenario length (s)")
    imu_rate: float = Field(default=100.0, gt=0, description="IMU rate (Hz)")
    gnss_rate: float = Field(default=1.0, gt=0, description="GNSS rate (Hz)")
    route: List[Waypoint] = Field(default_factory=lambda: list(DEFAULT_ROUTE))
    imu_noise: ImuNoiseParams = Field(default_factory=ImuNoiseParams)
    initial_gyro_bias: Vector3 = (5e-4, -3e-4, 2e-4)
    initial_accel_bias: Vector3 = (0.05, -0.03, 0.02)
    min_satellites: int = Field(default=13, ge=4)
    max_satellites: int = Field(default=28, ge=4)
    pseudorange_sigma: float = Field(default=2.0, gt=0, description="Pseudorange noise (m)")
    clock_walk_sigma: float = Field(default=0.5, ge=0, description="Clock walk per epoch (m)")
    initial_clock_bias: float = Field(default=3000.0, description="Receiver clock bias (m)")
    outliers: OutlierConfig = Field(default_factory=OutlierConfig)
    noise_scale: float = Field(default=1.0, ge=0, description="Multiplier on every random draw")
    elevation_weighting: bool = False
    origin_latitude_deg: float = Field(default=22.3, ge=-90.0, le=90.0)
    origin_longitude_deg: float = Field(default=114.17, ge=-180.0, le=180.0)
    origin_height: float = 10.0
    seed: int = Field(default=0, ge=0)

    @field_validator("route", mode="before")
    @classmethod
    def parse_route(cls, v: Any) -> Any:
        """Accept ``"e,n,u,speed; e,n,u,speed"`` as well as a list of tuples."""
        if isinstance(v, str):
            return [tuple(_split_numbers(chunk)) for chunk in v.split(";") if chunk.strip()]
        return v

    @field_validator("initial_gyro_bias", "initial_accel_bias", mode="before")
    @classmethod
    def parse_vector(cls, v: Any) -> Any:
        """Accept ``"x,y,z"`` as well as a sequence."""
        if isinstance(v, str):
            return tuple(_split_numbers(v))
        return v

    @field_validator("route")
    @classmethod
    def validate_route(cls, v: List[Waypoint]) -> List[Waypoint]:
        """Ensure there is at least one waypoint and speeds are positive."""
        if not v:
            raise ValueError("route needs at least one waypoint")
        for waypoint in v:
            if not np.all(np.isfinite(waypoint)):
                raise ValueError("route waypoints must be finite")
            if len(v) > 1 and waypoint[3] <= 0:
                raise ValueError("waypoint speeds must be positive")
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> "ScenarioConfig":
        """Check satellite range and sensor-rate compatibility."""
        if self.max_satellites < self.min_satellites:
            raise ValueError("max_satellites must be >= min_satellites")
        ratio = self.imu_rate / self.gnss_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("imu_rate must be an integer multiple of gnss_rate")
        return self

    @property
    def imu_per_epoch(self) -> int:
        """IMU samples per GNSS epoch."""
        return int(round(self.imu_rate / self.gnss_rate))

    @property
    def epoch_count(self) -> int:
        """Number of GNSS epochs, including the one at t = 0."""
        return int(np.floor(self.duration * self.gnss_rate + 1e-9)) + 1


class SolverConfig(BaseModel):
    """Nonlinear least-squares solver settings."""

    model_config = ConfigDict(extra="forbid")

    algorithm: SolverAlgorithm = SolverAlgorithm.LEVENBERG_MARQUARDT
    max_iterations: int = Field(default=50, ge=1)
    abs_cost_tolerance: float = Field(default=1e-9, gt=0)
    rel_cost_tolerance: float = Field(default=1e-7, gt=0)
    initial_damping: float = Field(default=1e-4, gt=0)
    damping_increase: float = Field(default=10.0, gt=1)
    damping_decrease: float = Field(default=10.0, gt=1)
    max_damping: float = Field(default=1e10, gt=0)
    max_damping_retries: int = Field(default=8, ge=1)


class PriorConfig(BaseModel):
    """Standard deviations of the first-epoch priors."""

    attitude_sigma: float = Field(default=0.02, gt=0, description="rad")
    position_sigma: float = Field(default=30.0, gt=0, description="m")
    velocity_sigma: float = Field(default=0.5, gt=0, description="m/s")
    accel_bias_sigma: float = Field(default=0.1, gt=0, description="m/s^2")
    gyro_bias_sigma: float = Field(default=0.01, gt=0, description="rad/s")
    clock_sigma: float = Field(default=1e4, gt=0, description="m")


class FuseConfig(BaseModel):
    """Configuration of a factor-graph fusion run."""

    model_config = ConfigDict(extra="forbid")

    mode: FusionMode = FusionMode.TC
    loss: KernelKind = KernelKind.BARRON
    alpha: float = Field(default=-0.75, description="Barron shape")
    c: float = Field(default=1.2, gt=0, description="Barron scale")
    threshold: Optional[float] = Field(default=None, gt=0, description="Huber/Tukey/Cauchy parameter")
    window: int = Field(default=0, ge=0, description="Sliding-window lag (0 = full batch)")
    solver: SolverConfig = Field(default_factory=SolverConfig)
    imu_noise: ImuNoiseParams = Field(default_factory=ImuNoiseParams)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    clock_walk_sigma: float = Field(default=0.5, gt=0, description="m per epoch")
    gravity: float = Field(default=9.81, gt=0)
    two_stage: bool = Field(default=True, description="Quadratic warm start before a robust batch solve")

    def kernel(self) -> Optional[RobustKernel]:
        """Build the robust kernel for GNSS factors (None means quadratic)."""
        if self.loss == KernelKind.L2:
            return None
        return RobustKernel.from_name(
            self.loss.value, alpha=self.alpha, c=self.c, threshold=self.threshold
        )

    @classmethod
    def for_scenario(cls, scenario: ScenarioConfig, **overrides: Any) -> "FuseConfig":
        """Match estimator noise parameters to a scenario's sensor model."""
        clock_sigma = max(scenario.clock_walk_sigma, 1e-3)
        base: Dict[str, Any] = {
            "imu_noise": scenario.imu_noise,
            "clock_walk_sigma": clock_sigma,
        }
        base.update(overrides)
        return cls(**base)


class EkfConfig(BaseModel):
    """Configuration of the tightly coupled error-state EKF."""

    gyro_noise_density: float = Field(default=1e-3, ge=0)
    accel_noise_density: float = Field(default=1e-2, ge=0)
    gyro_bias_walk: float = Field(default=1e-5, ge=0)
    accel_bias_walk: float = Field(default=1e-4, ge=0)
    clock_walk_sigma: float = Field(default=0.5, ge=0, description="m per epoch")
    gnss_rate: float = Field(default=1.0, gt=0)
    gate_sigma: float = Field(default=5.0, gt=0, description="Innovation gate in sigmas")
    gravity: float = Field(default=9.81, gt=0)
    prior: PriorConfig = Field(default_factory=PriorConfig)

    @classmethod
    def from_noise(
        cls,
        noise: ImuNoiseParams,
        clock_walk_sigma: float = 0.5,
        gnss_rate: float = 1.0,
        **overrides: Any,
    ) -> "EkfConfig":
        """Create an EKF configuration matching the graph's noise model."""
        return cls(
            gyro_noise_density=noise.gyro_noise_density,
            accel_noise_density=noise.accel_noise_density,
            gyro_bias_walk=noise.gyro_bias_walk,
            accel_bias_walk=noise.accel_bias_walk,
            clock_walk_sigma=clock_walk_sigma,
            gnss_rate=gnss_rate,
            **overrides,
        )


class GridSpec(BaseModel):
    """Barron (alpha, c) grid for parameter tuning."""

    alphas: List[float] = Field(default_factory=lambda: _arange(-4.0, 4.0, 0.5))
    cs: List[float] = Field(default_factory=lambda: _arange(0.1, 2.0, 0.1))

    @field_validator("alphas")
    @classmethod
    def validate_alphas(cls, v: List[float]) -> List[float]:
        """Alpha values must lie in [-4, 4]."""
        if not v:
            raise ValueError("alpha grid is empty")
        if any(not -4.0 <= a <= 4.0 for a in v):
            raise ValueError("alpha grid must lie within [-4, 4]")
        return v

    @field_validator("cs")
    @classmethod
    def validate_cs(cls, v: List[float]) -> List[float]:
        """Scale values must lie in (0, 2]."""
        if not v:
            raise ValueError("c grid is empty")
        if any(not 0.0 < c <= 2.0 for c in v):
            raise ValueError("c grid must lie within (0, 2]")
        return v

    @classmethod
    def from_ranges(cls, alpha_range: Optional[str] = None, c_range: Optional[str] = None) -> "GridSpec":
        """Build a grid from ``lo:hi:step`` strings."""
        values: Dict[str, List[float]] = {}
        if alpha_range:
            values["alphas"] = _parse_range(alpha_range)
        if c_range:
            values["cs"] = _parse_range(c_range)
        return cls(**values)

    @property
    def cell_count(self) -> int:
        """Number of grid cells."""
        return len(self.alphas) * len(self.cs)


def _arange(lo: float, hi: float, step: float) -> List[float]:
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def _parse_range(text: str) -> List[float]:
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"expected lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError("grid step must be positive")
    return _arange(lo, hi, step)


class ErrorMetrics(BaseModel):
    """Positioning error statistics."""

    mode: ErrorMode = ErrorMode.HORIZONTAL
    rmse: float
    mean_error: float
    max_error: float
    std_dev: float
    rmse_east: float
    rmse_north: float
    rmse_up: float
    count: int
    dropped: int = 0


class CdfReport(BaseModel):
    """Empirical cumulative distribution of error norms."""

    samples: List[float]
    fractions: List[float]
    percentiles: Dict[str, float] = Field(default_factory=dict)

    def percentile(self, q: float) -> float:
        """Linear-interpolated percentile of the samples."""
        return float(np.percentile(self.samples, q))

    def fraction_below(self, threshold: float) -> float:
        """Fraction of samples less than or equal to a threshold."""
        index = int(np.searchsorted(self.samples, threshold, side="right"))
        return index / len(self.samples)


class PdfReport(BaseModel):
    """Histogram density of error norms."""

    edges: List[float]
    density: List[float]


class TuneCell(BaseModel):
    """One evaluated grid cell."""

    alpha: float
    c: float
    objective: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None


class TuneResult(BaseModel):
    """Outcome of an (alpha, c) grid search."""

    objective: ObjectiveKind
    cells: List[TuneCell]
    best_alpha: float
    best_c: float
    best_objective: float

    @property
    def failed_cells(self) -> List[TuneCell]:
        """Cells whose solve failed."""
        return [cell for cell in self.cells if cell.failed]


class TimingStats(BaseModel):
    """Per-epoch wall-clock timing of an estimator run."""

    estimator: str
    per_epoch: List[float] = Field(default_factory=list)

    @property
    def mean(self) -> float:
        """Mean per-epoch time in seconds."""
        if not self.per_epoch:
            return 0.0
        return float(np.mean(self.per_epoch))

    @property
    def median(self) -> float:
        """Median per-epoch time in seconds."""
        if not self.per_epoch:
            return 0.0
        return float(median(self.per_epoch))
