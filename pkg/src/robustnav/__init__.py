"""
RobustNav - Tightly coupled GNSS/IMU factor-graph fusion with adaptive robust losses.

A desk-scale navigation toolkit featuring:
- IMU preintegration on SO(3) and a sparse Levenberg-Marquardt solver
- Barron, Huber, Cauchy and Tukey kernels applied through IRLS
- Fixed-lag smoothing with marginalization priors
- WLS and error-state EKF baselines
- A seeded GNSS/IMU simulator with NLOS-style outlier injection
"""

__version__ = "1.0.0"
__author__ = "RobustNav Contributors"

from robustnav.ekf import EkfState, ErrorStateEkf
from robustnav.exceptions import (
    ConfigurationError,
    ConvergenceError,
    DataFormatError,
    EstimationError,
    GeometryError,
    GraphError,
    InsufficientObservationsError,
    IntegrationError,
    InvalidKernelError,
    RobustNavError,
    ScenarioInfeasibleError,
    SingularSystemError,
    TuningError,
)
from robustnav.fusion import Dataset, FusionEngine, FusionResult, compare, run_ekf, run_wls, timing
from robustnav.geo import (
    EcefCoord,
    EnuCoord,
    FrameRef,
    GeodeticCoord,
    ecef_to_enu,
    ecef_to_geodetic,
    enu_to_ecef,
    geodetic_to_ecef,
)
from robustnav.graph import FactorGraph
from robustnav.logging import LogConfig, SolverLogger, setup_logging
from robustnav.metrics import compute_cdf, compute_metrics, compute_pdf
from robustnav.models import (
    EkfConfig,
    ErrorMetrics,
    FuseConfig,
    GridSpec,
    ImuNoiseParams,
    OutlierConfig,
    PriorConfig,
    ScenarioConfig,
    SolverConfig,
)
from robustnav.preint import GravityVector, PreintegratedImu, predict_state, preintegrate
from robustnav.robust import RobustKernel, kernel_eval
from robustnav.scenario import Scenario, generate_scenario
from robustnav.smoother import FixedLagSmoother, slide_window
from robustnav.solver import SolverReport, optimize
from robustnav.state import ImuBias, ImuSample, NavState, SatObservation, Trajectory
from robustnav.tuning import grid_search
from robustnav.wls import WlsSolution, wls_solve_epoch

__all__ = [
    # Coordinates
    "GeodeticCoord",
    "EcefCoord",
    "EnuCoord",
    "FrameRef",
    "geodetic_to_ecef",
    "ecef_to_geodetic",
    "ecef_to_enu",
    "enu_to_ecef",
    # Robust kernels
    "RobustKernel",
    "kernel_eval",
    # State and preintegration
    "ImuSample",
    "ImuBias",
    "NavState",
    "SatObservation",
    "Trajectory",
    "GravityVector",
    "PreintegratedImu",
    "preintegrate",
    "predict_state",
    # Graph and solvers
    "FactorGraph",
    "optimize",
    "SolverReport",
    "FixedLagSmoother",
    "slide_window",
    # Baselines
    "wls_solve_epoch",
    "WlsSolution",
    "ErrorStateEkf",
    "EkfState",
    # Simulation and fusion
    "Scenario",
    "generate_scenario",
    "Dataset",
    "FusionEngine",
    "FusionResult",
    "run_wls",
    "run_ekf",
    "compare",
    "timing",
    # Evaluation
    "compute_metrics",
    "compute_cdf",
    "compute_pdf",
    "grid_search",
    # Configuration
    "ImuNoiseParams",
    "OutlierConfig",
    "ScenarioConfig",
    "SolverConfig",
    "PriorConfig",
    "FuseConfig",
    "EkfConfig",
    "GridSpec",
    "ErrorMetrics",
    # Exceptions
    "RobustNavError",
    "ConfigurationError",
    "InvalidKernelError",
    "ScenarioInfeasibleError",
    "DataFormatError",
    "GraphError",
    "EstimationError",
    "InsufficientObservationsError",
    "GeometryError",
    "ConvergenceError",
    "SingularSystemError",
    "IntegrationError",
    "TuningError",
    # Logging
    "LogConfig",
    "SolverLogger",
    "setup_logging",
]
