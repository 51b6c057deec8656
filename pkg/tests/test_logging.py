"""Tests for structured solver logging."""

import logging
from io import StringIO

import pytest

from robustnav.logging import LogConfig, SolverLogger, setup_logging
from robustnav.solver import IterationRecord, SolverReport


@pytest.fixture
def log_stream():
    """Capture records of the solver logger."""
    stream = StringIO()
    handler = logging.StreamHandler(stream)
    handler.setLevel(logging.DEBUG)
    solver_logger = logging.getLogger("robustnav.solver")
    solver_logger.addHandler(handler)
    solver_logger.setLevel(logging.DEBUG)
    yield stream
    solver_logger.removeHandler(handler)
    solver_logger.setLevel(logging.NOTSET)


class TestIterationFormat:
    """Tests for the iteration record format."""

    def test_key_value_line(self):
        """Test iterations render as stable key-value text."""
        line = SolverLogger().format_iteration(3, 12.5, 1e-4)

        assert line == "iteration=3 cost=12.5 damping=0.0001"

    def test_custom_float_format(self):
        """Test the float format is configurable."""
        logger = SolverLogger(LogConfig(float_format=".2e"))

        assert logger.format_iteration(1, 12.5, 0.5) == "iteration=1 cost=1.25e+01 damping=5.00e-01"

    def test_report_lists_iterations(self):
        """Test a solver report renders one line per iteration plus a summary."""
        report = SolverReport(
            iterations=1,
            initial_cost=4.0,
            final_cost=1.0,
            converged=True,
            history=[IterationRecord(0, 4.0, 1e-4), IterationRecord(1, 9.0, 1e-4, accepted=False)],
        )

        lines = report.to_text().splitlines()

        assert lines[0] == "iteration=0 cost=4 damping=0.0001"
        assert lines[1].endswith("rejected")
        assert "converged=true" in lines[-1]


class TestSolverLogger:
    """Tests for SolverLogger output."""

    def test_logs_iteration(self, log_stream):
        """Test iterations are logged at DEBUG."""
        SolverLogger().log_iteration(2, 3.0, 0.01, accepted=False)

        assert "iteration=2 cost=3 damping=0.01 rejected" in log_stream.getvalue()

    def test_iterations_can_be_silenced(self, log_stream):
        """Test log_iterations=False suppresses iteration records."""
        SolverLogger(LogConfig(log_iterations=False)).log_iteration(2, 3.0, 0.01)

        assert log_stream.getvalue() == ""

    def test_solve_summary(self, log_stream):
        """Test the solve summary mentions convergence."""
        SolverLogger().log_solve(5, 100.0, 1.5, converged=False)

        assert "did not converge after 5 iterations" in log_stream.getvalue()

    def test_gate_event_skipped_without_rejections(self, log_stream):
        """Test epochs without rejections are not logged."""
        logger = SolverLogger()

        logger.log_gate_event(4, 0, 9)
        assert log_stream.getvalue() == ""

        logger.log_gate_event(4, 2, 9)
        assert "rejected 2/9 pseudoranges at epoch 4" in log_stream.getvalue()

    def test_extra_fields(self):
        """Test structured fields are attached to records."""
        records = []

        class Collector(logging.Handler):
            def emit(self, record):
                records.append(record)

        handler = Collector()
        solver_logger = logging.getLogger("robustnav.solver")
        solver_logger.addHandler(handler)
        solver_logger.setLevel(logging.DEBUG)
        try:
            SolverLogger().log_epoch_timing("ekf", 3, 0.002)
        finally:
            solver_logger.removeHandler(handler)

        assert records[0].estimator == "ekf"
        assert records[0].epoch == 3
        assert records[0].duration_seconds == 0.002

    def test_log_error(self, log_stream):
        """Test estimation errors are logged with their type."""
        SolverLogger().log_error(ValueError("boom"), {"epoch": 1})

        assert "Estimation error: boom" in log_stream.getvalue()


class TestSetupLogging:
    """Tests for setup_logging."""

    def test_sets_level(self):
        """Test the root level follows the argument."""
        setup_logging("DEBUG")

        assert logging.getLogger().level == logging.DEBUG
        setup_logging("WARNING")
        assert logging.getLogger().level == logging.WARNING
