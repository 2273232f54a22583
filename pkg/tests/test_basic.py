import logging

import numpy as np
import pytest

import dynopt
from dynopt.builtin_problems import BUILTIN_PROBLEMS, builtin
from dynopt.errors import (ConfigurationError, DivergenceError, DynoptError, ScenarioError, SingularityError,
                           SolverFailure)
from dynopt.logger import ColoredFormatter, logger, set_console_level, setup_logger


def test_imports():
    """Test that we can import our main modules."""
    from dynopt import DopProblem, Mesh, solve  # noqa: F401
    assert set(dynopt.__all__) >= {'solve', 'solve_adaptive', 'PhaseStack', 'DynoptError'}


class TestErrorsUnit:
    """Unit tests for the exception hierarchy."""

    @pytest.mark.unit
    def test_builtin_bases(self):
        """UT1201: Toolkit errors - Should also be the builtin type callers catch."""
        assert issubclass(ConfigurationError, ValueError)
        assert issubclass(DivergenceError, ArithmeticError)
        assert issubclass(SolverFailure, RuntimeError)
        for error in (ConfigurationError, DivergenceError, SolverFailure, ScenarioError):
            assert issubclass(error, DynoptError)

    @pytest.mark.unit
    def test_scenario_error_location(self):
        """UT1202: Scenario error with field and line - Should mention both."""
        error = ScenarioError("Unknown field", field='solver.tolerance', line=7)
        assert str(error) == "Unknown field (field 'solver.tolerance', line 7)"
        assert str(ScenarioError("Bad")) == "Bad"

    @pytest.mark.unit
    def test_carried_values(self):
        """UT1203: Singularity and solver failures - Should carry their context."""
        assert SingularityError("singular", 0.25).value == 0.25
        failure = SolverFailure("failed", report='r', round_index=3)
        assert failure.report == 'r' and failure.round_index == 3


class TestBuiltinProblemsUnit:
    """Unit tests for the named problems."""

    @pytest.mark.unit
    def test_registry(self):
        """UT1204: Every registered problem - Should build under its own name."""
        for name, entry in BUILTIN_PROBLEMS.items():
            assert entry.build().name == name

    @pytest.mark.unit
    def test_unknown_name(self):
        """UT1205: Unregistered name - Should raise ConfigurationError listing the names."""
        with pytest.raises(ConfigurationError, match='double-integrator'):
            builtin('pendulum')

    @pytest.mark.unit
    def test_exact_solutions(self):
        """UT1206: Closed-form solutions - Should meet the boundary conditions."""
        ends = np.array([0.0, 1.0])
        np.testing.assert_allclose(builtin('double-integrator').exact(ends), [[0.0, 1.0], [0.0, 0.0]], atol=1e-15)
        np.testing.assert_allclose(builtin('quadratic-decay').exact(ends), [[1.0, 1.0 / (2.0 * np.e - 1.0)]])
        assert builtin('minimum-time-double-integrator').exact_cost == 2.0


class TestLoggerUnit:
    """Unit tests for the logging setup."""

    @pytest.mark.unit
    def test_handlers_replaced(self, tmp_path):
        """UT1207: Setting up the same logger twice - Should not stack handlers."""
        log_file = tmp_path / 'logs' / 'run.log'
        setup_logger('dynopt-test', str(log_file), 'WARNING')
        instance = setup_logger('dynopt-test', str(log_file), 'WARNING')
        assert len(instance.handlers) == 2
        assert log_file.exists()
        console = [h for h in instance.handlers if not isinstance(h, logging.FileHandler)][0]
        assert console.level == logging.WARNING
        for handler in list(instance.handlers):
            instance.removeHandler(handler)
            handler.close()

    @pytest.mark.unit
    def test_file_keeps_debug(self, tmp_path):
        """UT1208: Quiet console - Should still write DEBUG records to the file."""
        log_file = tmp_path / 'run.log'
        instance = setup_logger('dynopt-debug', str(log_file), 'ERROR')
        instance.debug('iteration 3: mu 1e-4')
        for handler in list(instance.handlers):
            handler.flush()
            instance.removeHandler(handler)
            handler.close()
        assert 'iteration 3: mu 1e-4' in log_file.read_text(encoding='utf-8')

    @pytest.mark.unit
    def test_colored_formatter(self):
        """UT1209: Warning record - Should be wrapped in the yellow color code."""
        record = logging.LogRecord('dynopt', logging.WARNING, __file__, 1, 'careful', None, None)
        text = ColoredFormatter().format(record)
        assert text.startswith('\033[33m') and text.endswith('\033[0m')
        assert 'WARNING - careful' in text

    @pytest.mark.unit
    def test_set_console_level(self):
        """UT1210: Console level change - Should leave the file handler at DEBUG."""
        set_console_level('ERROR')
        try:
            levels = {type(h): h.level for h in logger.handlers}
            assert levels[logging.FileHandler] == logging.DEBUG
            assert levels[logging.StreamHandler] == logging.ERROR
        finally:
            set_console_level('INFO')
