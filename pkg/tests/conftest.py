"""
Pytest configuration file.

This file adds the project's source directory to the Python path
so that pytest can find the `dynopt` package, and provides the small
problems most test modules share.
"""
import sys
import os

# Add the src directory to the Python path so that tests can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../src')))

import numpy as np
import pytest

os.environ.setdefault('DYNOPT_LOG_FILE', os.path.join(os.path.dirname(__file__), '..', 'logs', 'test.log'))

from dynopt.builtin_problems import double_integrator, exponential_growth, quadratic_decay  # noqa: E402
from dynopt.solver_interface import SolverOptions  # noqa: E402


@pytest.fixture
def growth_problem():
    """xdot = x, x(0) = 1 on [0, 1]."""
    return exponential_growth()


@pytest.fixture
def decay_problem():
    """xdot = -x - x^2, x(0) = 1 on [0, 1]."""
    return quadratic_decay()


@pytest.fixture
def effort_problem():
    """Minimum-effort double integrator with optimal cost 12."""
    return double_integrator()


@pytest.fixture
def tight_solver():
    return SolverOptions(tol=1e-10, max_iter=500)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
