"""
Small reference problems addressable by name from scenario files.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ConfigurationError
from .problem import DopProblem, FixedHorizon, SemiExplicitForm, VariableHorizon


@dataclass(frozen=True)
class BuiltinProblem:
    """A problem factory with its closed-form solution where one is known."""
    name: str
    build: Callable[[], DopProblem]
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_cost: Optional[float] = None
    description: str = ''


def exponential_growth(rate: float = 1.0, t_final: float = 1.0) -> DopProblem:
    """xdot = rate * x, x(0) = 1."""
    def dynamics(xdot, x, u, theta, t):
        return np.array([xdot[0] - rate * x[0]])

    return DopProblem(
        n_x=1, n_u=0, dynamics=dynamics, horizon=FixedHorizon(0.0, t_final),
        boundary_eq=lambda x0, xf, theta, t0, tf: np.array([x0[0] - 1.0]), n_eq=1,
        semi_explicit=SemiExplicitForm(rhs=lambda x, u, theta, t: rate * x),
        state_names=('x',), name='exponential-growth',
    )


def quadratic_decay(t_final: float = 1.0) -> DopProblem:
    """xdot = -x - x^2, x(0) = 1."""
    def dynamics(xdot, x, u, theta, t):
        return np.array([xdot[0] + x[0] + x[0] * x[0]])

    return DopProblem(
        n_x=1, n_u=0, dynamics=dynamics, horizon=FixedHorizon(0.0, t_final),
        boundary_eq=lambda x0, xf, theta, t0, tf: np.array([x0[0] - 1.0]), n_eq=1,
        semi_explicit=SemiExplicitForm(rhs=lambda x, u, theta, t: -x - x * x),
        state_names=('x',), name='quadratic-decay',
    )


def double_integrator() -> DopProblem:
    """Rest-to-rest unit move in unit time minimizing the integral of u^2."""
    def dynamics(xdot, x, u, theta, t):
        return np.array([xdot[0] - x[1], xdot[1] - u[0]])

    def boundary(x0, xf, theta, t0, tf):
        return np.array([x0[0], x0[1], xf[0] - 1.0, xf[1]])

    return DopProblem(
        n_x=2, n_u=1, dynamics=dynamics, horizon=FixedHorizon(0.0, 1.0),
        running_cost=lambda x, u, theta, t: u[0] * u[0],
        boundary_eq=boundary, n_eq=4,
        semi_explicit=SemiExplicitForm(rhs=lambda x, u, theta, t: np.array([x[1], u[0]])),
        state_names=('position', 'velocity'), input_names=('force',), name='double-integrator',
    )


def minimum_time_double_integrator() -> DopProblem:
    """Rest-to-rest unit move with |u| <= 1 in minimum time (optimum t_f = 2)."""
    def dynamics(xdot, x, u, theta, t):
        return np.array([xdot[0] - x[1], xdot[1] - u[0]])

    def boundary(x0, xf, theta, t0, tf):
        return np.array([x0[0], x0[1], xf[0] - 1.0, xf[1]])

    return DopProblem(
        n_x=2, n_u=1, dynamics=dynamics, horizon=VariableHorizon((0.0, 0.0), (0.5, 10.0), guess=(0.0, 3.0)),
        mayer_cost=lambda x0, xf, theta, t0, tf: tf - t0,
        boundary_eq=boundary, n_eq=4, u_lower=np.array([-1.0]), u_upper=np.array([1.0]),
        state_names=('position', 'velocity'), input_names=('force',), name='minimum-time-double-integrator',
    )


def _double_integrator_exact(t):
    t = np.asarray(t, dtype=float)
    return np.vstack([3.0 * t ** 2 - 2.0 * t ** 3, 6.0 * t - 6.0 * t ** 2])


def _quadratic_decay_exact(t):
    # x = 1 / (2 e^t - 1)
    return (1.0 / (2.0 * np.exp(np.asarray(t, dtype=float)) - 1.0))[None, :]


BUILTIN_PROBLEMS: Dict[str, BuiltinProblem] = {
    'exponential-growth': BuiltinProblem('exponential-growth', exponential_growth,
                                         exact=lambda t: np.exp(np.asarray(t, dtype=float))[None, :],
                                         description='xdot = x, x(0) = 1 on [0, 1]'),
    'quadratic-decay': BuiltinProblem('quadratic-decay', quadratic_decay, exact=_quadratic_decay_exact,
                                      description='xdot = -x - x^2, x(0) = 1 on [0, 1]'),
    'double-integrator': BuiltinProblem('double-integrator', double_integrator, exact=_double_integrator_exact,
                                        exact_cost=12.0, description='minimum-effort rest-to-rest move'),
    'minimum-time-double-integrator': BuiltinProblem('minimum-time-double-integrator',
                                                     minimum_time_double_integrator, exact_cost=2.0,
                                                     description='bang-bang rest-to-rest move'),
}


def builtin(name: str) -> BuiltinProblem:
    try:
        return BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown built-in problem '{name}', expected one of {sorted(BUILTIN_PROBLEMS)}") from None


__all__ = ['BuiltinProblem', 'BUILTIN_PROBLEMS', 'builtin', 'exponential_growth', 'quadratic_decay',
           'double_integrator', 'minimum_time_double_integrator']
