"""
Fixed-step classical Runge-Kutta integrator.

Used as a test oracle and to build initial guesses. Works on the
semi-explicit form xdot = rhs(x, u, theta, t).
"""
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import DivergenceError, FormError
from .problem import DopProblem, SemiExplicitForm
from .trajectory import PiecewiseTrajectory

InputSource = Union[None, PiecewiseTrajectory, Callable[[np.ndarray], np.ndarray]]


@dataclass
class OracleResult:
    times: np.ndarray
    states: np.ndarray

    def final(self) -> np.ndarray:
        return self.states[:, -1]

    def at(self, t) -> np.ndarray:
        """Linear interpolation between samples (for coarse lookups only)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.vstack([np.interp(t, self.times, row) for row in self.states])


def _input_function(u: InputSource, n_u: int):
    if u is None:
        return lambda t: np.zeros((n_u, np.size(t)))
    if isinstance(u, PiecewiseTrajectory):
        return u.evaluate
    return lambda t: np.asarray(u(np.atleast_1d(t)), dtype=float).reshape(n_u, -1)


def integrate_oracle(form: Union[SemiExplicitForm, DopProblem], x0, theta=None, u: InputSource = None,
                     t0: float = 0.0, tf: float = 1.0, step: float = 1e-3,
                     n_u: Optional[int] = None) -> OracleResult:
    """Integrate xdot = rhs(x, u, theta, t) with the classical 4th-order method.

    The step is shrunk uniformly so that tf lands on a step multiple.

    Args:
        form: SemiExplicitForm, or a DopProblem carrying one.
        x0: Initial state.
        theta: Static parameters (empty when omitted).
        u: Free-variable source: a trajectory, a callable of time, or None.
        t0, tf: Integration window.
        step: Requested step size.
        n_u: Input count when ``form`` is a bare SemiExplicitForm.

    Returns:
        OracleResult with dense samples at step multiples.

    Raises:
        FormError: the problem has no semi-explicit form.
        DivergenceError: a non-finite state appeared.
    """
    if isinstance(form, DopProblem):
        if form.semi_explicit is None:
            raise FormError(f"Problem '{form.name}' has no semi-explicit form")
        n_u = form.n_u
        form = form.semi_explicit
    n_u = 0 if n_u is None else n_u
    rhs = form.rhs
    x = np.asarray(x0, dtype=float).reshape(-1, 1).copy()
    theta = np.zeros((0, 1)) if theta is None else np.asarray(theta, dtype=float).reshape(-1, 1)
    inputs = _input_function(u, n_u)

    n_steps = max(1, int(np.ceil((tf - t0) / step - 1e-12)))
    h = (tf - t0) / n_steps
    times = t0 + h * np.arange(n_steps + 1)
    states = np.empty((x.shape[0], n_steps + 1))
    states[:, 0] = x[:, 0]

    def f(state, t):
        t_arr = np.array([t])
        return np.asarray(rhs(state, inputs(t_arr), theta, t_arr), dtype=float).reshape(-1, 1)

    for k in range(n_steps):
        t = times[k]
        k1 = f(x, t)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"Oracle state became non-finite at t={times[k + 1]:.6g}")
        states[:, k + 1] = x[:, 0]
    return OracleResult(times=times, states=states)
