"""
Piecewise polynomial trajectories and the solution containers built on them.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SizeError
from .poly import BarycentricBasis, barycentric_build, derivative_matrix, gauss_quadrature, interpolation_matrix


@dataclass(frozen=True, eq=False)
class PiecewiseTrajectory:
    """Vector-valued piecewise polynomial in Lagrange form.

    Interval i stores nodal values ``coefficients[i]`` (n, K_i) on the
    reference nodes of ``bases[i]``. Global evaluation uses [t_i, t_{i+1}) so
    the value at an interior mesh node comes from the interval to its right;
    the last interval also owns t_N.
    """
    nodes: np.ndarray
    bases: Tuple[BarycentricBasis, ...]
    coefficients: Tuple[np.ndarray, ...]
    terminal: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, 'nodes', nodes)
        if len(self.bases) != nodes.size - 1 or len(self.coefficients) != nodes.size - 1:
            raise SizeError("One basis and one coefficient block per interval are required")
        coeffs = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.coefficients)
        for basis, block in zip(self.bases, coeffs):
            if block.shape[1] != basis.count:
                raise SizeError("Coefficient block does not match its basis")
        object.__setattr__(self, 'coefficients', coeffs)

    @property
    def dimension(self) -> int:
        return int(self.coefficients[0].shape[0])

    @property
    def n_intervals(self) -> int:
        return int(self.nodes.size - 1)

    def interval_of(self, t) -> np.ndarray:
        idx = np.searchsorted(self.nodes, np.asarray(t, dtype=float), side='right') - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def _reference(self, i: int, t) -> np.ndarray:
        a, b = self.nodes[i], self.nodes[i + 1]
        return 2.0 * (np.asarray(t, dtype=float) - a) / (b - a) - 1.0

    def evaluate_interval(self, i: int, t) -> np.ndarray:
        """Interval i's polynomial at t, including its right endpoint."""
        tau = np.atleast_1d(self._reference(i, t))
        return self.coefficients[i] @ interpolation_matrix(self.bases[i], tau).T

    def derivative_interval(self, i: int, t) -> np.ndarray:
        tau = np.atleast_1d(self._reference(i, t))
        scale = 2.0 / (self.nodes[i + 1] - self.nodes[i])
        return scale * (self.coefficients[i] @ derivative_matrix(self.bases[i], tau).T)

    def _piecewise(self, t, method) -> np.ndarray:
        times = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.dimension, times.size))
        idx = self.interval_of(times)
        for i in np.unique(idx):
            mask = idx == i
            out[:, mask] = method(int(i), times[mask])
        return out

    def evaluate(self, t) -> np.ndarray:
        """Values at t as an (n, P) array."""
        return self._piecewise(t, self.evaluate_interval)

    def derivative(self, t) -> np.ndarray:
        return self._piecewise(t, self.derivative_interval)

    def start_value(self, i: int) -> np.ndarray:
        return self.evaluate_interval(i, self.nodes[i])[:, 0]

    def end_value(self, i: int) -> np.ndarray:
        return self.evaluate_interval(i, self.nodes[i + 1])[:, 0]

    def final_value(self) -> np.ndarray:
        if self.terminal is not None:
            return np.asarray(self.terminal, dtype=float)
        return self.end_value(self.n_intervals - 1)

    def rescaled(self, t0: float, tf: float) -> 'PiecewiseTrajectory':
        """Same polynomials on the mesh affinely mapped onto [t0, tf]."""
        frac = (self.nodes - self.nodes[0]) / (self.nodes[-1] - self.nodes[0])
        return replace(self, nodes=t0 + frac * (tf - t0))

    def sample_times(self, per_interval: int) -> np.ndarray:
        pieces = [np.linspace(self.nodes[i], self.nodes[i + 1], per_interval, endpoint=False)
                  for i in range(self.n_intervals)]
        return np.concatenate(pieces + [self.nodes[-1:]])

    def sample_uniform(self, count: int) -> Tuple[np.ndarray, np.ndarray]:
        times = np.linspace(self.nodes[0], self.nodes[-1], count)
        return times, self.evaluate(times)

    def integral(self, points: int = 0) -> np.ndarray:
        """Integral over the whole horizon by per-interval Gauss quadrature."""
        total = np.zeros(self.dimension)
        for i, basis in enumerate(self.bases):
            rule = gauss_quadrature(max(points, basis.count))
            values = self.coefficients[i] @ interpolation_matrix(basis, rule.abscissae).T
            total += 0.5 * (self.nodes[i + 1] - self.nodes[i]) * (values @ rule.weights)
        return total

    @classmethod
    def from_samples(cls, nodes: np.ndarray, ref_nodes: Sequence[np.ndarray], fun,
                     terminal: Optional[np.ndarray] = None) -> 'PiecewiseTrajectory':
        """Interpolate fun(t) -> (n, P) on the given reference nodes per interval."""
        bases, coeffs = [], []
        for i, tau in enumerate(ref_nodes):
            a, b = nodes[i], nodes[i + 1]
            bases.append(barycentric_build(tau))
            coeffs.append(np.atleast_2d(fun(a + 0.5 * (np.asarray(tau) + 1.0) * (b - a))))
        return cls(nodes=np.asarray(nodes, dtype=float), bases=tuple(bases),
                   coefficients=tuple(coeffs), terminal=terminal)

    @classmethod
    def constant(cls, nodes: np.ndarray, value: np.ndarray) -> 'PiecewiseTrajectory':
        value = np.asarray(value, dtype=float).reshape(-1, 1)
        basis = barycentric_build([0.0])
        n = len(nodes) - 1
        return cls(nodes=np.asarray(nodes, dtype=float), bases=(basis,) * n,
                   coefficients=tuple(value.copy() for _ in range(n)))


def continuity_defect(traj: PiecewiseTrajectory) -> float:
    """Largest jump ||chi_{i-1}(t_i) - chi_i(t_i)||_inf over interior nodes."""
    worst = 0.0
    for i in range(1, traj.n_intervals):
        gap = np.max(np.abs(traj.end_value(i - 1) - traj.start_value(i)), initial=0.0)
        worst = max(worst, float(gap))
    return worst


@dataclass
class Solution:
    """Result of one phase: trajectories in original time plus diagnostics."""
    state: PiecewiseTrajectory
    inputs: PiecewiseTrajectory
    theta: np.ndarray
    t0: float
    tf: float
    cost: float = float('nan')
    status: str = 'Unsolved'
    iterations: int = 0
    errors: Any = None
    violations: Optional[np.ndarray] = None
    continuity: float = 0.0
    multipliers: Optional[np.ndarray] = None
    report: Any = None
    phase: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def zeta(self) -> Optional[np.ndarray]:
        return None if self.errors is None else self.errors.zeta

    @property
    def succeeded(self) -> bool:
        return self.status == 'Optimal'


@dataclass
class StackSolution:
    """Solutions of every phase of a stack with the shared parameters."""
    phases: List[Solution]
    theta: np.ndarray
    cost: float
    status: str
    iterations: int
    report: Any = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.status == 'Optimal'

    def __getitem__(self, index: int) -> Solution:
        return self.phases[index]

    def __len__(self) -> int:
        return len(self.phases)
