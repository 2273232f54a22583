"""
Mesh of a single phase: interval nodes and per-interval polynomial settings.
"""
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .poly import NodeSet

DEGENERATE_RATIO = 1e-9


def _per_interval(values, n: int, label: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=int), (n,)).copy()
    if np.any(arr < 0):
        raise ConfigurationError(f"{label} must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Ordered mesh nodes t_0 < ... < t_N with per-interval settings.

    Attributes:
        nodes: Mesh node times.
        state_degree: Polynomial degree of the state on each interval.
        input_degree: Polynomial degree of the free variables on each interval.
        collocation: Collocation node set per interval on [-1, 1]; filled in
            by the transcription scheme when left empty.
        inequality_points: Reference points where path inequalities are
            enforced; None means the collocation points.
        quadrature_order: Gauss points used for cost and residual integrals;
            zero means the scheme default.
    """
    nodes: np.ndarray
    state_degree: np.ndarray
    input_degree: np.ndarray
    collocation: Optional[Tuple[NodeSet, ...]] = None
    inequality_points: Optional[Tuple[np.ndarray, ...]] = None
    quadrature_order: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        if nodes.size < 2:
            raise ConfigurationError("A mesh needs at least one interval")
        widths = np.diff(nodes)
        span = nodes[-1] - nodes[0]
        if np.any(widths <= DEGENERATE_RATIO * abs(span)) or span <= 0:
            raise ConfigurationError("Mesh intervals must have positive width above 1e-9 of the horizon")
        nodes.setflags(write=False)
        n = nodes.size - 1
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'state_degree', _per_interval(self.state_degree, n, 'state_degree'))
        object.__setattr__(self, 'input_degree', _per_interval(self.input_degree, n, 'input_degree'))
        order = 0 if self.quadrature_order is None else self.quadrature_order
        object.__setattr__(self, 'quadrature_order', _per_interval(order, n, 'quadrature_order'))
        if self.collocation is not None:
            colloc = tuple(self.collocation)
            if len(colloc) != n:
                raise ConfigurationError("One collocation node set per interval is required")
            object.__setattr__(self, 'collocation', colloc)
        if self.inequality_points is not None and len(self.inequality_points) != n:
            raise ConfigurationError("One inequality point set per interval is required")

    @classmethod
    def uniform(cls, t0: float, tf: float, intervals: int, state_degree: int = 2,
                input_degree: Optional[int] = None) -> 'Mesh':
        if intervals < 1:
            raise ConfigurationError(f"A mesh needs at least one interval, got {intervals}")
        degree_q = state_degree - 1 if input_degree is None else input_degree
        return cls(nodes=np.linspace(t0, tf, intervals + 1), state_degree=state_degree,
                   input_degree=max(degree_q, 0))

    @classmethod
    def from_nodes(cls, nodes: Sequence[float], state_degree=2, input_degree=None) -> 'Mesh':
        degree_q = np.maximum(np.asarray(state_degree) - 1, 0) if input_degree is None else input_degree
        return cls(nodes=np.asarray(nodes, dtype=float), state_degree=state_degree, input_degree=degree_q)

    @property
    def n_intervals(self) -> int:
        return int(self.nodes.size - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def tf(self) -> float:
        return float(self.nodes[-1])

    def collocation_count(self, i: int) -> int:
        if self.collocation is None:
            return 0
        return self.collocation[i].count

    def interval_of(self, t) -> np.ndarray:
        """Interval index with the half-open convention [t_i, t_{i+1})."""
        idx = np.searchsorted(self.nodes, np.asarray(t, dtype=float), side='right') - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def to_reference(self, i: int, t) -> np.ndarray:
        a, b = self.nodes[i], self.nodes[i + 1]
        return 2.0 * (np.asarray(t, dtype=float) - a) / (b - a) - 1.0

    def from_reference(self, i: int, tau) -> np.ndarray:
        a, b = self.nodes[i], self.nodes[i + 1]
        return a + 0.5 * (np.asarray(tau, dtype=float) + 1.0) * (b - a)

    def rescaled(self, t0: float, tf: float) -> 'Mesh':
        """Same mesh affinely mapped onto [t0, tf]."""
        frac = (self.nodes - self.nodes[0]) / (self.nodes[-1] - self.nodes[0])
        return replace(self, nodes=t0 + frac * (tf - t0))

    def with_settings(self, state_degree=None, input_degree=None, collocation=None,
                      inequality_points=None, quadrature_order=None) -> 'Mesh':
        return Mesh(
            nodes=self.nodes,
            state_degree=self.state_degree if state_degree is None else state_degree,
            input_degree=self.input_degree if input_degree is None else input_degree,
            collocation=self.collocation if collocation is None else collocation,
            inequality_points=self.inequality_points if inequality_points is None else inequality_points,
            quadrature_order=self.quadrature_order if quadrature_order is None else quadrature_order,
        )

    def signature(self, i: int) -> Tuple[float, float, int, int]:
        """Key identifying interval i across refinements."""
        return (float(self.nodes[i]), float(self.nodes[i + 1]),
                int(self.state_degree[i]), int(self.input_degree[i]))
