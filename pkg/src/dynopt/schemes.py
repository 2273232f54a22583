"""
Transcription schemes: collocation node families, option records and
Runge-Kutta tableaux.
"""
import re
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh
from .poly import NodeKind, NodeSet, custom_nodes, legendre_nodes

MAX_DEGREE = 10
DEFAULT_SLACK = 1.1
RESIDUAL_FLOOR = 1e-12

_FIXED = {
    'ExplicitEuler': (-1.0,),
    'ImplicitEuler': (1.0,),
    'Midpoint': (0.0,),
}
_FAMILY_KIND = {'LG': NodeKind.LG, 'LGR': NodeKind.LGR, 'LGL': NodeKind.LGL}
_ALIASES = {
    'expliciteuler': 'ExplicitEuler', 'euler': 'ExplicitEuler',
    'impliciteuler': 'ImplicitEuler', 'backwardeuler': 'ImplicitEuler',
    'midpoint': 'Midpoint', 'implicitmidpoint': 'Midpoint',
    'trapezoidal': 'Trapezoidal', 'tr': 'Trapezoidal',
    'hermitesimpson': 'HermiteSimpson', 'hs': 'HermiteSimpson',
}


@dataclass(frozen=True)
class Scheme:
    """A collocation scheme.

    Attributes:
        name: ExplicitEuler, ImplicitEuler, Midpoint, Trapezoidal,
            HermiteSimpson, LG, LGR or LGL.
        K: Number of collocation points for the Legendre families.
    """
    name: str
    K: int = 0

    def __post_init__(self):
        if self.name in _FIXED or self.name in ('Trapezoidal', 'HermiteSimpson'):
            return
        if self.name not in _FAMILY_KIND:
            raise ConfigurationError(f"Unknown scheme '{self.name}'")
        minimum = 2 if self.name == 'LGL' else 1
        if not minimum <= self.K <= MAX_DEGREE:
            raise ConfigurationError(f"{self.name} needs {minimum} <= K <= {MAX_DEGREE}, got {self.K}")

    @classmethod
    def parse(cls, text: str) -> 'Scheme':
        """Read 'trapezoidal', 'HS', 'LGR(5)', 'LG3' and the like."""
        match = re.fullmatch(r'\s*(LGR|LGL|LG)\s*\(?\s*(\d+)\s*\)?\s*', text, flags=re.IGNORECASE)
        if match:
            return cls(match.group(1).upper(), int(match.group(2)))
        key = re.sub(r'[^a-z]', '', text.lower())
        if key not in _ALIASES:
            raise ConfigurationError(f"Unknown scheme '{text}'")
        return cls(_ALIASES[key])

    @property
    def label(self) -> str:
        return f"{self.name}({self.K})" if self.name in _FAMILY_KIND else self.name

    def collocation(self) -> NodeSet:
        if self.name in _FIXED:
            return custom_nodes(_FIXED[self.name])
        if self.name == 'Trapezoidal':
            return legendre_nodes(NodeKind.LGL, 2)
        if self.name == 'HermiteSimpson':
            return legendre_nodes(NodeKind.LGL, 3)
        return legendre_nodes(_FAMILY_KIND[self.name], self.K)

    @property
    def state_degree(self) -> int:
        return default_degree(self.collocation())

    def apply(self, mesh: Mesh) -> Mesh:
        """Mesh with this scheme's nodes and degrees on every interval."""
        colloc = self.collocation()
        n = mesh.n_intervals
        return mesh.with_settings(state_degree=np.full(n, default_degree(colloc)),
                                  input_degree=np.full(n, colloc.count - 1),
                                  collocation=(colloc,) * n)


def default_degree(colloc: NodeSet) -> int:
    """State degree paired with a collocation node set."""
    if colloc.kind is NodeKind.CUSTOM and colloc.count == 1:
        return 1
    return colloc.count


def state_nodes(colloc: NodeSet, degree: int) -> np.ndarray:
    """Interpolation nodes of the state on [-1, 1].

    The collocation points are completed with the missing endpoints (-1
    first, then +1) and then with midpoints of the widest gaps, first gap on
    ties, until degree + 1 nodes are reached.
    """
    points = list(colloc.points)
    target = int(degree) + 1
    if target < len(points):
        raise ConfigurationError(
            f"State degree {degree} cannot interpolate {len(points)} collocation points")
    for end in (-1.0, 1.0):
        if len(points) < target and not colloc.contains(end):
            points.append(end)
    points.sort()
    while len(points) < target:
        gaps = np.diff(points)
        k = int(np.argmax(gaps))
        points.insert(k + 1, 0.5 * (points[k] + points[k + 1]))
    return np.array(points)


def input_nodes(colloc: NodeSet, degree: int) -> np.ndarray:
    """Input nodes of a collocation interval: its collocation points."""
    if int(degree) != colloc.count - 1:
        raise ConfigurationError(
            f"Input degree {degree} does not match {colloc.count} collocation points")
    return np.array(colloc.points)


def residual_nodes(degree: int) -> np.ndarray:
    """Lobatto nodes of an integrated-residual interval ({0} for degree 0)."""
    if int(degree) == 0:
        return np.array([0.0])
    return legendre_nodes(NodeKind.LGL, int(degree) + 1).points


def increase_degree(colloc: NodeSet) -> NodeSet:
    """Next node set of the same family; Euler and midpoint move to LGL(2)."""
    if colloc.kind in (NodeKind.LG, NodeKind.LGR, NodeKind.LGL):
        return legendre_nodes(colloc.kind, min(colloc.count + 1, MAX_DEGREE + 1))
    return legendre_nodes(NodeKind.LGL, 2)


def includes_both_ends(points: np.ndarray) -> bool:
    pts = np.asarray(points)
    return bool(np.isclose(pts[0], -1.0) and np.isclose(pts[-1], 1.0))


def default_quadrature_points(state_degree: int) -> int:
    """Gauss points for cost and residual integrals: max(2 * degree, 5)."""
    return max(2 * int(state_degree), 5)


Tightening = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class CollocationOptions:
    """Settings of a collocation transcription.

    Args:
        scheme: Scheme, or None to keep the node sets already on the mesh.
        inequality_points: 'collocation', 'state' (interpolation nodes) or
            explicit reference points on [-1, 1].
        tightening: Per-constraint margins eps_g <= 0; g <= h_i * eps_g.
        cost_quadrature: 'collocation' (interpolatory weights on the
            collocation points) or 'gauss'.
        input_continuity: None for automatic (inputs with nodes on both
            interval ends are made continuous), True or False to force.
    """
    scheme: Optional[Scheme] = None
    inequality_points: Union[str, Tuple[float, ...]] = 'collocation'
    tightening: Tightening = 0.0
    cost_quadrature: str = 'collocation'
    input_continuity: Optional[bool] = None

    def __post_init__(self):
        if np.any(np.asarray(self.tightening, dtype=float) > 0.0):
            raise ConfigurationError("Inequality tightening must be <= 0")
        if isinstance(self.inequality_points, str) and self.inequality_points not in ('collocation', 'state'):
            raise ConfigurationError(f"Unknown inequality point selector '{self.inequality_points}'")
        if self.cost_quadrature not in ('collocation', 'gauss'):
            raise ConfigurationError(f"Unknown cost quadrature '{self.cost_quadrature}'")


@dataclass(frozen=True, eq=False)
class ResidualOptions:
    """Settings of the integrated-residual transcriptions.

    Args:
        weight: W(t) returning (n_f, n_f, P) or (n_f, P) for a diagonal
            weight; None is the identity.
        bounds: Per-interval eps_f >= 0, or None for automatic bounds.
        slack_factor: alpha >= 1 used by the automatic bounds.
        quadrature_order: Gauss points per interval (0 = default).
        inequality_points: 'state' or explicit reference points.
        tightening: As for collocation.
        input_continuity: As for collocation.
    """
    weight: Optional[Callable] = None
    bounds: Optional[np.ndarray] = None
    slack_factor: float = DEFAULT_SLACK
    quadrature_order: int = 0
    inequality_points: Union[str, Tuple[float, ...]] = 'state'
    tightening: Tightening = 0.0
    input_continuity: Optional[bool] = None

    def __post_init__(self):
        if self.slack_factor < 1.0:
            raise ConfigurationError(f"Slack factor must be >= 1, got {self.slack_factor}")
        if self.bounds is not None and np.any(np.asarray(self.bounds, dtype=float) < 0.0):
            raise ConfigurationError("Residual bounds must be >= 0")
        if np.any(np.asarray(self.tightening, dtype=float) > 0.0):
            raise ConfigurationError("Inequality tightening must be <= 0")
        if self.quadrature_order < 0:
            raise ConfigurationError("Quadrature order must be nonnegative")


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Runge-Kutta coefficients a (K x K), weights b and abscissae c."""
    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if a.shape != (b.size, b.size) or c.size != b.size:
            raise ConfigurationError(f"Tableau '{self.name}' has inconsistent sizes")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"Tableau '{self.name}' weights do not sum to one")
        for key, value in (('a', a), ('b', b), ('c', c)):
            value.setflags(write=False)
            object.__setattr__(self, key, value)

    @property
    def stages(self) -> int:
        return int(self.b.size)

    @property
    def is_explicit(self) -> bool:
        return bool(np.all(np.triu(self.a) == 0.0))

    @property
    def unique_abscissae(self) -> np.ndarray:
        return np.unique(self.c)

    def stage_matrix(self, h: float, lam: float) -> np.ndarray:
        """I - h*lam*A, the stage system of one step of xdot = lam*x.

        A singular matrix means the interval equations have no unique
        solution for that step size.
        """
        return np.eye(self.stages) - h * lam * self.a


_S3 = np.sqrt(3.0) / 6.0

TABLEAUX: Dict[str, ButcherTableau] = {
    'explicit_euler': ButcherTableau('explicit_euler', [[0.0]], [1.0], [0.0]),
    'implicit_euler': ButcherTableau('implicit_euler', [[1.0]], [1.0], [1.0]),
    'implicit_midpoint': ButcherTableau('implicit_midpoint', [[0.5]], [1.0], [0.5]),
    'trapezoidal': ButcherTableau('trapezoidal', [[0.0, 0.0], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0]),
    'rk4': ButcherTableau('rk4',
                          [[0.0, 0.0, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
                          [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0.0, 0.5, 0.5, 1.0]),
    'gauss2': ButcherTableau('gauss2', [[0.25, 0.25 - _S3], [0.25 + _S3, 0.25]],
                             [0.5, 0.5], [0.5 - _S3, 0.5 + _S3]),
}


def tableau(name: str) -> ButcherTableau:
    key = re.sub(r'[^a-z0-9]', '_', name.lower()).strip('_')
    key = {'gauss_2': 'gauss2', 'classical_rk4': 'rk4', 'midpoint': 'implicit_midpoint'}.get(key, key)
    if key not in TABLEAUX:
        raise ConfigurationError(f"Unknown Butcher tableau '{name}'")
    return TABLEAUX[key]
