"""
Polynomial infrastructure shared by every transcription scheme.

Provides Legendre-family node sets (Gauss, Radau, Lobatto), barycentric
Lagrange interpolation and differentiation, and Gauss-type quadrature rules
on the reference interval [-1, 1].
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .errors import DegeneracyError, SizeError

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 100
NODE_TOL = 1e-14

ArrayLike = Union[float, np.ndarray]


class NodeKind(Enum):
    """Families of points on the reference interval."""
    LG = 'LG'
    LGR = 'LGR'
    LGL = 'LGL'
    UNIFORM = 'Uniform'
    CUSTOM = 'Custom'


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Ordered points on [-1, 1] with the family they belong to."""
    kind: NodeKind
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size == 0:
            raise SizeError("A node set needs at least one point")
        if np.any(np.diff(pts) <= 0.0):
            raise DegeneracyError("Node set points must be strictly increasing")
        if pts[0] < -1.0 - NODE_TOL or pts[-1] > 1.0 + NODE_TOL:
            raise SizeError("Node set points must lie in [-1, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)

    @property
    def count(self) -> int:
        return int(self.points.size)

    def contains(self, value: float) -> bool:
        return bool(np.any(np.abs(self.points - value) <= NODE_TOL))

    def __repr__(self) -> str:
        return f"NodeSet({self.kind.value}, {np.array2string(self.points, precision=6)})"


@dataclass(frozen=True, eq=False)
class BarycentricBasis:
    """Lagrange basis in barycentric form.

    Weights are stored scaled so the largest magnitude is one; every formula
    below only uses weight ratios.
    """
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.nodes.size)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature on [-1, 1]."""
    abscissae: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def count(self) -> int:
        return int(self.abscissae.size)

    def mapped(self, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
        """Points and weights of the rule transplanted to [a, b]."""
        half = 0.5 * (b - a)
        return a + half * (self.abscissae + 1.0), half * self.weights

    def integrate(self, fun, a: float = -1.0, b: float = 1.0) -> float:
        points, weights = self.mapped(a, b)
        return float(np.dot(weights, np.asarray(fun(points), dtype=float)))


def legendre_eval(n: int, x: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate P_n, P_n', P_{n-1} and P_{n-1}' by the three-term recurrence.

    The derivative recurrence P'_{k+1} = P'_{k-1} + (2k+1) P_k stays finite at
    the endpoints, unlike the closed form through (x^2 - 1).
    """
    x = np.asarray(x, dtype=float)
    p_prev, p_curr = np.ones_like(x), x.copy()
    d_prev, d_curr = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, d_prev, np.zeros_like(x), np.zeros_like(x)
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p_curr - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p_curr
        p_prev, p_curr = p_curr, p_next
        d_prev, d_curr = d_curr, d_next
    return p_curr, d_curr, p_prev, d_prev


def _newton(fun, seeds: np.ndarray) -> np.ndarray:
    x = seeds.astype(float).copy()
    for _ in range(NEWTON_MAX_ITER):
        value, slope = fun(x)
        step = value / slope
        x -= step
        if np.max(np.abs(step)) <= NEWTON_TOL:
            break
    return x


def _gauss_points(K: int) -> np.ndarray:
    seeds = np.cos(np.pi * (4.0 * np.arange(1, K + 1) - 1.0) / (4.0 * K + 2.0))

    def fun(x):
        p, dp, _, _ = legendre_eval(K, x)
        return p, dp
    return np.sort(_newton(fun, seeds))


def _radau_points(K: int) -> np.ndarray:
    if K == 1:
        return np.array([-1.0])
    seeds = -np.cos(2.0 * np.pi * np.arange(1, K) / (2.0 * K - 1.0))

    def fun(x):
        p, dp, q, dq = legendre_eval(K, x)
        return p + q, dp + dq
    interior = _newton(fun, seeds)
    return np.sort(np.concatenate(([-1.0], interior)))


def _lobatto_points(K: int) -> np.ndarray:
    if K == 2:
        return np.array([-1.0, 1.0])
    n = K - 1
    seeds = -np.cos(np.pi * np.arange(1, n) / n)

    def fun(x):
        p, dp, _, _ = legendre_eval(n, x)
        # Legendre's equation gives P'' in the open interval
        ddp = (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)
        return dp, ddp
    interior = _newton(fun, seeds)
    return np.sort(np.concatenate(([-1.0], interior, [1.0])))


def legendre_nodes(kind: NodeKind, K: int) -> NodeSet:
    """Return the K points of a Legendre family, sorted ascending.

    Args:
        kind: LG (roots of P_K), LGR (roots of P_K + P_{K-1}, includes -1),
            LGL (endpoints plus roots of P'_{K-1}) or Uniform.
        K: Number of points.

    Returns:
        NodeSet of the requested family.

    Raises:
        SizeError: K below the family minimum.
    """
    kind = NodeKind(kind)
    K = int(K)
    minimum = 2 if kind is NodeKind.LGL else 1
    if K < minimum:
        raise SizeError(f"{kind.value} node sets need K >= {minimum}, got {K}")
    if kind is NodeKind.LG:
        points = _gauss_points(K)
    elif kind is NodeKind.LGR:
        points = _radau_points(K)
    elif kind is NodeKind.LGL:
        points = _lobatto_points(K)
    elif kind is NodeKind.UNIFORM:
        points = np.array([0.0]) if K == 1 else np.linspace(-1.0, 1.0, K)
    else:
        raise SizeError("Custom node sets are built with custom_nodes()")
    return NodeSet(kind, points)


def custom_nodes(points) -> NodeSet:
    return NodeSet(NodeKind.CUSTOM, np.sort(np.asarray(points, dtype=float)))


def barycentric_build(nodes) -> BarycentricBasis:
    """Build the barycentric basis for pairwise distinct nodes.

    Args:
        nodes: Sequence of interpolation nodes (any order) or a NodeSet.

    Returns:
        BarycentricBasis with unit-max weights and the nodal
        differentiation matrix.

    Raises:
        DegeneracyError: if two nodes coincide.
    """
    if isinstance(nodes, NodeSet):
        nodes = nodes.points
    t = np.asarray(nodes, dtype=float).reshape(-1)
    if t.size == 0:
        raise SizeError("At least one node is required")
    if t.size > 1:
        gaps = np.diff(np.sort(t))
        scale = max(1.0, float(np.ptp(t)))
        if np.min(gaps) <= NODE_TOL * scale:
            raise DegeneracyError("Interpolation nodes must be pairwise distinct")
    diff = np.subtract.outer(t, t)
    np.fill_diagonal(diff, 1.0)
    weights = 1.0 / np.prod(diff, axis=1)
    weights = weights / np.max(np.abs(weights))

    # D[i, j] = (w_j / w_i) / (t_i - t_j), diagonal from the zero row-sum rule
    dmat = np.divide.outer(1.0 / weights, 1.0 / weights) / diff
    np.fill_diagonal(dmat, 0.0)
    np.fill_diagonal(dmat, -np.sum(dmat, axis=1))
    t.setflags(write=False)
    weights.setflags(write=False)
    dmat.setflags(write=False)
    return BarycentricBasis(nodes=t, weights=weights, diff_matrix=dmat)


def interpolation_matrix(basis: BarycentricBasis, targets) -> np.ndarray:
    """Matrix L with L[p, j] = l_j(targets[p]).

    Rows for targets that coincide with a node are exact unit vectors.
    """
    x = np.atleast_1d(np.asarray(targets, dtype=float))
    diff = np.subtract.outer(x, basis.nodes)
    hit = np.abs(diff) <= NODE_TOL * max(1.0, float(np.max(np.abs(basis.nodes))))
    safe = np.where(hit, 1.0, diff)
    terms = basis.weights / safe
    rows = terms / np.sum(terms, axis=1, keepdims=True)
    on_node = np.any(hit, axis=1)
    if np.any(on_node):
        rows[on_node] = hit[on_node].astype(float)
    return rows


def derivative_matrix(basis: BarycentricBasis, targets) -> np.ndarray:
    """Matrix whose rows give p'(target) from nodal values.

    The derivative polynomial is interpolated from its nodal values D v,
    which keeps evaluation stable close to nodes.
    """
    return interpolation_matrix(basis, targets) @ basis.diff_matrix


def _check_values(basis: BarycentricBasis, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != basis.count:
        raise SizeError(f"Expected {basis.count} values per component, got {v.shape[-1]}")
    return v


def interp_eval(basis: BarycentricBasis, values, t):
    """Evaluate the interpolant through (nodes, values) at t.

    values may be (K,) or (n, K); t may be scalar or an array. Scalars in,
    scalars out.
    """
    v = _check_values(basis, values)
    result = v @ interpolation_matrix(basis, t).T
    if np.ndim(t) == 0:
        return result[..., 0] if v.ndim > 1 else float(result[0])
    return result


def interp_deriv(basis: BarycentricBasis, values, t):
    """Derivative of the interpolant at t; same shape rules as interp_eval."""
    v = _check_values(basis, values)
    result = v @ derivative_matrix(basis, t).T
    if np.ndim(t) == 0:
        return result[..., 0] if v.ndim > 1 else float(result[0])
    return result


def gauss_quadrature(K: int) -> QuadratureRule:
    """K-point Gauss-Legendre rule, exact through degree 2K-1."""
    if int(K) < 1:
        raise SizeError(f"Gauss quadrature needs K >= 1, got {K}")
    x = legendre_nodes(NodeKind.LG, K).points
    _, dp, _, _ = legendre_eval(K, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return QuadratureRule(abscissae=x, weights=w, exactness_degree=2 * K - 1)


def radau_quadrature(K: int) -> QuadratureRule:
    """K-point Gauss-Radau rule including -1, exact through degree 2K-2."""
    x = legendre_nodes(NodeKind.LGR, K).points
    if K == 1:
        return QuadratureRule(abscissae=x, weights=np.array([2.0]), exactness_degree=0)
    _, _, q, _ = legendre_eval(K, x)
    w = (1.0 - x) / (K * K * q * q)
    w[0] = 2.0 / (K * K)
    return QuadratureRule(abscissae=x, weights=w, exactness_degree=2 * K - 2)


def lobatto_quadrature(K: int) -> QuadratureRule:
    """K-point Gauss-Lobatto rule including both endpoints, exact through 2K-3."""
    x = legendre_nodes(NodeKind.LGL, K).points
    p, _, _, _ = legendre_eval(K - 1, x)
    w = 2.0 / (K * (K - 1) * p * p)
    return QuadratureRule(abscissae=x, weights=w, exactness_degree=2 * K - 3)


def interpolatory_weights(nodes) -> np.ndarray:
    """Weights of the interpolatory quadrature rule on arbitrary nodes."""
    basis = barycentric_build(nodes)
    rule = gauss_quadrature(basis.count)
    return rule.weights @ interpolation_matrix(basis, rule.abscissae)


def quadrature_for(nodes: NodeSet) -> QuadratureRule:
    """Quadrature rule that uses exactly the given nodes."""
    K = nodes.count
    if nodes.kind is NodeKind.LG:
        return gauss_quadrature(K)
    if nodes.kind is NodeKind.LGR:
        return radau_quadrature(K)
    if nodes.kind is NodeKind.LGL:
        return lobatto_quadrature(K)
    return QuadratureRule(abscissae=nodes.points, weights=interpolatory_weights(nodes.points),
                          exactness_degree=K - 1)
