import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynopt.errors import DegeneracyError, SizeError
from dynopt.poly import (NodeKind, barycentric_build, custom_nodes, derivative_matrix, gauss_quadrature,
                         interp_deriv, interp_eval, interpolation_matrix, interpolatory_weights, legendre_eval,
                         legendre_nodes, lobatto_quadrature, quadrature_for, radau_quadrature)


class TestLegendreNodesUnit:
    """Unit tests for the Legendre-family node sets."""

    @pytest.mark.unit
    def test_gauss_single_point(self):
        """UT001: LG with one point - Should return the root of P1, zero."""
        nodes = legendre_nodes(NodeKind.LG, 1)
        assert nodes.count == 1
        assert nodes.points[0] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.unit
    def test_gauss_two_points(self):
        """UT002: LG with two points - Should return -+1/sqrt(3)."""
        nodes = legendre_nodes(NodeKind.LG, 2)
        np.testing.assert_allclose(nodes.points, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-14)

    @pytest.mark.unit
    def test_radau_two_points(self):
        """UT003: LGR with two points - Should return -1 and 1/3."""
        nodes = legendre_nodes(NodeKind.LGR, 2)
        np.testing.assert_allclose(nodes.points, [-1.0, 1.0 / 3.0], atol=1e-14)

    @pytest.mark.unit
    def test_lobatto_three_points(self):
        """UT004: LGL with three points - Should return -1, 0 and 1."""
        nodes = legendre_nodes(NodeKind.LGL, 3)
        np.testing.assert_allclose(nodes.points, [-1.0, 0.0, 1.0], atol=1e-14)

    @pytest.mark.unit
    def test_endpoint_membership(self):
        """UT005: Endpoint membership - Should match the family definitions."""
        lg, lgr, lgl = (legendre_nodes(kind, 2) for kind in (NodeKind.LG, NodeKind.LGR, NodeKind.LGL))
        assert not lg.contains(-1.0) and not lg.contains(1.0)
        assert lgr.contains(-1.0) and not lgr.contains(1.0)
        assert lgl.contains(-1.0) and lgl.contains(1.0)

    @pytest.mark.unit
    @pytest.mark.parametrize("kind", [NodeKind.LG, NodeKind.LGR, NodeKind.LGL])
    @pytest.mark.parametrize("K", [2, 5, 9, 16, 32])
    def test_roots_satisfy_defining_polynomial(self, kind, K):
        """UT006: Root residual - Should vanish to 1e-12 for every family."""
        points = legendre_nodes(kind, K).points
        if kind is NodeKind.LG:
            residual = legendre_eval(K, points)[0]
        elif kind is NodeKind.LGR:
            p, _, q, _ = legendre_eval(K, points)
            residual = p + q
        else:
            residual = legendre_eval(K - 1, points[1:-1])[1]
        assert np.max(np.abs(residual), initial=0.0) <= 1e-12 * K * K
        assert np.all(np.diff(points) > 0.0)

    @pytest.mark.unit
    def test_invalid_count(self):
        """UT007: Too few points - Should raise SizeError."""
        with pytest.raises(SizeError):
            legendre_nodes(NodeKind.LGL, 1)
        with pytest.raises(SizeError):
            legendre_nodes(NodeKind.LG, 0)

    @pytest.mark.unit
    def test_custom_nodes_sorted(self):
        """UT008: Custom points - Should be stored ascending."""
        nodes = custom_nodes([0.5, -0.5])
        assert nodes.kind is NodeKind.CUSTOM
        np.testing.assert_array_equal(nodes.points, [-0.5, 0.5])

    @pytest.mark.unit
    def test_custom_nodes_reject_duplicates(self):
        """UT009: Repeated custom point - Should raise DegeneracyError."""
        with pytest.raises(DegeneracyError):
            custom_nodes([0.0, 0.0])


class TestBarycentricUnit:
    """Unit tests for barycentric interpolation."""

    @pytest.mark.unit
    def test_single_node_weight(self):
        """UT010: One node - Should have weight one."""
        np.testing.assert_array_equal(barycentric_build([0.0]).weights, [1.0])

    @pytest.mark.unit
    def test_two_node_weights(self):
        """UT011: Nodes -1 and 1 - Should have weights proportional to -1 and 1."""
        w = barycentric_build([-1.0, 1.0]).weights
        np.testing.assert_allclose(w / w[1], [-1.0, 1.0])

    @pytest.mark.unit
    def test_three_node_weights(self):
        """UT012: Nodes 0, 1, 2 - Should have weights proportional to 1/2, -1, 1/2."""
        w = barycentric_build([0.0, 1.0, 2.0]).weights
        np.testing.assert_allclose(w / w[0] * 0.5, [0.5, -1.0, 0.5])

    @pytest.mark.unit
    def test_duplicate_nodes(self):
        """UT013: Duplicate nodes - Should raise DegeneracyError."""
        with pytest.raises(DegeneracyError):
            barycentric_build([0.0, 0.5, 0.5])

    @pytest.mark.unit
    def test_empty_nodes(self):
        """UT014: No nodes - Should raise SizeError."""
        with pytest.raises(SizeError):
            barycentric_build([])

    @pytest.mark.unit
    def test_constant_reproduction(self):
        """UT015: Constant values - Should interpolate to the constant with zero slope."""
        basis = barycentric_build([0.0, 1.0])
        assert interp_eval(basis, [3.0, 3.0], 0.5) == pytest.approx(3.0)
        assert interp_deriv(basis, [3.0, 3.0], 0.3) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.unit
    def test_linear_reproduction(self):
        """UT016: Linear values - Should reproduce the line and its slope."""
        basis = barycentric_build([0.0, 1.0])
        assert interp_eval(basis, [0.0, 1.0], 0.25) == pytest.approx(0.25)
        assert interp_deriv(basis, [0.0, 1.0], 0.7) == pytest.approx(1.0)

    @pytest.mark.unit
    def test_quadratic_reproduction(self):
        """UT017: Values of t^2 - Should give 0.25 and slope 1 at t = 0.5."""
        basis = barycentric_build([-1.0, 0.0, 1.0])
        assert interp_eval(basis, [1.0, 0.0, 1.0], 0.5) == pytest.approx(0.25)
        assert interp_deriv(basis, [1.0, 0.0, 1.0], 0.5) == pytest.approx(1.0)

    @pytest.mark.unit
    def test_exact_at_nodes(self):
        """UT018: Evaluation at a node - Should return the stored value exactly."""
        basis = barycentric_build([-1.0, -0.2, 0.4, 1.0])
        values = np.array([0.3, -1.7, 2.5, 9.0])
        out = interp_eval(basis, values, basis.nodes)
        np.testing.assert_array_equal(out, values)

    @pytest.mark.unit
    def test_derivative_at_nodes_matches_matrix(self):
        """UT019: Derivative at nodes - Should equal the differentiation matrix product."""
        basis = barycentric_build(legendre_nodes(NodeKind.LGL, 5))
        values = np.sin(basis.nodes)
        np.testing.assert_allclose(interp_deriv(basis, values, basis.nodes), basis.diff_matrix @ values,
                                   atol=1e-13)
        np.testing.assert_allclose(basis.diff_matrix.sum(axis=1), 0.0, atol=1e-12)

    @pytest.mark.unit
    def test_vector_valued_shapes(self):
        """UT020: Two components - Should return (2,) for a scalar time and (2, P) for an array."""
        basis = barycentric_build([0.0, 1.0])
        values = np.array([[0.0, 1.0], [2.0, 2.0]])
        assert interp_eval(basis, values, 0.5).shape == (2,)
        assert interp_eval(basis, values, np.array([0.1, 0.2, 0.3])).shape == (2, 3)

    @pytest.mark.unit
    def test_value_count_mismatch(self):
        """UT021: Wrong number of values - Should raise SizeError."""
        with pytest.raises(SizeError):
            interp_eval(barycentric_build([0.0, 1.0]), [1.0, 2.0, 3.0], 0.5)

    @pytest.mark.unit
    def test_matrices_rows(self):
        """UT022: Interpolation matrix rows - Should sum to one; derivative rows to zero."""
        basis = barycentric_build(legendre_nodes(NodeKind.LGR, 4))
        targets = np.linspace(-1.0, 1.0, 7)
        np.testing.assert_allclose(interpolation_matrix(basis, targets).sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(derivative_matrix(basis, targets).sum(axis=1), 0.0, atol=1e-11)


class TestQuadratureUnit:
    """Unit tests for the quadrature rules."""

    @pytest.mark.unit
    def test_one_point_gauss(self):
        """UT023: One-point Gauss - Should be the midpoint rule with weight 2."""
        rule = gauss_quadrature(1)
        np.testing.assert_allclose(rule.abscissae, [0.0], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [2.0])
        assert rule.exactness_degree == 1

    @pytest.mark.unit
    def test_odd_cubic_vanishes(self):
        """UT024: t^3 over [-1, 1] with two points - Should integrate to zero."""
        assert gauss_quadrature(2).integrate(lambda t: t ** 3) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.unit
    def test_mapped_cubic(self):
        """UT025: t^3 over [0, 1] with two points - Should integrate to 0.25."""
        assert gauss_quadrature(2).integrate(lambda t: t ** 3, 0.0, 1.0) == pytest.approx(0.25, rel=1e-14)

    @pytest.mark.unit
    def test_invalid_count(self):
        """UT026: Zero Gauss points - Should raise SizeError."""
        with pytest.raises(SizeError):
            gauss_quadrature(0)

    @pytest.mark.unit
    @pytest.mark.parametrize("factory", [gauss_quadrature, radau_quadrature, lobatto_quadrature])
    @pytest.mark.parametrize("K", [2, 3, 6])
    def test_exactness_and_first_failure(self, factory, K):
        """UT027: Monomials - Should be exact through the exactness degree and miss the next even degree."""
        rule = factory(K)
        assert rule.weights.sum() == pytest.approx(2.0, rel=1e-13)
        assert np.all(rule.weights > 0.0)
        for d in range(rule.exactness_degree + 1):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            assert rule.integrate(lambda t: t ** d) == pytest.approx(exact, abs=1e-12)
        d = rule.exactness_degree + 1
        d += d % 2
        assert abs(rule.integrate(lambda t: t ** d) - 2.0 / (d + 1)) > 1e-8

    @pytest.mark.unit
    def test_interpolatory_weights_on_uniform_nodes(self):
        """UT028: Three uniform nodes - Should give Simpson weights 1/3, 4/3, 1/3."""
        np.testing.assert_allclose(interpolatory_weights([-1.0, 0.0, 1.0]), [1 / 3, 4 / 3, 1 / 3], atol=1e-14)

    @pytest.mark.unit
    def test_quadrature_for_custom_set(self):
        """UT029: Custom node set - Should use interpolatory weights on exactly those nodes."""
        nodes = custom_nodes([-0.5, 0.5])
        rule = quadrature_for(nodes)
        np.testing.assert_array_equal(rule.abscissae, nodes.points)
        assert rule.integrate(lambda t: 3.0 * t + 1.0) == pytest.approx(2.0)


class TestPolyProperty:
    """Property-based tests for interpolation and quadrature."""

    @pytest.mark.property
    @settings(max_examples=40, deadline=None)
    @given(kind=st.sampled_from([NodeKind.LG, NodeKind.LGR, NodeKind.LGL]), K=st.integers(2, 32),
           seed=st.integers(0, 2 ** 16))
    def test_polynomial_reproduction(self, kind, K, seed):
        """PT001: Random degree K-1 polynomial - Should be reproduced at random points to 1e-10."""
        gen = np.random.default_rng(seed)
        coefficients = gen.standard_normal(K)
        poly = np.polynomial.Legendre(coefficients)
        basis = barycentric_build(legendre_nodes(kind, K))
        targets = gen.uniform(-1.0, 1.0, 100)
        approx = interp_eval(basis, poly(basis.nodes), targets)
        scale = max(1.0, float(np.max(np.abs(poly(targets)))))
        assert np.max(np.abs(approx - poly(targets))) <= 1e-10 * scale

    @pytest.mark.property
    @settings(max_examples=30, deadline=None)
    @given(K=st.integers(2, 12), t=st.floats(-0.9, 0.9), frequency=st.floats(0.1, 2.0))
    def test_derivative_matches_central_difference(self, K, t, frequency):
        """PT002: Smooth values - Should have interp_deriv equal to the central difference to 1e-6."""
        basis = barycentric_build(legendre_nodes(NodeKind.LGL, K))
        values = np.cos(frequency * basis.nodes)
        step = 1e-5
        fd = (interp_eval(basis, values, t + step) - interp_eval(basis, values, t - step)) / (2 * step)
        assert interp_deriv(basis, values, t) == pytest.approx(fd, abs=1e-6)
