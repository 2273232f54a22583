import numpy as np
import pytest

from dynopt.errors import SizeError
from dynopt.poly import NodeKind, barycentric_build, legendre_nodes
from dynopt.trajectory import PiecewiseTrajectory, Solution, StackSolution, continuity_defect


def _square(nodes):
    lobatto = legendre_nodes(NodeKind.LGL, 3).points
    return PiecewiseTrajectory.from_samples(np.asarray(nodes), [lobatto] * (len(nodes) - 1),
                                            lambda t: np.atleast_2d(t * t))


def _affine_pieces(gap):
    """y = t on [0, 1] and y = t + gap on [1, 2]."""
    basis = barycentric_build([-1.0, 1.0])
    return PiecewiseTrajectory(nodes=np.array([0.0, 1.0, 2.0]), bases=(basis, basis),
                               coefficients=(np.array([[0.0, 1.0]]), np.array([[1.0 + gap, 2.0 + gap]])))


class TestPiecewiseTrajectoryUnit:
    """Unit tests for piecewise Lagrange trajectories."""

    @pytest.mark.unit
    def test_reproduces_quadratic(self):
        """UT201: t^2 sampled on LGL(3) pieces - Should evaluate and differentiate exactly."""
        traj = _square([0.0, 0.5, 1.0])
        times = np.array([0.0, 0.1, 0.5, 0.7, 1.0])
        np.testing.assert_allclose(traj.evaluate(times), [times ** 2], atol=1e-13)
        np.testing.assert_allclose(traj.derivative(times), [2.0 * times], atol=1e-12)
        assert traj.evaluate(0.3).shape == (1, 1)

    @pytest.mark.unit
    def test_integral(self):
        """UT202: Integral of t^2 over [0, 1] - Should equal 1/3."""
        np.testing.assert_allclose(_square([0.0, 0.25, 1.0]).integral(), [1.0 / 3.0], rtol=1e-13)

    @pytest.mark.unit
    def test_half_open_evaluation(self):
        """UT203: Value at an interior node - Should come from the interval on its right."""
        traj = _affine_pieces(0.5)
        assert traj.evaluate(1.0)[0, 0] == pytest.approx(1.5)
        assert traj.evaluate(2.0)[0, 0] == pytest.approx(2.5)
        assert traj.end_value(0)[0] == pytest.approx(1.0)
        assert traj.start_value(1)[0] == pytest.approx(1.5)

    @pytest.mark.unit
    def test_final_value_prefers_terminal(self):
        """UT204: Explicit terminal value - Should be returned by final_value."""
        traj = _affine_pieces(0.0)
        assert traj.final_value()[0] == pytest.approx(2.0)
        terminal = PiecewiseTrajectory(nodes=traj.nodes, bases=traj.bases, coefficients=traj.coefficients,
                                       terminal=np.array([7.0]))
        assert terminal.final_value()[0] == 7.0

    @pytest.mark.unit
    def test_block_mismatch(self):
        """UT205: Coefficients not matching the basis - Should raise SizeError."""
        basis = barycentric_build([-1.0, 1.0])
        with pytest.raises(SizeError):
            PiecewiseTrajectory(nodes=np.array([0.0, 1.0]), bases=(basis,), coefficients=(np.zeros((1, 3)),))
        with pytest.raises(SizeError):
            PiecewiseTrajectory(nodes=np.array([0.0, 1.0, 2.0]), bases=(basis,), coefficients=(np.zeros((1, 2)),))

    @pytest.mark.unit
    def test_constant(self):
        """UT206: Constant trajectory - Should return the value everywhere with zero slope."""
        traj = PiecewiseTrajectory.constant(np.array([0.0, 0.5, 1.0]), [2.0, -1.0])
        np.testing.assert_allclose(traj.evaluate([0.0, 0.6, 1.0]), [[2.0] * 3, [-1.0] * 3])
        np.testing.assert_allclose(traj.derivative([0.2]), [[0.0], [0.0]])

    @pytest.mark.unit
    def test_rescaled(self):
        """UT207: Trajectory moved onto [2, 4] - Should keep values at mapped times."""
        traj = _square([0.0, 0.5, 1.0])
        moved = traj.rescaled(2.0, 4.0)
        np.testing.assert_allclose(moved.nodes, [2.0, 3.0, 4.0])
        np.testing.assert_allclose(moved.evaluate([2.6]), traj.evaluate([0.3]), atol=1e-14)

    @pytest.mark.unit
    def test_sampling(self):
        """UT208: Per-interval sampling - Should include the final node once."""
        traj = _square([0.0, 0.5, 1.0])
        times = traj.sample_times(4)
        assert times.size == 9
        assert times[0] == 0.0 and times[-1] == 1.0
        grid, values = traj.sample_uniform(11)
        assert values.shape == (1, 11)
        np.testing.assert_allclose(values[0], grid ** 2, atol=1e-13)


class TestContinuityDefectUnit:
    """Unit tests for continuity_defect."""

    @pytest.mark.unit
    def test_single_interval(self):
        """UT209: One interval - Should report zero."""
        assert continuity_defect(_square([0.0, 1.0])) == 0.0

    @pytest.mark.unit
    def test_gap(self):
        """UT210: Affine pieces with a jump of 0.5 - Should report 0.5."""
        assert continuity_defect(_affine_pieces(0.5)) == pytest.approx(0.5)

    @pytest.mark.unit
    def test_continuous_samples(self):
        """UT211: Samples of a smooth function - Should report a round-off sized defect."""
        assert continuity_defect(_square([0.0, 0.3, 0.6, 1.0])) < 1e-14


class TestSolutionUnit:
    """Unit tests for the solution containers."""

    @pytest.mark.unit
    def test_status_flags(self):
        """UT212: Status and indexing - Should expose success and the phase list."""
        traj = _affine_pieces(0.0)
        phase = Solution(state=traj, inputs=traj, theta=np.zeros(0), t0=0.0, tf=2.0, status='Optimal')
        stack = StackSolution(phases=[phase], theta=np.zeros(0), cost=1.0, status='MaxIter', iterations=3)
        assert phase.succeeded
        assert phase.zeta is None
        assert not stack.succeeded
        assert len(stack) == 1 and stack[0] is phase
