from dataclasses import replace

import numpy as np
import pytest

from dynopt.builtin_problems import quadratic_decay
from dynopt.errors import ConfigurationError, SolverFailure
from dynopt.mesh import Mesh
from dynopt.poly import NodeKind, legendre_nodes
from dynopt.refine import (HISTORY_COLUMNS, ErrorReport, RefineConfig, RoundRecord, history_frame, local_errors,
                           refine_mesh, solve_adaptive, violation_errors)
from dynopt.schemes import CollocationOptions, Scheme
from dynopt.trajectory import PiecewiseTrajectory, Solution


def _growth_solution(nodes, points, fun=None):
    """Solution whose state interpolates fun (default exp) on LGL nodes."""
    nodes = np.asarray(nodes, dtype=float)
    lobatto = legendre_nodes(NodeKind.LGL, points).points
    fun = fun or (lambda t: np.exp(t)[None, :])
    state = PiecewiseTrajectory.from_samples(nodes, [lobatto] * (nodes.size - 1), fun)
    inputs = PiecewiseTrajectory.constant(nodes, np.zeros(0))
    return Solution(state=state, inputs=inputs, theta=np.zeros(0), t0=float(nodes[0]), tf=float(nodes[-1]))


def _report(zeta, violations=None, zeta_max=None):
    zeta = np.asarray(zeta, dtype=float)
    return ErrorReport(zeta=zeta, componentwise=zeta[:, None], zeta_max=zeta if zeta_max is None else zeta_max,
                       relative=zeta, violations=np.zeros_like(zeta) if violations is None else violations)


class TestLocalErrorsUnit:
    """Unit tests for the integrated-residual error measures."""

    @pytest.mark.unit
    def test_accurate_trajectory(self, growth_problem):
        """UT701: High-degree interpolant of exp(t) - Should give a tiny zeta on every interval."""
        report = local_errors(_growth_solution(np.linspace(0.0, 1.0, 5), 6), growth_problem)
        assert report.zeta.shape == (4,)
        assert report.max < 1e-5
        assert report.max_violation == 0.0
        assert report.passes(1e-5, 1e-6)

    @pytest.mark.unit
    def test_linear_interpolant(self, growth_problem):
        """UT702: Straight line from 1 to e - Should measure the residual (e - 2) - (e - 1) t."""
        report = local_errors(_growth_solution([0.0, 1.0], 2), growth_problem)
        # ten Gauss points on the kinked |(e - 2) - (e - 1) t|
        points, weights = np.polynomial.legendre.leggauss(10)
        t = 0.5 * (points + 1.0)
        gauss = 0.5 * float(weights @ np.abs((np.e - 2.0) - (np.e - 1.0) * t))
        assert report.zeta[0] == pytest.approx(gauss, rel=1e-10)
        root = (np.e - 2.0) / (np.e - 1.0)
        exact = 0.5 * (np.e - 2.0) * root + 0.5 * (np.e - 1.0) * (1.0 - root) ** 2
        assert report.zeta[0] == pytest.approx(exact, rel=3e-2)
        assert report.componentwise[0, 0] == pytest.approx(report.zeta[0])
        assert report.zeta_max[0] == pytest.approx(1.0, abs=1e-12)
        assert report.relative[0] == pytest.approx(report.zeta[0] / np.e, rel=1e-9)

    @pytest.mark.unit
    def test_zeta_scales_with_width(self, growth_problem):
        """UT703: Halving linear interpolation intervals - Should shrink zeta roughly fourfold."""
        coarse = local_errors(_growth_solution(np.linspace(0.0, 1.0, 5), 2), growth_problem)
        fine = local_errors(_growth_solution(np.linspace(0.0, 1.0, 9), 2), growth_problem)
        ratio = coarse.max / fine.max
        assert 1.5 < ratio < 2.5

    @pytest.mark.unit
    def test_violations(self, growth_problem):
        """UT704: g = x - 2 on exp(t) - Should flag only the second half of [0, 1]."""
        problem = replace(growth_problem, path_inequality=lambda xdot, x, udot, u, theta, t: x[0] - 2.0, n_g=1)
        solution = _growth_solution([0.0, 0.5, 1.0], 6)
        violations = violation_errors(solution, problem)
        assert violations[0] == 0.0
        assert violations[1] == pytest.approx(np.e - 2.0, abs=1e-8)
        assert local_errors(solution, problem).max_violation == pytest.approx(np.e - 2.0, abs=1e-8)

    @pytest.mark.unit
    def test_no_inequalities(self, growth_problem):
        """UT705: Problem without path inequalities - Should report zero violations."""
        np.testing.assert_array_equal(violation_errors(_growth_solution([0.0, 0.5, 1.0], 3), growth_problem),
                                      [0.0, 0.0])


class TestErrorReportUnit:
    """Unit tests for ErrorReport decisions."""

    @pytest.mark.unit
    def test_failing_mask(self):
        """UT706: Mixed zeta and violations - Should fail intervals over either tolerance."""
        report = _report([1e-3, 1e-8, 1e-8], violations=np.array([0.0, 0.0, 1e-2]))
        np.testing.assert_array_equal(report.failing(1e-6, 1e-6), [True, False, True])
        assert not report.passes(1e-6, 1e-6)
        assert report.mean == pytest.approx((1e-3 + 2e-8) / 3.0)

    @pytest.mark.unit
    def test_sup_norm_selection(self):
        """UT707: Norm 'inf' - Should decide on the sampled maximum instead of zeta."""
        report = _report([1e-8, 1e-8], zeta_max=np.array([1e-8, 1e-3]))
        np.testing.assert_array_equal(report.failing(1e-6, 1e-6, norm='inf'), [False, True])
        assert report.passes(1e-6, 1e-6, norm='2')


class TestRefineConfigUnit:
    """Unit tests for RefineConfig validation."""

    @pytest.mark.unit
    @pytest.mark.parametrize('kwargs', [
        {'eta_tol': 0.0},
        {'eta_g': -1.0},
        {'cost_tol': 0.0},
        {'max_rounds': 0},
        {'strategy': 'Trisect'},
        {'norm': '1'},
    ])
    def test_invalid(self, kwargs):
        """UT708: Invalid refinement settings - Should raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            RefineConfig(**kwargs)

    @pytest.mark.unit
    def test_defaults(self):
        """UT709: Default settings - Should bisect under 1e-6 tolerances with warm starts."""
        config = RefineConfig()
        assert config.strategy == 'Bisect'
        assert config.eta_tol == 1e-6 and config.eta_g == 1e-6
        assert config.warm_start


class TestRefineMeshUnit:
    """Unit tests for refine_mesh strategies."""

    @pytest.mark.unit
    def test_bisect(self):
        """UT710: Bisect with one failing interval - Should split it at its midpoint only."""
        mesh = Mesh.uniform(0.0, 1.0, 4)
        refined = refine_mesh(mesh, _report([0.0, 1.0, 0.0, 0.0]), RefineConfig())
        np.testing.assert_allclose(refined.nodes, [0.0, 0.25, 0.375, 0.5, 0.75, 1.0])
        np.testing.assert_array_equal(refined.state_degree, [2] * 5)

    @pytest.mark.unit
    def test_passing_mesh_unchanged(self):
        """UT711: Every interval passing - Should return the same nodes and degrees."""
        mesh = Mesh.uniform(0.0, 1.0, 3)
        refined = refine_mesh(mesh, _report([0.0, 0.0, 0.0]), RefineConfig())
        np.testing.assert_array_equal(refined.nodes, mesh.nodes)
        np.testing.assert_array_equal(refined.state_degree, mesh.state_degree)

    @pytest.mark.unit
    def test_degree_increase(self):
        """UT712: DegreeIncrease - Should raise the failing interval's degrees and keep the nodes."""
        mesh = Mesh.uniform(0.0, 1.0, 4)
        refined = refine_mesh(mesh, _report([0.0, 1.0, 0.0, 0.0]), RefineConfig(strategy='DegreeIncrease'))
        np.testing.assert_array_equal(refined.nodes, mesh.nodes)
        np.testing.assert_array_equal(refined.state_degree, [2, 3, 2, 2])
        np.testing.assert_array_equal(refined.input_degree, [1, 2, 1, 1])

    @pytest.mark.unit
    def test_degree_increase_with_collocation(self):
        """UT713: DegreeIncrease on LGR(3) - Should move the failing interval to LGR(4)."""
        mesh = Scheme('LGR', 3).apply(Mesh.uniform(0.0, 1.0, 2))
        refined = refine_mesh(mesh, _report([1.0, 0.0]), RefineConfig(strategy='DegreeIncrease'))
        assert refined.collocation_count(0) == 4 and refined.collocation_count(1) == 3
        assert refined.collocation[0].kind is NodeKind.LGR
        np.testing.assert_array_equal(refined.state_degree, [4, 3])
        np.testing.assert_array_equal(refined.input_degree, [3, 2])

    @pytest.mark.unit
    def test_hybrid_bisects_at_cap(self):
        """UT714: Hybrid with the degree already at the cap - Should bisect instead."""
        mesh = Mesh.uniform(0.0, 1.0, 2)
        config = RefineConfig(strategy='Hybrid', max_degree=2)
        refined = refine_mesh(mesh, _report([1.0, 0.0]), config)
        np.testing.assert_allclose(refined.nodes, [0.0, 0.25, 0.5, 1.0])
        raised = refine_mesh(mesh, _report([1.0, 0.0]), replace(config, max_degree=5))
        np.testing.assert_array_equal(raised.state_degree, [3, 2])

    @pytest.mark.unit
    def test_violation_drives_refinement(self):
        """UT715: Small zeta but a violated inequality - Should still refine the interval."""
        mesh = Mesh.uniform(0.0, 1.0, 2)
        refined = refine_mesh(mesh, _report([0.0, 0.0], violations=np.array([0.0, 1e-3])), RefineConfig())
        assert refined.n_intervals == 3

    @pytest.mark.unit
    def test_report_mismatch(self):
        """UT716: Report for a different mesh - Should raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            refine_mesh(Mesh.uniform(0.0, 1.0, 3), _report([1.0, 0.0]), RefineConfig())


class TestHistoryUnit:
    """Unit tests for the round history table."""

    @pytest.mark.unit
    def test_history_frame(self):
        """UT717: Two round records - Should become a two-row frame with the fixed columns."""
        records = [RoundRecord(1, 4, 40, 1e-2, 5e-3, 0.0, 2.7, 12, 0.1),
                   RoundRecord(2, 6, 60, 1e-4, 5e-5, 0.0, 2.71, 8, 0.1)]
        frame = history_frame(records)
        assert list(frame.columns) == HISTORY_COLUMNS
        assert frame['intervals'].tolist() == [4, 6]

    @pytest.mark.unit
    def test_empty_history(self):
        """UT718: No rounds - Should still carry the columns."""
        assert list(history_frame([]).columns) == HISTORY_COLUMNS


class TestSolveAdaptiveIntegration:
    """Integration tests for the solve-refine loop."""

    @pytest.mark.integration
    def test_reaches_tolerance(self, growth_problem, tight_solver):
        """IT701: Trapezoidal collocation of xdot = x from two intervals - Should meet eta_tol 1e-6 within 8 rounds."""
        config = RefineConfig(eta_tol=1e-6, max_rounds=8, strategy='Hybrid')
        solution, history = solve_adaptive(growth_problem, Mesh.uniform(0.0, 1.0, 2),
                                           options=CollocationOptions(scheme=Scheme('Trapezoidal')),
                                           config=config, solver_options=tight_solver)
        assert solution.succeeded
        assert 1 < len(history) <= 8
        assert history[-1].max_zeta <= 1e-6
        zetas = [record.max_zeta for record in history]
        assert all(later <= earlier for earlier, later in zip(zetas, zetas[1:]))
        assert [record.round for record in history] == list(range(1, len(history) + 1))
        assert history[-1].intervals > history[0].intervals
        assert solution.state.final_value()[0] == pytest.approx(np.e, abs=1e-2)

    @pytest.mark.integration
    @pytest.mark.slow
    def test_warm_rounds_use_fewer_iterations(self, tight_solver):
        """IT703: Twenty seeded meshes of xdot = -x - x^2 - Should need fewer warm than cold iterations in 80%."""
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            t_final = rng.uniform(0.5, 2.0)
            interior = np.sort(rng.uniform(0.1, 0.9, rng.integers(1, 4))) * t_final
            mesh = Mesh.from_nodes(np.concatenate([[0.0], interior, [t_final]]))
            iterations = {}
            for warm in (True, False):
                config = RefineConfig(eta_tol=1e-12, max_rounds=3, warm_start=warm)
                _, history = solve_adaptive(quadratic_decay(t_final), mesh,
                                            options=CollocationOptions(scheme=Scheme('Trapezoidal')),
                                            config=config, solver_options=tight_solver)
                assert len(history) == 3
                iterations[warm] = sum(record.solver_iters for record in history[1:])
            wins += iterations[True] < iterations[False]
        assert wins >= 16

    @pytest.mark.integration
    def test_single_round_when_accurate(self, growth_problem, tight_solver):
        """IT702: Loose tolerances - Should stop after the first round."""
        _, history = solve_adaptive(growth_problem, Mesh.uniform(0.0, 1.0, 4),
                                    options=CollocationOptions(scheme=Scheme('LGR', 4)),
                                    config=RefineConfig(eta_tol=1.0, eta_g=1.0), solver_options=tight_solver)
        assert len(history) == 1

    @pytest.mark.unit
    def test_failed_round_raises(self, growth_problem, mocker):
        """UT719: A round ending without an optimal status - Should raise SolverFailure with the round index."""
        failed = mocker.Mock(succeeded=False, status='Infeasible', report=None)
        mocker.patch('dynopt.transcribe.solve', return_value=failed)
        with pytest.raises(SolverFailure) as info:
            solve_adaptive(growth_problem, Mesh.uniform(0.0, 1.0, 2),
                           options=CollocationOptions(scheme=Scheme('Trapezoidal')))
        assert info.value.round_index == 1
