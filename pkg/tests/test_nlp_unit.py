import time

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import OptimizeResult

from dynopt.errors import ConfigurationError, SizeError
from dynopt.interior_point import solve as ip_solve
from dynopt.kkt import (DenseKktSolver, SingularKktError, StructuredKktSolver, arrowhead_order, assemble_kkt,
                        make_kkt_solver)
from dynopt.mesh import Mesh
from dynopt.nlp import (DecisionLayout, LayoutBuilder, LinearTerm, PointwiseTerm, StructuredNlp,
                        arrowhead_violations, derivative_check, is_block_arrowhead, is_strictly_banded,
                        jacobian_pattern, lift_parameters, pattern_covers, sampled_pattern)
from dynopt.problem import DopProblem, FixedHorizon
from dynopt.schemes import CollocationOptions, ResidualOptions, Scheme
from dynopt.solver_interface import NlpEvaluator, ScipySolver, SolverOptions, SolveStatus
from dynopt.transcribe import collocate, residual_phase1, rk_transcribe


def _rate_estimate():
    """xdot = theta x with x(0) = 1 and x(1) = e, so theta = 1."""
    return DopProblem(
        n_x=1, n_u=0, n_theta=1, horizon=FixedHorizon(0.0, 1.0),
        dynamics=lambda xdot, x, u, theta, t: np.array([xdot[0] - theta[0] * x[0]]),
        boundary_eq=lambda x0, xf, theta, t0, tf: np.array([x0[0] - 1.0, xf[0] - np.e]), n_eq=2,
        theta_guess=[0.5])


def _hs_nlp(problem, intervals):
    return collocate(problem, Mesh.uniform(0.0, 1.0, intervals),
                     CollocationOptions(scheme=Scheme('HermiteSimpson')))


def _trapezoidal_nlp(problem, intervals):
    return collocate(problem, Mesh.uniform(0.0, 1.0, intervals),
                     CollocationOptions(scheme=Scheme('Trapezoidal')))


def _coupled_decay(n_x):
    """xdot = M x with a tridiagonal M, x(0) = 1."""
    matrix = -2.0 * np.eye(n_x) + 0.5 * np.eye(n_x, k=1) + 0.5 * np.eye(n_x, k=-1)
    return DopProblem(
        n_x=n_x, n_u=0, horizon=FixedHorizon(0.0, 1.0),
        dynamics=lambda xdot, x, u, theta, t: xdot - matrix @ x,
        boundary_eq=lambda x0, xf, theta, t0, tf: x0 - 1.0, n_eq=n_x)


def _square_term():
    """f(a, b) = a^2 b at three points, arguments read straight from z."""
    return PointwiseTerm('square', lambda args: (args[0] ** 2 * args[1])[None, :], sp.identity(6), None,
                         n_args=2, n_points=3, n_out=1)


class TestLayoutUnit:
    """Unit tests for the stage-ordered layout builder."""

    @pytest.mark.unit
    def test_blocks_and_keys(self):
        """UT601: Two blocks - Should be contiguous with broadcast bounds and per-entry keys."""
        builder = LayoutBuilder()
        first = builder.add(2, 0, ('x', 0), -1.0, 1.0, 0.0)
        second = builder.add(1, -1, ('pi',), [-np.inf], [np.inf], [3.0])
        stage, lower, upper, guess = builder.arrays()
        assert (first, second) == (slice(0, 2), slice(2, 3))
        np.testing.assert_array_equal(stage, [0, 0, -1])
        np.testing.assert_array_equal(lower[:2], [-1.0, -1.0])
        assert guess[2] == 3.0
        assert builder.keys == [('x', 0, 0), ('x', 0, 1), ('pi', 0)]


class TestTermsUnit:
    """Unit tests for linear and pointwise terms."""

    @pytest.mark.unit
    def test_linear_term(self):
        """UT602: Linear rows - Should evaluate M z + c with a constant Jacobian."""
        term = LinearTerm('sum', [[1.0, 1.0, 0.0]], offset=[-1.0])
        z = np.array([0.25, 0.5, 9.0])
        np.testing.assert_allclose(term.values(z), [-0.25])
        assert term.jacobian(z).nnz == 2
        assert term.hessian(z, np.ones(1)).nnz == 0

    @pytest.mark.unit
    def test_pointwise_jacobian(self, rng):
        """UT603: a^2 b by finite differences - Should match the analytic partials."""
        term = _square_term()
        z = rng.uniform(0.5, 2.0, 6)
        a, b = z[:3], z[3:]
        expected = np.hstack([np.diag(2.0 * a * b), np.diag(a * a)])
        np.testing.assert_allclose(term.jacobian(z).toarray(), expected, rtol=1e-8)

    @pytest.mark.unit
    def test_pointwise_hessian(self, rng):
        """UT604: Weighted Hessian of a^2 b - Should match the analytic second derivatives."""
        term = _square_term()
        z = rng.uniform(0.5, 2.0, 6)
        w = np.array([1.0, -2.0, 0.5])
        a, b = z[:3], z[3:]
        expected = np.block([[np.diag(2.0 * b * w), np.diag(2.0 * a * w)],
                             [np.diag(2.0 * a * w), np.zeros((3, 3))]])
        np.testing.assert_allclose(term.hessian(z, w).toarray(), expected, rtol=1e-5, atol=1e-6)

    @pytest.mark.unit
    def test_pointwise_reduction(self):
        """UT605: Summing reduction - Should return one row with the summed outputs."""
        term = PointwiseTerm('total', lambda args: args, sp.identity(3), None, n_args=1, n_points=3, n_out=1,
                             reduce=sp.csr_matrix(np.ones((1, 3))))
        assert term.n_rows == 1
        np.testing.assert_allclose(term.values(np.array([1.0, 2.0, 3.0])), [6.0])

    @pytest.mark.unit
    def test_argmap_size_mismatch(self):
        """UT606: argmap with the wrong row count - Should raise SizeError."""
        with pytest.raises(SizeError):
            PointwiseTerm('bad', lambda args: args, sp.identity(4), None, n_args=2, n_points=3, n_out=1)


class TestStructureUnit:
    """Unit tests for sparsity structure of transcribed problems."""

    @pytest.mark.unit
    @pytest.mark.parametrize('build', [
        lambda p: _hs_nlp(p, 6),
        lambda p: residual_phase1(p, Mesh.uniform(0.0, 1.0, 6), ResidualOptions()),
        lambda p: rk_transcribe(p, Mesh.uniform(0.0, 1.0, 6), 'rk4'),
    ], ids=['collocation', 'residual', 'runge-kutta'])
    def test_block_arrowhead(self, decay_problem, build):
        """UT607: Every transcription - Should give a block-arrowhead Jacobian."""
        nlp = build(decay_problem)
        assert is_block_arrowhead(nlp)

    @pytest.mark.unit
    def test_fifty_stage_trapezoidal(self):
        """UT625: Trapezoidal parameter estimate on 50 intervals - Should sample as a block arrowhead."""
        nlp = _trapezoidal_nlp(_rate_estimate(), 50)
        assert nlp.layout.n_stages >= 50
        assert is_block_arrowhead(nlp)
        sampled = sampled_pattern(nlp, nlp.z_guess)
        assert arrowhead_violations(sampled, nlp.row_stage, nlp.layout.var_stage) == []
        assert not is_strictly_banded(nlp)

    @pytest.mark.unit
    def test_declared_pattern_covers_sampled(self, decay_problem, rng):
        """UT608: Declared sparsity - Should contain every nonzero found by perturbation."""
        nlp = _hs_nlp(decay_problem, 4)
        z = nlp.z_guess + 0.1 * rng.standard_normal(nlp.n)
        assert pattern_covers(jacobian_pattern(nlp), sampled_pattern(nlp, z))

    @pytest.mark.unit
    def test_derivative_check_clean(self, decay_problem, rng):
        """UT609: Assembled derivatives - Should agree with central differences block by block."""
        nlp = _hs_nlp(decay_problem, 3)
        z = nlp.z_guess + 0.1 * rng.standard_normal(nlp.n)
        report = derivative_check(nlp, z)
        assert report
        assert not any(entry.flagged for entry in report)

    @pytest.mark.unit
    def test_arrowhead_violations(self):
        """UT610: Row of stage 0 touching stage 2 - Should be reported."""
        pattern = sp.csr_matrix(np.array([[1, 1, 0, 1], [0, 1, 1, 1]]))
        var_stage = np.array([0, 1, 2, -1])
        assert arrowhead_violations(pattern, np.array([0, 1]), var_stage) == []
        bad = sp.csr_matrix(np.array([[1, 0, 1, 0]]))
        assert arrowhead_violations(bad, np.array([0]), var_stage) == [0]

    @pytest.mark.unit
    def test_lift_parameters(self):
        """UT611: Lifted parameter copies - Should add one copy per stage linked by equalities."""
        nlp = _hs_nlp(_rate_estimate(), 4)
        stages = nlp.layout.n_stages
        lifted = lift_parameters(nlp)
        assert lifted.n == nlp.n + stages - 1
        assert lifted.meta['lifted']
        assert not np.any(lifted.layout.var_stage < 0)
        np.testing.assert_allclose(lifted.constraint_values(lifted.z_guess)[-(stages - 1):], 0.0)
        assert is_block_arrowhead(lifted)
        assert not is_strictly_banded(nlp)

    @pytest.mark.integration
    def test_lifted_solve_matches(self, tight_solver):
        """IT601: Parameter estimate with and without lifting - Should agree."""
        nlp = _hs_nlp(_rate_estimate(), 4)
        plain = ip_solve(nlp, options=tight_solver)
        lifted = ip_solve(lift_parameters(nlp), options=tight_solver)
        assert plain.succeeded and lifted.succeeded
        theta = plain.x[nlp.layout.param_slice][0]
        assert theta == pytest.approx(1.0, abs=1e-4)
        assert lifted.x[nlp.layout.param_slice][0] == pytest.approx(theta, abs=1e-7)


class TestKktUnit:
    """Unit tests for KKT assembly and factorization."""

    @pytest.mark.unit
    def test_arrowhead_order(self):
        """UT612: Mixed stage tags - Should order by stage, variables before rows, border last."""
        order = arrowhead_order(np.array([0, 0, 1, -1]), np.array([0, 1, -1]))
        np.testing.assert_array_equal(order, [0, 1, 4, 2, 5, 3, 6])

    @pytest.mark.unit
    def test_structured_matches_dense(self, decay_problem, rng):
        """UT613: Same KKT system - Should give the same solution from both factorizations."""
        nlp = _hs_nlp(decay_problem, 8)
        z = nlp.z_guess
        matrix = assemble_kkt(nlp.hessian(z, np.ones(nlp.m)), nlp.jacobian(z), np.ones(nlp.n), 0.0, 1e-8)
        rhs = rng.standard_normal(matrix.shape[0])
        structured = StructuredKktSolver(nlp.layout.var_stage, nlp.row_stage).solve(matrix, rhs)
        dense = DenseKktSolver().solve(matrix, rhs)
        np.testing.assert_allclose(structured, dense, rtol=1e-7, atol=1e-9)

    @pytest.mark.unit
    def test_structured_matches_dense_with_border(self, rng):
        """UT626: 50-stage trapezoidal system with a parameter border - Should match dense LU to 1e-10."""
        nlp = _trapezoidal_nlp(_rate_estimate(), 50)
        z = nlp.z_guess
        matrix = assemble_kkt(nlp.hessian(z, np.ones(nlp.m)), nlp.jacobian(z), np.full(nlp.n, 10.0), 0.0, 1.0)
        rhs = rng.standard_normal(matrix.shape[0])
        solver = StructuredKktSolver(nlp.layout.var_stage, nlp.row_stage)
        assert solver.n_border > 0
        structured = solver.solve(matrix, rhs)
        dense = DenseKktSolver().solve(matrix, rhs)
        np.testing.assert_allclose(structured, dense, rtol=1e-10, atol=1e-10 * np.max(np.abs(dense)))

    @pytest.mark.unit
    def test_singular_matrix(self):
        """UT614: Rank-deficient matrix - Should raise SingularKktError."""
        with pytest.raises(SingularKktError):
            DenseKktSolver().factorize(sp.csc_matrix(np.ones((2, 2))))

    @pytest.mark.unit
    def test_unknown_solver(self):
        """UT615: Unknown KKT solver name - Should raise ValueError."""
        assert make_kkt_solver('dense', np.zeros(1), np.zeros(0)).name == 'dense'
        with pytest.raises(ValueError):
            make_kkt_solver('cholmod', np.zeros(1), np.zeros(0))


class TestKktPerformance:
    """Fill-in growth of the structured factorization."""

    @staticmethod
    def _fill(problem, intervals):
        nlp = _hs_nlp(problem, intervals)
        z = nlp.z_guess
        matrix = assemble_kkt(nlp.hessian(z, np.ones(nlp.m)), nlp.jacobian(z), np.ones(nlp.n), 0.0, 1e-8)
        factor = StructuredKktSolver(nlp.layout.var_stage, nlp.row_stage).factorize(matrix)
        return factor.nnz

    @pytest.mark.performance
    def test_linear_fill(self, decay_problem):
        """PF601: Doubling the intervals - Should roughly double the factor size."""
        fills = [self._fill(decay_problem, n) for n in (16, 32, 64)]
        assert fills[1] / fills[0] < 2.3
        assert fills[2] / fills[1] < 2.3

    @pytest.mark.performance
    def test_linear_fill_with_parameters(self):
        """PF602: Parameter border - Should keep the fill linear in the interval count."""
        fills = [self._fill(_rate_estimate(), n) for n in (16, 32, 64)]
        assert fills[1] / fills[0] < 2.3
        assert fills[2] / fills[1] < 2.3

    @staticmethod
    def _loglog_fit(sizes, values):
        """Slope and R^2 of log(values) against log(sizes)."""
        x, y = np.log(sizes), np.log(values)
        slope, intercept = np.polyfit(x, y, 1)
        fitted = slope * x + intercept
        r2 = 1.0 - np.sum((y - fitted) ** 2) / np.sum((y - y.mean()) ** 2)
        return slope, r2

    @pytest.mark.performance
    def test_trapezoidal_fill_slope(self):
        """PF603: Trapezoidal parameter estimate on 25 to 200 stages - Should grow the factor linearly."""
        sizes = [25, 50, 100, 200]
        fills = []
        for n in sizes:
            nlp = _trapezoidal_nlp(_rate_estimate(), n)
            z = nlp.z_guess
            matrix = assemble_kkt(nlp.hessian(z, np.ones(nlp.m)), nlp.jacobian(z), np.ones(nlp.n), 0.0, 1e-8)
            fills.append(StructuredKktSolver(nlp.layout.var_stage, nlp.row_stage).factorize(matrix).nnz)
        slope, r2 = self._loglog_fit(sizes, fills)
        assert 0.8 <= slope <= 1.2
        assert r2 >= 0.95

    @pytest.mark.performance
    def test_factorization_time_slope(self):
        """PF604: Factorization time on 25 to 200 stages - Should grow linearly."""
        sizes = [25, 50, 100, 200]
        problem = _coupled_decay(20)
        times = []
        for n in sizes:
            nlp = _trapezoidal_nlp(problem, n)
            z = nlp.z_guess
            matrix = assemble_kkt(nlp.hessian(z, np.ones(nlp.m)), nlp.jacobian(z), np.ones(nlp.n), 0.0, 1e-8)
            solver = StructuredKktSolver(nlp.layout.var_stage, nlp.row_stage)
            rhs = np.ones(matrix.shape[0])
            best = np.inf
            for _ in range(7):
                started = time.perf_counter()
                solver.solve(matrix, rhs)
                best = min(best, time.perf_counter() - started)
            times.append(best)
        slope, r2 = self._loglog_fit(sizes, times)
        assert 0.8 <= slope <= 1.2
        assert r2 >= 0.95


class TestInteriorPointUnit:
    """Unit tests for the interior-point solver on small programs."""

    @staticmethod
    def _projection(upper=np.inf):
        """min (z0 - 1)^2 + (z1 - 2)^2 subject to z0 + z1 = 1 and z1 <= upper."""
        builder = LayoutBuilder()
        builder.add(2, 0, ('z',), -np.inf, [np.inf, upper], 0.0)
        stage, lower, upper_arr, guess = builder.arrays()
        layout = DecisionLayout(size=2, var_stage=stage, var_keys=builder.keys, param_slice=slice(2, 2))
        cost = PointwiseTerm('distance', lambda args: args ** 2, sp.identity(2), [-1.0, -2.0],
                             n_args=1, n_points=2, n_out=1)
        row = LinearTerm('sum', [[1.0, 1.0]], offset=[-1.0], row_stage=0)
        return StructuredNlp(layout=layout, cost_terms=[cost], constraints=[row], z_lower=lower,
                             z_upper=upper_arr, z_guess=guess, name='projection')

    @pytest.mark.unit
    def test_equality_only(self, tight_solver):
        """UT616: Projection onto a line - Should reach (0, 1) with cost 2."""
        report = ip_solve(self._projection(), options=tight_solver)
        assert report.succeeded
        np.testing.assert_allclose(report.x, [0.0, 1.0], atol=1e-7)
        assert report.objective == pytest.approx(2.0)
        assert report.multipliers[0] == pytest.approx(2.0, rel=1e-6)

    @pytest.mark.unit
    def test_active_bound(self, tight_solver):
        """UT617: Upper bound z1 <= 0.5 - Should stop on the bound with a positive bound multiplier."""
        report = ip_solve(self._projection(upper=0.5), options=tight_solver)
        assert report.succeeded
        np.testing.assert_allclose(report.x, [0.5, 0.5], atol=1e-7)
        assert report.z_upper[1] == pytest.approx(2.0, rel=1e-5)
        assert report.multipliers[0] == pytest.approx(1.0, rel=1e-5)
        assert report.constraint_violation < 1e-8

    @pytest.mark.unit
    @pytest.mark.parametrize('options', [
        SolverOptions(tol=1e-10, kkt='dense'),
        SolverOptions(tol=1e-10, hessian='bfgs'),
        SolverOptions(tol=1e-10, scaling=False),
    ], ids=['dense', 'bfgs', 'unscaled'])
    def test_variants_agree(self, options):
        """UT618: Dense KKT, BFGS and unscaled runs - Should find the same point."""
        report = ip_solve(self._projection(upper=0.5), options=options)
        assert report.succeeded
        np.testing.assert_allclose(report.x, [0.5, 0.5], atol=1e-6)

    @pytest.mark.unit
    def test_callback_and_log(self, mocker):
        """UT619: Iteration callback - Should be called with the primal point every iteration."""
        callback = mocker.Mock()
        report = ip_solve(self._projection(), options=SolverOptions(tol=1e-10, callback=callback))
        assert callback.call_count == report.iterations
        iteration, z = callback.call_args[0]
        assert iteration == report.iterations and z.shape == (2,)
        assert report.log[0].startswith('iter')

    @pytest.mark.unit
    def test_iteration_cap(self):
        """UT620: One iteration allowed - Should stop with MaxIter."""
        report = ip_solve(self._projection(upper=0.5), options=SolverOptions(max_iter=1))
        assert report.status.value == 'MaxIter'

    @pytest.mark.unit
    def test_bad_initial_point(self):
        """UT621: Initial point of the wrong size - Should raise ValueError."""
        with pytest.raises(ValueError):
            ip_solve(self._projection(), init=np.zeros(3))

    @pytest.mark.unit
    def test_options_validation(self):
        """UT622: Invalid solver options - Should raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            SolverOptions(tol=0.0)
        with pytest.raises(ConfigurationError):
            SolverOptions(hessian='sr1')
        with pytest.raises(ConfigurationError):
            SolverOptions(kkt='ma57')


class TestSolverInterfaceUnit:
    """Unit tests for the external-solver surface."""

    @pytest.mark.unit
    def test_evaluator_surface(self):
        """UT623: Evaluator - Should expose sizes, bounds and Jacobian triplets."""
        nlp = TestInteriorPointUnit._projection(upper=0.5)
        evaluator = NlpEvaluator(nlp)
        assert (evaluator.n, evaluator.m) == (2, 1)
        rows, cols, vals = evaluator.jacobian_triplets(np.zeros(2))
        np.testing.assert_array_equal(np.sort(cols), [0, 1])
        np.testing.assert_allclose(vals, [1.0, 1.0])
        assert evaluator.variable_bounds()[1][1] == 0.5
        assert evaluator.cost(np.array([1.0, 2.0])) == pytest.approx(0.0)

    @pytest.mark.integration
    def test_scipy_cross_check(self, tight_solver):
        """IT602: trust-constr adapter on the equality projection - Should agree with the built-in solver."""
        nlp = TestInteriorPointUnit._projection()
        report = ScipySolver().solve(nlp, options=SolverOptions(tol=1e-10, max_iter=2000))
        reference = ip_solve(TestInteriorPointUnit._projection(), options=tight_solver)
        assert report.solver == 'scipy-trust-constr'
        np.testing.assert_allclose(report.x, reference.x, atol=1e-6)

    @pytest.mark.integration
    def test_scipy_status_honest(self):
        """IT603: trust-constr adapter near an active bound - Should only claim Optimal within tolerance."""
        tol = 1e-10
        report = ScipySolver().solve(TestInteriorPointUnit._projection(upper=0.5),
                                     options=SolverOptions(tol=tol, max_iter=2000))
        within = report.residuals['stationarity'] <= tol and report.constraint_violation <= tol
        assert report.succeeded == within
        if report.succeeded:
            np.testing.assert_allclose(report.x, [0.5, 0.5], atol=1e-5)

    @pytest.mark.unit
    @pytest.mark.parametrize('code,optimality,expected', [
        (1, 1e-11, SolveStatus.OPTIMAL),
        (2, 1e-11, SolveStatus.OPTIMAL),
        (2, 3e-4, SolveStatus.MAX_ITER),
        (0, 1e-11, SolveStatus.MAX_ITER),
        (3, 1e-11, SolveStatus.NUMERICAL_FAILURE),
    ])
    def test_scipy_status_mapping(self, mocker, code, optimality, expected):
        """UT624: trust-constr exit codes - Should report Optimal only when the residuals meet tol."""
        result = OptimizeResult(x=np.array([0.50008, 0.49992]), fun=2.0, v=[np.array([1.0])], nit=12,
                                status=code, optimality=optimality, constr_violation=0.0)
        mocker.patch('dynopt.solver_interface.minimize', return_value=result)
        report = ScipySolver().solve(TestInteriorPointUnit._projection(upper=0.5),
                                     options=SolverOptions(tol=1e-10))
        assert report.status is expected
