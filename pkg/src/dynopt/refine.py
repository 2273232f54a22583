"""
Error quantification of candidate solutions and adaptive mesh refinement.

Local errors are integrals of the dynamics residual of the continuous
trajectories over each interval; they never compare solutions on two
meshes. The refinement loop re-solves on a refined mesh, warm started from
the previous round, until every tolerance is met.
"""
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError, SolverFailure
from .logger import logger
from .mesh import Mesh
from .poly import gauss_quadrature
from .problem import DopProblem, PhaseStack, as_stack
from .schemes import MAX_DEGREE, CollocationOptions, default_degree, increase_degree
from .trajectory import Solution, StackSolution

VIOLATION_DENSITY = 101
STRATEGIES = ('Bisect', 'DegreeIncrease', 'Hybrid')
HISTORY_COLUMNS = ['round', 'intervals', 'decisions', 'max_zeta', 'mean_zeta', 'max_violation', 'cost',
                   'solver_iters', 'wall_time']


@dataclass
class ErrorReport:
    """Per-interval error measures of one phase.

    Attributes:
        zeta: (1/h_i) * integral of ||f||_p over interval i.
        componentwise: (N, n_f) integrals of |f_j| divided by h_i.
        zeta_max: Largest ||f||_inf over a dense sample of each interval.
        relative: zeta_i / (1 + max sampled ||xdot||_inf).
        violations: Largest positive part of the path inequalities per interval.
        continuity_defect: Largest state jump at interior mesh nodes.
    """
    zeta: np.ndarray
    componentwise: np.ndarray
    zeta_max: np.ndarray
    relative: np.ndarray
    violations: np.ndarray
    continuity_defect: float = 0.0
    norm: Union[int, float] = 2

    @property
    def max(self) -> float:
        return float(np.max(self.zeta, initial=0.0))

    @property
    def mean(self) -> float:
        return float(np.mean(self.zeta)) if self.zeta.size else 0.0

    @property
    def max_violation(self) -> float:
        return float(np.max(self.violations, initial=0.0))

    def measure(self, norm: str = '2') -> np.ndarray:
        return self.zeta_max if norm == 'inf' else self.zeta

    def failing(self, eta_tol: float, eta_g: float, norm: str = '2') -> np.ndarray:
        return (self.measure(norm) > eta_tol) | (self.violations > eta_g)

    def passes(self, eta_tol: float, eta_g: float, norm: str = '2') -> bool:
        return not bool(np.any(self.failing(eta_tol, eta_g, norm)))


def _interval_arguments(solution: Solution, i: int, times: np.ndarray, n_theta: int):
    x = solution.state.evaluate_interval(i, times)
    xdot = solution.state.derivative_interval(i, times)
    if solution.inputs.dimension:
        u = solution.inputs.evaluate_interval(i, times)
        udot = solution.inputs.derivative_interval(i, times)
    else:
        u = udot = np.zeros((0, times.size))
    theta = np.tile(np.asarray(solution.theta, dtype=float).reshape(-1, 1)[:n_theta], (1, times.size))
    return xdot, x, udot, u, theta


def local_errors(solution: Solution, problem: DopProblem, quadrature_order: Optional[int] = None,
                 norm: Union[int, float] = 2, density: int = VIOLATION_DENSITY) -> ErrorReport:
    """
    Integrated-residual error measures of a solution.

    Args:
        solution: Phase solution in original time.
        problem: The problem as posed (variable horizons included).
        quadrature_order: Gauss points per interval; defaults to twice the
            state polynomial's node count, at least 10.
        norm: 2 or np.inf for the pointwise residual norm inside zeta.
        density: Uniform samples per interval for the sup-norm measures.
    """
    state = solution.state
    n = state.n_intervals
    zeta = np.zeros(n)
    componentwise = np.zeros((n, problem.n_f))
    zeta_max = np.zeros(n)
    relative = np.zeros(n)
    for i in range(n):
        a, b = state.nodes[i], state.nodes[i + 1]
        h = b - a
        order = quadrature_order or max(2 * state.bases[i].count, 10)
        points, weights = gauss_quadrature(order).mapped(a, b)
        xdot, x, _, u, theta = _interval_arguments(solution, i, points, problem.n_theta)
        f = np.asarray(problem.dynamics(xdot, x, u, theta, points), dtype=float).reshape(problem.n_f, -1)
        pointwise = np.linalg.norm(f, ord=norm, axis=0) if problem.n_f else np.zeros(points.size)
        zeta[i] = float(weights @ pointwise) / h
        componentwise[i] = (np.abs(f) @ weights) / h
        samples = np.linspace(a, b, density)
        xdot_s, x_s, _, u_s, theta_s = _interval_arguments(solution, i, samples, problem.n_theta)
        f_s = np.asarray(problem.dynamics(xdot_s, x_s, u_s, theta_s, samples), dtype=float)
        zeta_max[i] = float(np.max(np.abs(f_s), initial=0.0))
        relative[i] = zeta[i] / (1.0 + float(np.max(np.abs(xdot_s), initial=0.0)))
    violations = violation_errors(solution, problem, density)
    logger.debug("Local errors of '%s': max zeta %.3e, max violation %.3e", problem.name,
                 float(np.max(zeta, initial=0.0)), float(np.max(violations, initial=0.0)))
    return ErrorReport(zeta=zeta, componentwise=componentwise, zeta_max=zeta_max, relative=relative,
                       violations=violations, continuity_defect=solution.continuity, norm=norm)


def violation_errors(solution: Solution, problem: DopProblem, density: int = VIOLATION_DENSITY) -> np.ndarray:
    """Largest positive part of g on a dense uniform sample of every interval."""
    n = solution.state.n_intervals
    out = np.zeros(n)
    if problem.path_inequality is None:
        return out
    for i in range(n):
        times = np.linspace(solution.state.nodes[i], solution.state.nodes[i + 1], density)
        xdot, x, udot, u, theta = _interval_arguments(solution, i, times, problem.n_theta)
        g = np.asarray(problem.path_inequality(xdot, x, udot, u, theta, times), dtype=float)
        out[i] = float(np.max(np.maximum(g, 0.0), initial=0.0))
    return out


@dataclass(frozen=True)
class RefineConfig:
    """Settings of the adaptive loop.

    Args:
        eta_tol: Tolerance on the per-interval zeta.
        eta_g: Tolerance on the inequality violation measure.
        cost_tol: Relative cost change allowed between the last two rounds;
            None disables the check.
        max_rounds: Cap on solve-refine rounds.
        strategy: 'Bisect', 'DegreeIncrease' or 'Hybrid'.
        norm: '2' or 'inf'; which zeta drives the decisions.
        max_degree: Degree cap of DegreeIncrease and Hybrid.
        warm_start: Reuse the previous round's trajectories and multipliers.
    """
    eta_tol: float = 1e-6
    eta_g: float = 1e-6
    cost_tol: Optional[float] = None
    max_rounds: int = 10
    strategy: str = 'Bisect'
    norm: str = '2'
    max_degree: int = MAX_DEGREE
    warm_start: bool = True

    def __post_init__(self):
        if self.eta_tol <= 0 or self.eta_g <= 0:
            raise ConfigurationError("Refinement tolerances must be positive")
        if self.cost_tol is not None and self.cost_tol <= 0:
            raise ConfigurationError("Cost tolerance must be positive")
        if self.max_rounds < 1:
            raise ConfigurationError("At least one refinement round is required")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"Unknown refinement strategy '{self.strategy}'")
        if self.norm not in ('2', 'inf'):
            raise ConfigurationError(f"Unknown error norm '{self.norm}'")


def _raise_degree(mesh: Mesh, i: int, cap: int) -> Optional[Tuple[int, int, object]]:
    """New (state degree, input degree, collocation) of interval i, or None at the cap."""
    if int(mesh.state_degree[i]) >= cap:
        return None
    if mesh.collocation is None:
        return int(mesh.state_degree[i]) + 1, int(mesh.input_degree[i]) + 1, None
    colloc = increase_degree(mesh.collocation[i])
    return default_degree(colloc), colloc.count - 1, colloc


def refine_mesh(mesh: Mesh, report: ErrorReport, config: RefineConfig) -> Mesh:
    """Refine every interval whose errors exceed the tolerances.

    Bisect splits at the midpoint, DegreeIncrease raises the polynomial
    degree until the cap, Hybrid raises the degree and bisects once capped.
    Passing intervals are copied unchanged.
    """
    failing = report.failing(config.eta_tol, config.eta_g, config.norm)
    if failing.size != mesh.n_intervals:
        raise ConfigurationError("Error report does not match the mesh")
    nodes = [mesh.nodes[0]]
    state_degree, input_degree, colloc, ineq, quad = [], [], [], [], []

    def keep(i, s=None, q=None, c=None):
        state_degree.append(int(mesh.state_degree[i]) if s is None else s)
        input_degree.append(int(mesh.input_degree[i]) if q is None else q)
        colloc.append(None if mesh.collocation is None else (mesh.collocation[i] if c is None else c))
        ineq.append(None if mesh.inequality_points is None else mesh.inequality_points[i])
        quad.append(int(mesh.quadrature_order[i]))

    for i in range(mesh.n_intervals):
        raised = None
        if failing[i] and config.strategy in ('DegreeIncrease', 'Hybrid'):
            raised = _raise_degree(mesh, i, config.max_degree)
        split = failing[i] and (config.strategy == 'Bisect' or (config.strategy == 'Hybrid' and raised is None))
        if split:
            nodes.append(0.5 * (mesh.nodes[i] + mesh.nodes[i + 1]))
            keep(i)
        if raised is not None:
            keep(i, *raised)
        else:
            keep(i)
        nodes.append(mesh.nodes[i + 1])
    refined = Mesh(nodes=np.array(nodes), state_degree=np.array(state_degree), input_degree=np.array(input_degree),
                   collocation=None if mesh.collocation is None else tuple(colloc),
                   inequality_points=None if mesh.inequality_points is None else tuple(ineq),
                   quadrature_order=np.array(quad))
    logger.info("Refined %d of %d intervals (%s): %d intervals now", int(failing.sum()), mesh.n_intervals,
                config.strategy, refined.n_intervals)
    return refined


@dataclass
class RoundRecord:
    round: int
    intervals: int
    decisions: int
    max_zeta: float
    mean_zeta: float
    max_violation: float
    cost: float
    solver_iters: int
    wall_time: float


def history_frame(history: Sequence[RoundRecord]) -> pd.DataFrame:
    """DataFrame behind history.csv, one row per round."""
    return pd.DataFrame([vars(record) for record in history], columns=HISTORY_COLUMNS)


def _phases(solution) -> List[Solution]:
    return solution.phases if isinstance(solution, StackSolution) else [solution]


def _same_mesh(a: Mesh, b: Mesh) -> bool:
    return (a.n_intervals == b.n_intervals and np.array_equal(a.nodes, b.nodes)
            and np.array_equal(a.state_degree, b.state_degree))


def solve_adaptive(problem: Union[DopProblem, PhaseStack], mesh: Union[Mesh, Sequence[Mesh]],
                   method: str = 'collocation', options=None, config: Optional[RefineConfig] = None,
                   solver_options=None, guess=None, tableau='rk4'):
    """
    Solve, measure and refine until the tolerances hold.

    Returns:
        (solution, history) with one RoundRecord per round.

    Raises:
        SolverFailure: when a round does not end Optimal.
    """
    from .transcribe import solve

    config = config or RefineConfig()
    n_phases = len(as_stack(problem).phases)
    meshes = [mesh] * n_phases if isinstance(mesh, Mesh) else list(mesh)
    if method == 'collocation' and isinstance(options, CollocationOptions) and options.scheme is not None:
        meshes = [options.scheme.apply(m) for m in meshes]
        options = replace(options, scheme=None)
    history: List[RoundRecord] = []
    previous = None
    solution = None
    for round_index in range(1, config.max_rounds + 1):
        started = time.perf_counter()
        warm = previous if config.warm_start else None
        solution = solve(problem, meshes if n_phases > 1 else meshes[0], method, options, solver_options,
                         guess=guess if warm is None else None, warm=warm, tableau=tableau)
        if not solution.succeeded:
            raise SolverFailure(f"Round {round_index} ended with status {solution.status}",
                                report=solution.report, round_index=round_index)
        reports = [phase.errors for phase in _phases(solution)]
        zetas = np.concatenate([r.measure(config.norm) for r in reports])
        record = RoundRecord(round=round_index, intervals=sum(m.n_intervals for m in meshes),
                             decisions=int(_phases(solution)[0].extras.get('decisions', 0)),
                             max_zeta=float(np.max(zetas, initial=0.0)), mean_zeta=float(np.mean(zetas)),
                             max_violation=max(r.max_violation for r in reports), cost=float(solution.cost),
                             solver_iters=int(solution.iterations), wall_time=time.perf_counter() - started)
        history.append(record)
        logger.info("Round %d: %d intervals, max zeta %.3e, cost %.8g, %d iterations", round_index,
                    record.intervals, record.max_zeta, record.cost, record.solver_iters)
        cost_ok = config.cost_tol is None or (
            len(history) > 1 and abs(history[-1].cost - history[-2].cost)
            <= config.cost_tol * (1.0 + abs(history[-2].cost)))
        if all(r.passes(config.eta_tol, config.eta_g, config.norm) for r in reports) and cost_ok:
            break
        refined = [refine_mesh(m, r, config) for m, r in zip(meshes, reports)]
        if all(_same_mesh(a, b) for a, b in zip(meshes, refined)):
            logger.warning("Refinement stalled after round %d: mesh unchanged", round_index)
            break
        meshes = refined
        previous = solution
    return solution, history
