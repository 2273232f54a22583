"""
Public transcription entry points.

Builds the NLP for a chosen method, solves it and maps the result back to a
Solution. Re-solves on a changed mesh can reuse the multipliers of a previous
solve: rows and variables are matched by keys that stay stable for intervals
the refinement did not touch.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .base_transcriber import BaseTranscriber
from .collocation import CollocationTranscriber
from .errors import ConfigurationError
from .interior_point import InteriorPointSolver
from .logger import logger
from .mesh import Mesh
from .nlp import StructuredNlp
from .problem import DopProblem, Guess, PhaseStack
from .residual import ResidualTranscriber
from .runge_kutta import RungeKuttaTranscriber
from .schemes import ButcherTableau, CollocationOptions, ResidualOptions
from .solver_interface import NlpSolver, ScipySolver, SolveReport, SolverOptions, WarmStart
from .trajectory import Solution, StackSolution

Problem = Union[DopProblem, PhaseStack]
Meshes = Union[Mesh, Sequence[Mesh]]
AnySolution = Union[Solution, StackSolution]

METHODS = ('collocation', 'integrated-residual', 'residual-minimize', 'runge-kutta')


@dataclass
class KeyedMultipliers:
    """Multipliers of a solve indexed by row and variable keys."""
    rows: Dict[tuple, float] = field(default_factory=dict)
    lower: Dict[tuple, float] = field(default_factory=dict)
    upper: Dict[tuple, float] = field(default_factory=dict)

    @classmethod
    def from_report(cls, report: SolveReport, nlp: StructuredNlp) -> 'KeyedMultipliers':
        var_keys = nlp.layout.var_keys
        return cls(rows=dict(zip(nlp.row_keys, np.asarray(report.multipliers, dtype=float))),
                   lower=dict(zip(var_keys, np.asarray(report.z_lower, dtype=float))),
                   upper=dict(zip(var_keys, np.asarray(report.z_upper, dtype=float))))


def transfer_multipliers(keyed: KeyedMultipliers, nlp: StructuredNlp) -> WarmStart:
    """WarmStart for nlp; rows and variables without a match start at zero."""
    y = np.array([keyed.rows.get(key, 0.0) for key in nlp.row_keys])
    zl = np.array([keyed.lower.get(key, 0.0) for key in nlp.layout.var_keys])
    zu = np.array([keyed.upper.get(key, 0.0) for key in nlp.layout.var_keys])
    matched = sum(key in keyed.rows for key in nlp.row_keys)
    logger.debug("Transferred %d of %d constraint multipliers", matched, nlp.m)
    return WarmStart(multipliers=y, z_lower=zl, z_upper=zu)


def guess_from_solution(solution: AnySolution) -> List[Guess]:
    """Per-phase Guess (original time) that interpolates a previous solution."""
    phases = solution.phases if isinstance(solution, StackSolution) else [solution]
    if isinstance(solution, StackSolution):
        theta = np.asarray(solution.theta, dtype=float)
    else:
        theta = np.asarray(solution.extras.get('theta_stack', solution.theta), dtype=float)
    guesses = []
    for phase in phases:
        inputs = phase.inputs.evaluate if phase.inputs.dimension else None
        guesses.append(Guess(state=phase.state.evaluate, inputs=inputs, theta=theta,
                             terminal=phase.state.final_value()))
    return guesses


def _solver(solver: Union[None, str, NlpSolver]) -> NlpSolver:
    if solver is None or solver == 'interior-point':
        return InteriorPointSolver()
    if solver == 'scipy':
        return ScipySolver()
    if isinstance(solver, NlpSolver):
        return solver
    raise ConfigurationError(f"Unknown solver '{solver}'")


def collocate(problem: Problem, mesh: Meshes, options: Optional[CollocationOptions] = None,
              guess=None) -> StructuredNlp:
    """Collocation NLP: residual zero at every collocation point."""
    return CollocationTranscriber(problem, mesh, options, guess).build()


def residual_phase1(problem: Problem, mesh: Meshes, options: Optional[ResidualOptions] = None,
                    guess=None) -> StructuredNlp:
    """Least-squares NLP minimizing the normalized integrated residual."""
    return ResidualTranscriber(problem, mesh, options, mode='minimize', guess=guess).build()


def residual_transcribe(problem: Problem, mesh: Meshes, options: Optional[ResidualOptions] = None,
                        bounds: Optional[Sequence[np.ndarray]] = None, guess=None,
                        solver_options: Optional[SolverOptions] = None, solver=None) -> StructuredNlp:
    """NLP with the original cost and bounded interval residual integrals.

    Without explicit bounds (here or in options) the phase-1 problem is
    solved first and eps_i = alpha * r_i / h_i is used; its solution becomes
    the initial guess.
    """
    options = options or ResidualOptions()
    phase1 = None
    if bounds is None and options.bounds is None:
        nlp1 = residual_phase1(problem, mesh, options, guess)
        report1 = _solver(solver).solve(nlp1, options=solver_options)
        transcriber1: ResidualTranscriber = nlp1.meta['transcriber']
        bounds = transcriber1.automatic_bounds(report1.x)
        phase1 = transcriber1.extract(report1, with_errors=False)
        logger.info("Residual phase 1 finished (%s), automatic bounds with slack %.3g",
                    report1.status.value, options.slack_factor)
        guess = phase1 if guess is None else guess
    elif bounds is not None and isinstance(problem, DopProblem) and np.ndim(bounds[0]) == 0:
        bounds = [np.asarray(bounds, dtype=float)]
    transcriber = ResidualTranscriber(problem, mesh, options, mode='constrain', bounds=bounds, guess=guess)
    nlp = transcriber.build()
    nlp.meta['residual_bounds'] = transcriber.bounds
    if phase1 is not None:
        nlp.meta['phase1'] = phase1
    return nlp


def rk_transcribe(problem: Problem, mesh: Meshes, tableau: Union[str, ButcherTableau] = 'rk4',
                  algebraic_points=None, guess=None) -> StructuredNlp:
    """Runge-Kutta NLP of a semi-explicit problem."""
    return RungeKuttaTranscriber(problem, mesh, tableau, algebraic_points, guess).build()


def transcribe(problem: Problem, mesh: Meshes, method: str = 'collocation', options=None, guess=None,
               tableau: Union[str, ButcherTableau] = 'rk4', solver_options: Optional[SolverOptions] = None,
               solver=None) -> StructuredNlp:
    """Dispatch on the method name."""
    if method == 'collocation':
        return collocate(problem, mesh, options, guess)
    if method == 'integrated-residual':
        return residual_transcribe(problem, mesh, options, guess=guess, solver_options=solver_options,
                                   solver=solver)
    if method == 'residual-minimize':
        return residual_phase1(problem, mesh, options, guess)
    if method == 'runge-kutta':
        return rk_transcribe(problem, mesh, tableau, guess=guess)
    raise ConfigurationError(f"Unknown transcription method '{method}', expected one of {METHODS}")


def extract(report: SolveReport, nlp: StructuredNlp, with_errors: bool = True) -> AnySolution:
    """Trajectories, errors and diagnostics of a solved NLP."""
    transcriber: BaseTranscriber = nlp.meta['transcriber']
    solution = transcriber.extract(report, with_errors=with_errors)
    keyed = KeyedMultipliers.from_report(report, nlp)
    solution.extras['warm'] = keyed
    if isinstance(solution, StackSolution):
        for phase in solution.phases:
            phase.extras['warm'] = keyed
    for key in ('phase1', 'residual_bounds'):
        if key in nlp.meta:
            solution.extras[key] = nlp.meta[key]
    return solution


def solve_nlp(nlp: StructuredNlp, init: Optional[np.ndarray] = None, options: Optional[SolverOptions] = None,
              warm: Optional[WarmStart] = None, solver=None) -> SolveReport:
    return _solver(solver).solve(nlp, init, options, warm)


def solve(problem: Problem, mesh: Meshes, method: str = 'collocation', options=None,
          solver_options: Optional[SolverOptions] = None, guess=None, warm: Optional[AnySolution] = None,
          tableau: Union[str, ButcherTableau] = 'rk4', solver=None, with_errors: bool = True) -> AnySolution:
    """
    Transcribe, solve and extract in one call.

    Args:
        warm: Previous solution; its trajectories seed the guess (unless one
            is given) and its multipliers are transferred by key.
    """
    if warm is not None and guess is None:
        guess = warm
    nlp = transcribe(problem, mesh, method, options, guess, tableau, solver_options, solver)
    warm_start = None
    if warm is not None and 'warm' in warm.extras:
        warm_start = transfer_multipliers(warm.extras['warm'], nlp)
    report = solve_nlp(nlp, options=solver_options, warm=warm_start, solver=solver)
    logger.info("Solved '%s' (%s): %s, cost %.6g, %d iterations", nlp.name, method, report.status.value,
                report.objective, report.iterations)
    return extract(report, nlp, with_errors)


def minimize_residual(problem: Problem, mesh: Meshes, options: Optional[ResidualOptions] = None,
                      solver_options: Optional[SolverOptions] = None, guess=None) -> AnySolution:
    """Solve the phase-1 problem; the solution of a problem without a cost."""
    return solve(problem, mesh, 'residual-minimize', options, solver_options, guess)
