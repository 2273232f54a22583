"""
End-to-end studies built on the ventilator model and the transcriptions.

Each study returns a small result object and logs its milestones; the CLI
and the slow tests drive them.
"""
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .builtin_problems import BuiltinProblem, builtin
from .errors import SolverFailure
from .logger import logger
from .mesh import Mesh
from .problem import DopProblem
from .schemes import CollocationOptions, ResidualOptions, Scheme
from .solver_interface import SolverOptions
from .trajectory import Solution
from .transcribe import minimize_residual, solve
from .ventilator import (DEFAULT_SCHEME, REFERENCE_PATIENTS, BreathSimulation, ControlBounds, ControlResult,
                         EstimationConfig, EstimationResult, MeasurementSet, PatientParams, TidalBounds,
                         VentilatorSettings, estimate_parameters, inhale_phase_problem, simulate_breath,
                         solve_control, synthesize_measurements, tidal_volume_bounds)

TABLE_COLUMNS = ['scheme', 'intervals', 'decisions', 'max_abs_local_error', 'endpoint_error', 'iterations',
                 'wall_time']
DENSE_SAMPLES = 401
ESTIMATION_SETTINGS = VentilatorSettings(pip=25.0, peep=5.0, valve_inhale=(0.0, 0.3), valve_exhale=(0.2, 0.0),
                                         t_inhale=1.5, t_exhale=2.5)


@dataclass
class EstimationStudy:
    truth: Tuple[PatientParams, ...]
    simulation: BreathSimulation
    measurements: MeasurementSet
    estimate: EstimationResult
    bounds: List[TidalBounds] = field(default_factory=list)

    def relative_errors(self) -> np.ndarray:
        """(n_p, k) relative parameter errors of the estimate."""
        k = self.estimate.solution.extras['breath'].per_patient
        truth = np.array([p.as_array()[:k] for p in self.truth])
        found = np.array([p.as_array()[:k] for p in self.estimate.params])
        return np.abs(found - truth) / np.maximum(np.abs(truth), 1e-12)

    def true_tidal_volumes(self) -> np.ndarray:
        return self.simulation.tidal_volume()


def estimation_study(truth: Sequence[PatientParams] = REFERENCE_PATIENTS,
                     settings: VentilatorSettings = ESTIMATION_SETTINGS, noise: float = 0.005, seed: int = 0,
                     per_phase: int = 3, volume: bool = True, patient_flows: Sequence[int] = (0,),
                     config: Optional[EstimationConfig] = None, model: str = 'quadratic', form: str = 'dae',
                     mesh: Optional[Mesh] = None, scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                     solver_options: Optional[SolverOptions] = None, with_bounds: bool = True) -> EstimationStudy:
    """Simulate the true patients, measure, estimate and bound the tidal volumes."""
    truth = tuple(truth)
    simulation = simulate_breath(truth, settings)
    measurements = synthesize_measurements(truth, settings, seed=seed, noise=noise, per_phase=per_phase,
                                           volume=volume, patient_flows=patient_flows,
                                           noise_bound=max(noise, 1e-9), simulation=simulation)
    logger.info("Synthesized %d readings (seed %d, noise %.3g)", measurements.count, seed, noise)
    estimate = estimate_parameters(settings, measurements, config, model, form, mesh, scheme, solver_options)
    bounds = []
    if with_bounds:
        bounds = tidal_volume_bounds(settings, measurements, config, model, mesh, scheme, solver_options,
                                     estimate=estimate)
    return EstimationStudy(truth=truth, simulation=simulation, measurements=measurements, estimate=estimate,
                           bounds=bounds)


@dataclass
class ControlStudy:
    constant: ControlResult
    time_varying: ControlResult

    @property
    def energy_ratio(self) -> float:
        return self.time_varying.energy / self.constant.energy


def control_study(params: Sequence[PatientParams] = REFERENCE_PATIENTS, targets=0.5, tolerances=0.005,
                  bounds: Optional[ControlBounds] = None, settings: Optional[VentilatorSettings] = None,
                  mesh: Optional[Mesh] = None, scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                  solver_options: Optional[SolverOptions] = None) -> ControlStudy:
    """Constant-pressure control, then the time-varying problem started from it."""
    constant = solve_control(params, targets, tolerances, bounds, 'constant', settings, mesh, scheme,
                             solver_options)
    varying = solve_control(params, targets, tolerances, bounds, 'time-varying', None, mesh, scheme,
                            solver_options, previous=constant)
    study = ControlStudy(constant=constant, time_varying=varying)
    logger.info("Energy: constant %.6g, time-varying %.6g (ratio %.3f)", constant.energy, varying.energy,
                study.energy_ratio)
    return study


def dense_residual(solution: Solution, problem: DopProblem, samples: int = DENSE_SAMPLES) -> float:
    """Largest |f| over equally spaced samples of the whole horizon."""
    times = np.linspace(solution.t0, solution.tf, samples)
    return _residual_at(solution, problem, times)


def _residual_at(solution: Solution, problem: DopProblem, times: np.ndarray) -> float:
    x = solution.state.evaluate(times)
    xdot = solution.state.derivative(times)
    u = solution.inputs.evaluate(times) if solution.inputs.dimension else np.zeros((0, times.size))
    theta = np.tile(np.asarray(solution.theta, dtype=float).reshape(-1, 1), (1, times.size))
    f = np.asarray(problem.dynamics(xdot, x, u, theta, times), dtype=float)
    return float(np.max(np.abs(f), initial=0.0))


def collocation_point_residual(solution: Solution, problem: DopProblem, scheme: Scheme) -> float:
    """Largest |f| at the collocation points of every interval."""
    mesh: Mesh = solution.extras['mesh'].rescaled(solution.t0, solution.tf)
    points = scheme.collocation().points
    worst = 0.0
    for i in range(mesh.n_intervals):
        # evaluate just inside the interval so the left-continuous pieces are used
        times = mesh.from_reference(i, np.clip(points, -1.0 + 1e-12, 1.0 - 1e-12))
        worst = max(worst, _residual_at(solution, problem, times))
    return worst


@dataclass
class ResidualComparison:
    collocation: Solution
    integrated_residual: Solution
    collocation_dense: float
    residual_dense: float
    collocation_at_points: float


def residual_comparison(params: Sequence[PatientParams] = REFERENCE_PATIENTS,
                        settings: VentilatorSettings = ESTIMATION_SETTINGS, intervals: int = 3,
                        samples: int = DENSE_SAMPLES,
                        solver_options: Optional[SolverOptions] = None) -> ResidualComparison:
    """
    Hermite-Simpson collocation against the minimized integrated residual on
    the inhale phase, both with piecewise cubic states on a coarse mesh. The
    residual solution also gets piecewise cubic flows, where collocation at
    three points per interval fixes them to quadratics.
    """
    problem = inhale_phase_problem(params, settings)
    scheme = Scheme.parse('HermiteSimpson')
    colloc = solve(problem, Mesh.uniform(0.0, 1.0, intervals), 'collocation', CollocationOptions(scheme=scheme),
                   solver_options)
    residual = minimize_residual(problem, Mesh.uniform(0.0, 1.0, intervals, state_degree=3, input_degree=3),
                                 ResidualOptions(), solver_options)
    for label, solution in (('collocation', colloc), ('integrated residual', residual)):
        if not solution.succeeded:
            raise SolverFailure(f"The {label} solve ended with status {solution.status}", report=solution.report)
    comparison = ResidualComparison(
        collocation=colloc, integrated_residual=residual,
        collocation_dense=dense_residual(colloc, problem, samples),
        residual_dense=dense_residual(residual, problem, samples),
        collocation_at_points=collocation_point_residual(colloc, problem, scheme),
    )
    logger.info("Dense residual: collocation %.3e, integrated residual %.3e", comparison.collocation_dense,
                comparison.residual_dense)
    return comparison


@dataclass
class FormComparison:
    dae: EstimationResult
    ode: EstimationResult
    dae_time: float
    ode_time: float

    def relative_difference(self) -> float:
        dae = np.concatenate([p.as_array() for p in self.dae.params])
        ode = np.concatenate([p.as_array() for p in self.ode.params])
        return float(np.max(np.abs(ode - dae) / np.maximum(np.abs(dae), 1e-12)))

    def time_per_iteration(self) -> Dict[str, float]:
        return {'dae': self.dae_time / max(self.dae.solution.iterations, 1),
                'ode': self.ode_time / max(self.ode.solution.iterations, 1)}


def form_comparison(truth: Sequence[PatientParams] = REFERENCE_PATIENTS[:1],
                    settings: Optional[VentilatorSettings] = None, measurements: Optional[MeasurementSet] = None,
                    config: Optional[EstimationConfig] = None, mesh: Optional[Mesh] = None,
                    scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                    solver_options: Optional[SolverOptions] = None) -> FormComparison:
    """Estimate the same readings with the DAE model and its reduced ODE."""
    truth = tuple(truth)
    settings = settings or VentilatorSettings(valve_inhale=(0.0,) * len(truth), valve_exhale=(0.0,) * len(truth))
    if measurements is None:
        measurements = synthesize_measurements(truth, settings, noise=0.0, noise_bound=1e-9)
    results, times = {}, {}
    for form in ('dae', 'ode'):
        started = time.perf_counter()
        results[form] = estimate_parameters(settings, measurements, config, 'quadratic', form, mesh, scheme,
                                            solver_options)
        times[form] = time.perf_counter() - started
    comparison = FormComparison(dae=results['dae'], ode=results['ode'], dae_time=times['dae'],
                                ode_time=times['ode'])
    logger.info("DAE and ODE estimates differ by %.3e relative", comparison.relative_difference())
    return comparison


def convergence_table(problem: Union[str, BuiltinProblem] = 'exponential-growth',
                      schemes: Sequence[str] = ('Trapezoidal', 'HermiteSimpson'),
                      intervals: Sequence[int] = (4, 8, 16, 32, 64),
                      solver_options: Optional[SolverOptions] = None) -> pd.DataFrame:
    """
    One collocation solve per scheme and interval count.

    ``endpoint_error`` compares the final state with the closed-form solution
    and is NaN for problems without one.
    """
    entry = builtin(problem) if isinstance(problem, str) else problem
    rows = []
    for text in schemes:
        scheme = Scheme.parse(text)
        for n in intervals:
            built = entry.build()
            started = time.perf_counter()
            solution = solve(built, Mesh.uniform(0.0, 1.0, n), 'collocation', CollocationOptions(scheme=scheme),
                             solver_options)
            elapsed = time.perf_counter() - started
            if not solution.succeeded:
                raise SolverFailure(f"{scheme.label} with {n} intervals ended with status {solution.status}",
                                    report=solution.report)
            endpoint = np.nan
            if entry.exact is not None:
                exact = entry.exact(np.array([solution.tf]))[:, 0]
                endpoint = float(np.max(np.abs(solution.state.final_value() - exact)))
            rows.append({'scheme': scheme.label, 'intervals': n, 'decisions': solution.extras['decisions'],
                         'max_abs_local_error': solution.errors.max if solution.errors is not None else np.nan,
                         'endpoint_error': endpoint, 'iterations': solution.iterations, 'wall_time': elapsed})
            logger.debug("%s, %d intervals: endpoint error %.3e", scheme.label, n, endpoint)
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def convergence_order(table: pd.DataFrame, scheme: str, column: str = 'endpoint_error') -> float:
    """Slope of log(error) against log(h) for one scheme of a convergence table."""
    rows = table[table['scheme'] == Scheme.parse(scheme).label]
    h = 1.0 / rows['intervals'].to_numpy(dtype=float)
    slope, _ = np.polyfit(np.log(h), np.log(rows[column].to_numpy(dtype=float)), 1)
    return float(slope)


__all__ = ['TABLE_COLUMNS', 'ESTIMATION_SETTINGS', 'EstimationStudy', 'estimation_study', 'ControlStudy',
           'control_study', 'dense_residual', 'collocation_point_residual', 'ResidualComparison',
           'residual_comparison', 'FormComparison', 'form_comparison', 'convergence_table', 'convergence_order']
