"""
Command-line entry point.

Each command loads a scenario file, runs its pipeline and writes the
artifacts through a staged ResultsHandler, so a failed run leaves nothing
behind. Exit codes: 0 success, 2 input error, 3 solver failure.
"""
import argparse
import sys
import time
import traceback
from dataclasses import astuple
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .builtin_problems import builtin
from .errors import (ConfigurationError, DivergenceError, ScenarioError, SimulationError, SingularityError,
                     SolverFailure)
from .logger import logger, set_console_level
from .mesh import Mesh
from .problem import DopProblem
from .refine import RoundRecord, history_frame, local_errors, solve_adaptive
from .results_handler import (ResultsHandler, breath_frame, error_frame, load_solution, read_scenario_document,
                              read_summary, trajectory_frame)
from .scenario import ControlSpec, EstimationSpec, Scenario, load_scenario, parse_document
from .schemes import CollocationOptions, ResidualOptions, Scheme
from .trajectory import Solution, StackSolution
from .transcribe import minimize_residual, solve
from .ventilator import (PARAM_NAMES, PHASES, PRESSURE_MODES, VentilatorSettings, build_control_dop,
                         build_estimation_dop, estimate_parameters, simulate_breath, solve_control,
                         synthesize_measurements, tidal_volume_bounds)
from .ventilator_studies import convergence_order, convergence_table

VERSION = 'dynopt 1.0'
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
COMMANDS = ('solve', 'estimate', 'control', 'compare', 'errors')
NOISE_FLOOR = 1e-9

SOLVER_ERRORS = (SolverFailure, SimulationError, SingularityError, DivergenceError)
INPUT_ERRORS = (ScenarioError, ConfigurationError, ValueError, KeyError, OSError)


def _phases(solution) -> List[Solution]:
    return solution.phases if isinstance(solution, StackSolution) else [solution]


def solution_summary(solution) -> Dict[str, Any]:
    """Solver statistics and error measures shared by every summary."""
    parts = _phases(solution)
    reports = [part.errors for part in parts if part.errors is not None]
    return {
        'status': solution.status,
        'cost': float(solution.cost),
        'iterations': int(solution.iterations),
        'intervals': sum(part.state.n_intervals for part in parts),
        'decisions': int(parts[0].extras.get('decisions', 0)),
        'max_zeta': max((r.max for r in reports), default=None),
        'max_violation': max((r.max_violation for r in reports), default=None),
    }


def single_round(solution, elapsed: float) -> RoundRecord:
    """History row of a run without refinement."""
    parts = _phases(solution)
    zetas = np.concatenate([p.errors.zeta for p in parts if p.errors is not None] or [np.zeros(0)])
    return RoundRecord(round=1, intervals=sum(p.state.n_intervals for p in parts),
                       decisions=int(parts[0].extras.get('decisions', 0)),
                       max_zeta=float(np.max(zetas, initial=0.0)),
                       mean_zeta=float(np.mean(zetas)) if zetas.size else 0.0,
                       max_violation=max((p.errors.max_violation for p in parts if p.errors is not None),
                                         default=0.0),
                       cost=float(solution.cost), solver_iters=int(solution.iterations), wall_time=elapsed)


def _patient_dict(patient, model: str) -> Dict[str, float]:
    names = ('compliance', 'r_inhale', 'r_exhale', 'rq_inhale', 'rq_exhale')
    return dict(zip(names[:len(PARAM_NAMES[model])], astuple(patient)))


def _pressure_summary(settings: VentilatorSettings, phase: str) -> Any:
    value = settings.pip if phase == PHASES[0] else settings.peep
    if not callable(value):
        return float(value)
    start, end = settings.horizon(phase)
    samples = settings.pressure(phase, np.linspace(start, end, 101))
    return {'min': float(samples.min()), 'max': float(samples.max())}


def _settings_summary(settings: VentilatorSettings) -> Dict[str, Any]:
    return {
        'pip': _pressure_summary(settings, PHASES[0]),
        'peep': _pressure_summary(settings, PHASES[1]),
        'valve_inhale': list(settings.valve_inhale),
        'valve_exhale': list(settings.valve_exhale),
        't_inhale': settings.t_inhale,
        't_exhale': settings.t_exhale,
        'rate': settings.rate,
        'ratio': settings.ratio,
    }


class ScenarioRunner:
    """Runs the pipelines of one validated scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.scheme = Scheme.parse(scenario.scheme)

    def mesh(self) -> Mesh:
        degree = self.scenario.mesh.state_degree or self.scheme.state_degree
        return Mesh.uniform(0.0, 1.0, self.scenario.mesh.intervals, state_degree=degree)

    def options(self):
        method = self.scenario.method
        if method == 'collocation':
            return CollocationOptions(scheme=self.scheme)
        if method in ('integrated-residual', 'residual-minimize'):
            return ResidualOptions()
        return None

    def summary(self, command: str) -> Dict[str, Any]:
        sc = self.scenario
        return {'name': sc.name, 'kind': sc.kind, 'command': command, 'scheme': self.scheme.label,
                'method': sc.method, 'seed': sc.seed, 'mesh_intervals': sc.mesh.intervals}

    def _require(self, kind: str, command: str) -> None:
        if self.scenario.kind != kind:
            raise ScenarioError(f"'{command}' needs a '{kind}' problem, got '{self.scenario.kind}'",
                                field='problem.kind')

    def _warn_refine(self) -> None:
        if self.scenario.refine is not None:
            logger.warning("Ventilator runs use a fixed mesh; the 'refine' section is ignored")

    def solve_builtin(self, handler: ResultsHandler) -> str:
        sc = self.scenario
        entry = builtin(sc.problem.name)
        problem = entry.build()
        started = time.perf_counter()
        if sc.refine is not None:
            solution, history = solve_adaptive(problem, self.mesh(), sc.method, self.options(), sc.refine,
                                               sc.solver, tableau=sc.tableau)
        else:
            if sc.method == 'residual-minimize':
                solution = minimize_residual(problem, self.mesh(), self.options(), sc.solver)
            else:
                solution = solve(problem, self.mesh(), sc.method, self.options(), sc.solver, tableau=sc.tableau)
            if not solution.succeeded:
                raise SolverFailure(f"'{problem.name}' ended with status {solution.status}",
                                    report=solution.report)
            history = [single_round(solution, time.perf_counter() - started)]

        summary = self.summary('solve')
        summary.update(solution_summary(solution))
        summary['rounds'] = len(history)
        summary['exact_cost'] = entry.exact_cost
        if entry.exact is not None:
            exact = entry.exact(np.array([solution.tf]))[:, 0]
            summary['endpoint_error'] = float(np.max(np.abs(solution.state.final_value() - exact)))
        handler.write_solution(trajectory_frame(solution, problem.state_names, problem.input_names))
        handler.write_history(history_frame(history))
        handler.write_summary(summary)
        handler.save_solution(solution)
        return f"cost {solution.cost:.8g}, max zeta {summary['max_zeta']:.3e} after {len(history)} round(s)"

    def measurements(self):
        """Seeded synthetic readings of the scenario's true patients."""
        spec: EstimationSpec = self.scenario.problem
        simulation = simulate_breath(spec.patients, spec.settings)
        measurements = synthesize_measurements(
            spec.patients, spec.settings, seed=self.scenario.seed, noise=spec.noise, per_phase=spec.per_phase,
            volume=spec.volume, patient_flows=spec.patient_flows, patient_volumes=spec.patient_volumes,
            noise_bound=max(spec.noise_bound, NOISE_FLOOR), simulation=simulation)
        return simulation, measurements

    def estimate(self, handler: ResultsHandler) -> str:
        self._require('ventilator-estimation', 'estimate')
        self._warn_refine()
        sc = self.scenario
        spec: EstimationSpec = sc.problem
        simulation, measurements = self.measurements()
        logger.info("Synthesized %d readings (seed %d, noise %.3g)", measurements.count, sc.seed, spec.noise)
        started = time.perf_counter()
        estimate = estimate_parameters(spec.settings, measurements, spec.config, spec.model, spec.form,
                                       self.mesh(), self.scheme, sc.solver)
        elapsed = time.perf_counter() - started
        bounds = []
        if spec.bounds:
            bounds = tidal_volume_bounds(spec.settings, measurements, spec.config, spec.model, self.mesh(),
                                         self.scheme, sc.solver, estimate=estimate)

        k = len(PARAM_NAMES[spec.model])
        truth = np.array([p.as_array()[:k] for p in spec.patients])
        found = np.array([p.as_array()[:k] for p in estimate.params])
        summary = self.summary('estimate')
        summary.update(solution_summary(estimate.solution))
        summary.update({
            'model': spec.model,
            'form': spec.form,
            'readings': measurements.count,
            'noise': spec.noise,
            'patients': [_patient_dict(p, spec.model) for p in estimate.params],
            'true_patients': [_patient_dict(p, spec.model) for p in spec.patients],
            'relative_errors': (np.abs(found - truth) / np.maximum(np.abs(truth), 1e-12)).tolist(),
            'max_noise_estimate': float(np.max(np.abs(estimate.noise), initial=0.0)),
            'tidal_volumes': [{'integral': t.integral, 'compliance_form': t.compliance_form}
                              for t in estimate.tidal_volumes],
            'true_tidal_volumes': simulation.tidal_volume().tolist(),
            'tidal_bounds': [{'lower': b.lower, 'upper': b.upper} for b in bounds],
        })
        breath = estimate.solution.extras['breath']
        handler.write_solution(breath_frame(estimate.solution, breath))
        handler.write_history(history_frame([single_round(estimate.solution, elapsed)]))
        handler.write_summary(summary)
        handler.save_solution(estimate.solution)
        compliances = ', '.join(f"C{p + 1}={c:.4g}" for p, c in enumerate(found[:, 0]))
        return f"estimated {compliances}"

    def control(self, handler: ResultsHandler) -> str:
        self._require('ventilator-control', 'control')
        self._warn_refine()
        sc = self.scenario
        spec: ControlSpec = sc.problem
        modes = PRESSURE_MODES if spec.mode == 'both' else (spec.mode,)
        results = {}
        previous = None
        started = time.perf_counter()
        for mode in modes:
            previous = solve_control(spec.patients, spec.targets, spec.tolerances, spec.limits, mode,
                                     spec.settings if previous is None else None, self.mesh(), self.scheme,
                                     sc.solver, previous=previous)
            results[mode] = previous
        elapsed = time.perf_counter() - started

        last_mode = modes[-1]
        last = results[last_mode]
        summary = self.summary('control')
        summary.update(solution_summary(last.solution))
        summary['saved_mode'] = last_mode
        summary['targets'] = list(spec.targets)
        summary['tolerances'] = list(spec.tolerances)
        for mode, result in results.items():
            summary[mode] = {
                'energy': result.energy,
                'settings': _settings_summary(result.settings),
                'tidal_volumes': [t.value for t in result.tidal_volumes],
                'status': result.solution.status,
                'iterations': int(result.solution.iterations),
            }
        summary['energy'] = last.energy
        if len(results) == 2:
            summary['energy_ratio'] = results[PRESSURE_MODES[1]].energy / results[PRESSURE_MODES[0]].energy
        handler.write_solution(breath_frame(last.solution, last.solution.extras['breath']))
        handler.write_history(history_frame([single_round(last.solution, elapsed)]))
        handler.write_summary(summary)
        handler.save_solution(last.solution)
        return ', '.join(f"{mode} energy {result.energy:.6g}" for mode, result in results.items())

    def solve(self, handler: ResultsHandler) -> str:
        if self.scenario.kind == 'ventilator-estimation':
            return self.estimate(handler)
        if self.scenario.kind == 'ventilator-control':
            return self.control(handler)
        return self.solve_builtin(handler)

    def compare(self, handler: ResultsHandler) -> str:
        self._require('builtin', 'compare')
        sc = self.scenario
        entry = builtin(sc.problem.name)
        table = convergence_table(entry, sc.compare.schemes, sc.compare.intervals, sc.solver)
        summary = self.summary('compare')
        summary['rows'] = len(table)
        orders = {}
        if entry.exact is not None and len(sc.compare.intervals) > 1:
            for text in sc.compare.schemes:
                orders[Scheme.parse(text).label] = convergence_order(table, text)
        summary['orders'] = orders
        summary['max_abs_local_error'] = {str(k): float(v) for k, v in
                                          table.groupby('scheme')['max_abs_local_error'].max().items()}
        handler.write_table(table)
        handler.write_summary(summary)
        return f"{len(table)} rows for {', '.join(sc.compare.schemes)}"


def build_problems(scenario: Scenario, mode: Optional[str] = None) -> Sequence[DopProblem]:
    """Phase problems of a scenario, as its solve posed them."""
    if scenario.kind == 'builtin':
        return [builtin(scenario.problem.name).build()]
    if scenario.kind == 'ventilator-estimation':
        spec: EstimationSpec = scenario.problem
        _, measurements = ScenarioRunner(scenario).measurements()
        return build_estimation_dop(spec.settings, measurements, spec.config, spec.model, spec.form).phases
    spec_c: ControlSpec = scenario.problem
    mode = mode or (PRESSURE_MODES[1] if spec_c.mode == 'both' else spec_c.mode)
    return build_control_dop(spec_c.patients, spec_c.targets, spec_c.tolerances, spec_c.limits, mode,
                             spec_c.settings).phases


def recompute_errors(directory: str) -> str:
    """Rebuild the problem of a saved run, recompute its local errors and write errors.csv."""
    scenario = parse_document(read_scenario_document(directory), source=directory)
    mode = read_summary(directory).get('saved_mode') if scenario.kind == 'ventilator-control' else None
    solution = load_solution(directory)
    problems = build_problems(scenario, mode)
    for part, problem in zip(_phases(solution), problems):
        part.errors = local_errors(part, problem)
    handler = ResultsHandler(directory)
    handler.write_errors(error_frame(solution))
    worst = max(part.errors.max for part in _phases(solution))
    return f"max zeta {worst:.3e} over {sum(p.state.n_intervals for p in _phases(solution))} intervals"


class CommandRunner:
    """One CLI command: returns (success, message) and keeps the exit code."""

    def __init__(self, command: str, target: str, overrides: Optional[Dict[str, Any]] = None):
        if command not in COMMANDS:
            raise ConfigurationError(f"Unknown command '{command}'")
        self.command = command
        self.target = target
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.exit_code = EXIT_OK

    def _execute(self) -> str:
        if self.command == 'errors':
            return recompute_errors(self.target)
        scenario = load_scenario(self.target, **self.overrides)
        runner = ScenarioRunner(scenario)
        with ResultsHandler.staged(scenario.output) as handler:
            message = getattr(runner, self.command)(handler)
            handler.write_scenario(scenario.document)
        return message

    def run(self) -> Tuple[bool, str]:
        try:
            message = self._execute()
        except SOLVER_ERRORS as e:
            self.exit_code = EXIT_SOLVER
            logger.error("Solver failure: %s", e)
            logger.debug(traceback.format_exc())
            return False, str(e)
        except INPUT_ERRORS as e:
            self.exit_code = EXIT_INPUT
            logger.error("Input error: %s", e)
            logger.debug(traceback.format_exc())
            return False, str(e)
        self.exit_code = EXIT_OK
        return True, message


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Direct transcription of dynamic optimization problems.',
        epilog='''
Examples:
  python run.py solve scenarios/convergence.json --tol 1e-7
  python run.py estimate scenarios/ventilator_estimation.json --seed 3 --out results/estimation
  python run.py control scenarios/ventilator_control_constant.json
  python run.py compare scenarios/convergence.json
  python run.py errors results/estimation
        ''',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('--version', action='version', version=VERSION)
    parser.add_argument('--log-level', default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Console log level.')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # --- Scenario commands ---
    helps = {
        'solve': 'Solve the scenario problem, refining the mesh if configured.',
        'estimate': 'Estimate ventilator patient parameters from synthetic readings.',
        'control': 'Find minimum-energy ventilator settings.',
        'compare': 'Tabulate accuracy and size of several schemes.',
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument('scenario', help='Path to the scenario JSON file.')
        sub.add_argument('--tol', type=float, help='Solver tolerance (and refinement tolerance).')
        sub.add_argument('--max-rounds', type=int, help='Cap on refinement rounds.')
        sub.add_argument('--seed', type=int, help='Seed of the measurement noise.')
        sub.add_argument('--out', help='Output directory.')
        sub.add_argument('--scheme', help="Transcription scheme, e.g. 'HermiteSimpson' or 'LGR(5)'.")

    # --- Errors Command ---
    errors_parser = subparsers.add_parser('errors', help='Recompute local errors of a saved solution.')
    errors_parser.add_argument('directory', help='Output directory of an earlier run.')
    return parser


def main(argv: Optional[Sequence[str]] = None):
    """Main entry point: parse arguments, run one command and exit with its code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        set_console_level(args.log_level)
    if not args.command:
        parser.print_help()
        sys.exit(EXIT_INPUT)

    if args.command == 'errors':
        runner = CommandRunner('errors', args.directory)
    else:
        runner = CommandRunner(args.command, args.scenario, {
            'tol': args.tol, 'max_rounds': args.max_rounds, 'seed': args.seed, 'scheme': args.scheme,
            'output': args.out})

    logger.info("Running %s...", args.command)
    logger.info("=" * 40)
    success, message = runner.run()
    logger.info("=" * 40)
    if success:
        logger.info("%s completed: %s", args.command.capitalize(), message)
    else:
        logger.error("%s failed: %s", args.command.capitalize(), message)
        sys.exit(runner.exit_code)


__all__ = ['main', 'build_parser', 'CommandRunner', 'ScenarioRunner', 'build_problems', 'recompute_errors',
           'solution_summary', 'single_round', 'EXIT_OK', 'EXIT_INPUT', 'EXIT_SOLVER']
