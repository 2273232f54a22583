"""
dynopt: direct transcription of dynamic optimization problems.

Collocation, integrated-residual and Runge-Kutta transcriptions of
multi-phase problems with implicit (DAE) dynamics, a sparse interior-point
NLP solver, residual-based error estimation with adaptive mesh refinement,
and a multi-patient ventilator model for estimation and control studies.
"""
from .builtin_problems import BUILTIN_PROBLEMS, builtin
from .cli import main
from .errors import (ConfigurationError, DegeneracyError, DivergenceError, DynoptError, FormError, ScenarioError,
                     SimulationError, SingularityError, SizeError, SolverFailure)
from .mesh import Mesh
from .problem import (DopProblem, FixedHorizon, InteriorPoint, PhaseEnds, PhaseStack, SemiExplicitForm, StateLink,
                      VariableHorizon)
from .refine import ErrorReport, RefineConfig, history_frame, local_errors, solve_adaptive
from .schemes import CollocationOptions, ResidualOptions, Scheme, tableau
from .solver_interface import SolverOptions
from .trajectory import PiecewiseTrajectory, Solution, StackSolution
from .transcribe import minimize_residual, solve, transcribe

if __name__ == "__main__":
    main()

__all__ = [
    'main',
    'DopProblem',
    'PhaseStack',
    'FixedHorizon',
    'VariableHorizon',
    'InteriorPoint',
    'SemiExplicitForm',
    'StateLink',
    'PhaseEnds',
    'Mesh',
    'Scheme',
    'CollocationOptions',
    'ResidualOptions',
    'tableau',
    'SolverOptions',
    'RefineConfig',
    'ErrorReport',
    'local_errors',
    'solve_adaptive',
    'history_frame',
    'solve',
    'transcribe',
    'minimize_residual',
    'PiecewiseTrajectory',
    'Solution',
    'StackSolution',
    'BUILTIN_PROBLEMS',
    'builtin',
    'DynoptError',
    'ConfigurationError',
    'SizeError',
    'DegeneracyError',
    'FormError',
    'DivergenceError',
    'SingularityError',
    'SimulationError',
    'ScenarioError',
    'SolverFailure',
]
