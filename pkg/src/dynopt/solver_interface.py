"""
Solver-facing interface: options, reports and the narrow evaluation surface
through which any NLP solver (built in or external) talks to a
StructuredNlp.
"""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, NonlinearConstraint, minimize

from .errors import ConfigurationError
from .logger import logger
from .nlp import StructuredNlp, jacobian_pattern


class SolveStatus(str, Enum):
    OPTIMAL = 'Optimal'
    INFEASIBLE = 'Infeasible'
    MAX_ITER = 'MaxIter'
    NUMERICAL_FAILURE = 'NumericalFailure'


@dataclass(frozen=True)
class SolverOptions:
    """Interior-point settings.

    Args:
        tol: Convergence tolerance on the scaled KKT error.
        max_iter: Iteration cap.
        mu_init: Initial barrier parameter (cold start).
        hessian: 'exact' (assembled pointwise second derivatives) or 'bfgs'.
        kkt: 'structured' (arrowhead sparse LU) or 'dense'.
        scaling: Gradient-based objective and row scaling.
        warm_mu: Initial barrier parameter when multipliers are supplied.
        bound_push: Relative push of the initial point into the bounds.
        warm_bound_push: Push used on warm starts.
        acceptable_tol: Looser KKT level accepted once it has held for
            acceptable_iter consecutive iterates; finite-difference
            derivatives put a floor under the attainable error.
        acceptable_iter: Consecutive acceptable iterates needed; 0 disables.
        callback: Called as callback(iteration, z) after every iterate.
    """
    tol: float = 1e-9
    max_iter: int = 3000
    mu_init: float = 0.1
    hessian: str = 'exact'
    kkt: str = 'structured'
    scaling: bool = True
    warm_mu: float = 1e-5
    bound_push: float = 1e-2
    warm_bound_push: float = 1e-6
    acceptable_tol: float = 1e-6
    acceptable_iter: int = 15
    callback: Optional[Callable[[int, np.ndarray], None]] = None

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("Solver tolerance must be positive and max_iter >= 1")
        if self.acceptable_tol <= 0 or self.acceptable_iter < 0:
            raise ConfigurationError("acceptable_tol must be positive and acceptable_iter >= 0")
        if self.hessian not in ('exact', 'bfgs'):
            raise ConfigurationError(f"Unknown Hessian mode '{self.hessian}'")
        if self.kkt not in ('structured', 'dense'):
            raise ConfigurationError(f"Unknown KKT solver '{self.kkt}'")


@dataclass
class WarmStart:
    """Initial multipliers: constraint rows and variable bounds."""
    multipliers: np.ndarray
    z_lower: Optional[np.ndarray] = None
    z_upper: Optional[np.ndarray] = None


@dataclass
class SolveReport:
    """Outcome of one NLP solve.

    Multipliers follow L = f + y^T c - z_l^T (z - lb) + z_u^T (z - ub).
    """
    status: SolveStatus
    x: np.ndarray
    multipliers: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    objective: float
    residuals: Dict[str, float]
    iterations: int
    wall_time: float
    log: List[str] = field(default_factory=list)
    constraint_violation: float = 0.0
    solver: str = 'interior-point'

    @property
    def succeeded(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def warm_start(self) -> WarmStart:
        return WarmStart(self.multipliers.copy(), self.z_lower.copy(), self.z_upper.copy())


class NlpEvaluator:
    """Narrow evaluation surface of a StructuredNlp.

    External solvers only see dense vectors, sparse Jacobian triplets and
    bounds; nothing about stages or terms.
    """

    def __init__(self, nlp: StructuredNlp):
        self.nlp = nlp

    @property
    def n(self) -> int:
        return self.nlp.n

    @property
    def m(self) -> int:
        return self.nlp.m

    def initial_point(self) -> np.ndarray:
        return np.array(self.nlp.z_guess, dtype=float)

    def variable_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.nlp.z_lower.copy(), self.nlp.z_upper.copy()

    def constraint_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.nlp.constraint_bounds()

    def cost(self, z: np.ndarray) -> float:
        return self.nlp.cost(z)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.nlp.gradient(z)

    def constraints(self, z: np.ndarray) -> np.ndarray:
        return self.nlp.constraint_values(z)

    def jacobian_triplets(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.nlp.jacobian(z).tocoo()
        return coo.row, coo.col, coo.data

    def jacobian_structure(self) -> Tuple[np.ndarray, np.ndarray]:
        coo = jacobian_pattern(self.nlp).tocoo()
        return coo.row, coo.col


class NlpSolver(ABC):
    """Anything that can solve a StructuredNlp into a SolveReport."""

    @abstractmethod
    def solve(self, nlp: StructuredNlp, init: Optional[np.ndarray] = None,
              options: Optional[SolverOptions] = None, warm: Optional[WarmStart] = None) -> SolveReport:
        raise NotImplementedError  # pragma: no cover


class ScipySolver(NlpSolver):
    """Adapter for scipy's trust-constr method behind the evaluator surface.

    Useful as an independent cross-check of the built-in solver on small
    problems; it ignores warm-start multipliers.
    """

    def solve(self, nlp, init=None, options=None, warm=None):
        options = options or SolverOptions()
        evaluator = NlpEvaluator(nlp)
        start = time.perf_counter()
        x0 = evaluator.initial_point() if init is None else np.asarray(init, dtype=float)
        lb, ub = evaluator.variable_bounds()
        x0 = np.clip(x0, lb, ub)
        n, m = evaluator.n, evaluator.m

        def jac(z):
            rows, cols, vals = evaluator.jacobian_triplets(z)
            return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))

        constraints = []
        if m:
            cl, cu = evaluator.constraint_bounds()
            constraints.append(NonlinearConstraint(evaluator.constraints, cl, cu, jac=jac))
        result = minimize(evaluator.cost, x0, jac=evaluator.gradient, method='trust-constr',
                          bounds=Bounds(lb, ub, keep_feasible=False), constraints=constraints,
                          options={'gtol': options.tol, 'xtol': options.tol * 1e-3,
                                   'barrier_tol': options.tol, 'maxiter': options.max_iter, 'verbose': 0})
        elapsed = time.perf_counter() - start
        violation = float(getattr(result, 'constr_violation', 0.0))
        status = _scipy_status(result.status, float(result.optimality), violation, options.tol)
        multipliers = np.asarray(result.v[0]) if m else np.zeros(0)
        logger.info("trust-constr finished: %s after %d iterations", status.value, result.nit)
        return SolveReport(status=status, x=np.asarray(result.x), multipliers=multipliers,
                           z_lower=np.zeros(n), z_upper=np.zeros(n), objective=float(result.fun),
                           residuals={'stationarity': float(result.optimality), 'feasibility': violation,
                                      'complementarity': 0.0},
                           iterations=int(result.nit), wall_time=elapsed, constraint_violation=violation,
                           solver='scipy-trust-constr')


def _scipy_status(code: int, optimality: float, violation: float, tol: float) -> SolveStatus:
    """Map a trust-constr exit code; a step-size stop only counts when the residuals meet tol."""
    if code in (1, 2) and optimality <= tol and violation <= tol:
        return SolveStatus.OPTIMAL
    if code == 0 or code == 2:
        return SolveStatus.MAX_ITER
    return SolveStatus.NUMERICAL_FAILURE
