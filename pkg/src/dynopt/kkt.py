"""
Linear algebra for the interior-point Newton systems.

The symmetric KKT matrix

    [ H + Sigma + delta_w I      J^T     ]
    [ J                      -delta_c I  ]

is factorized either densely or after a symmetric permutation that walks the
stages in time order (stage variables, then the rows of that stage) and puts
the border (pi, border slacks and border rows) last. The stage block gets a
sparse LU with natural column order and the border is eliminated afterwards
through a small dense Schur complement, so fill stays inside the arrow.
"""
import warnings
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .logger import logger

RESIDUAL_RTOL = 1e-8


class SingularKktError(ArithmeticError):
    """The KKT matrix could not be factorized to acceptable accuracy."""


def assemble_kkt(hessian: sp.spmatrix, jacobian: sp.spmatrix, sigma: np.ndarray,
                 delta_w: float = 0.0, delta_c: float = 0.0) -> sp.csc_matrix:
    m = jacobian.shape[0]
    top_left = sp.csr_matrix(hessian) + sp.diags(sigma + delta_w, format='csr')
    if m == 0:
        return top_left.tocsc()
    bottom_right = sp.diags(np.full(m, -delta_c), format='csr')
    return sp.bmat([[top_left, jacobian.T], [jacobian, bottom_right]], format='csc')


def arrowhead_order(var_stage: np.ndarray, row_stage: np.ndarray) -> np.ndarray:
    """Permutation of [variables; rows] into stage order with the border last."""
    n = var_stage.size
    tags = np.concatenate([var_stage, row_stage]).astype(float)
    border = tags < 0
    tags[border] = np.inf
    kind = np.concatenate([np.zeros(n), np.ones(row_stage.size)])
    position = np.arange(tags.size)
    return np.lexsort((position, kind, tags))


class Factorization(ABC):
    @abstractmethod
    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solution of K x = rhs."""


class KktSolver(ABC):
    """Factorizes KKT matrices and checks every solve for accuracy."""
    name = 'abstract'

    @abstractmethod
    def factorize(self, matrix: sp.csc_matrix) -> Factorization:
        """Factorize or raise SingularKktError."""

    def solve(self, matrix: sp.csc_matrix, rhs: np.ndarray, factor: Optional[Factorization] = None) -> np.ndarray:
        factor = self.factorize(matrix) if factor is None else factor
        sol = factor.solve(rhs)
        check_solution(matrix, sol, rhs)
        return sol


def check_solution(matrix, sol: np.ndarray, rhs: np.ndarray) -> None:
    if not np.all(np.isfinite(sol)):
        raise SingularKktError("KKT solve produced non-finite values")
    residual = matrix @ sol - rhs
    scale = np.max(np.abs(rhs), initial=0.0) + abs(matrix).max() * np.max(np.abs(sol), initial=0.0)
    if np.max(np.abs(residual), initial=0.0) > RESIDUAL_RTOL * max(scale, 1e-300):
        raise SingularKktError("KKT solve residual too large; matrix is numerically singular")


class _DenseFactor(Factorization):
    def __init__(self, lu_piv):
        self.lu_piv = lu_piv

    def solve(self, rhs):
        return sla.lu_solve(self.lu_piv, rhs)


class DenseKktSolver(KktSolver):
    name = 'dense'

    def factorize(self, matrix):
        dense = matrix.toarray()
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', sla.LinAlgWarning)
            lu, piv = sla.lu_factor(dense, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.size and (not np.all(np.isfinite(pivots)) or pivots.min() <= 1e-300):
            raise SingularKktError("Dense KKT factorization hit a zero pivot")
        return _DenseFactor((lu, piv))


class _SparseFactor(Factorization):
    def __init__(self, lu, order: np.ndarray):
        self.lu = lu
        self.order = order

    @property
    def nnz(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz)

    def solve(self, rhs):
        out = np.empty_like(rhs, dtype=float)
        out[self.order] = self.lu.solve(np.asarray(rhs, dtype=float)[self.order])
        return out


class _ArrowFactor(Factorization):
    """Stage block A by sparse LU, then the border through S = C - D A^-1 B."""

    def __init__(self, lu, coupling: np.ndarray, lower_left: sp.csr_matrix, schur, order: np.ndarray):
        self.lu = lu
        self.coupling = coupling
        self.lower_left = lower_left
        self.schur = schur
        self.order = order

    @property
    def nnz(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz + self.coupling.size + self.schur[0].size)

    def solve(self, rhs):
        permuted = np.asarray(rhs, dtype=float)[self.order]
        n_a = self.coupling.shape[0]
        stage_part = self.lu.solve(permuted[:n_a])
        border = sla.lu_solve(self.schur, permuted[n_a:] - self.lower_left @ stage_part)
        out = np.empty_like(permuted)
        out[self.order] = np.concatenate([stage_part - self.coupling @ border, border])
        return out


class StructuredKktSolver(KktSolver):
    """Sparse LU of the stage-ordered block with the border eliminated last.

    Pivoting stays inside the stage block, so the factor grows linearly with
    the stage count; a singular stage block falls back to one sparse LU of
    the whole permuted matrix.

    Args:
        var_stage: Stage tag of every primal unknown (-1 for border).
        row_stage: Stage tag of every constraint row (-1 for border).
    """
    name = 'structured'

    def __init__(self, var_stage: np.ndarray, row_stage: np.ndarray):
        var_stage, row_stage = np.asarray(var_stage), np.asarray(row_stage)
        self.order = arrowhead_order(var_stage, row_stage)
        self.n_border = int(np.count_nonzero(var_stage < 0) + np.count_nonzero(row_stage < 0))

    def factorize(self, matrix):
        permuted = sp.csc_matrix(matrix)[self.order][:, self.order].tocsc()
        n_a = permuted.shape[0] - self.n_border
        if self.n_border and n_a:
            try:
                factor = self._arrow(permuted, n_a)
                trial = np.ones(permuted.shape[0])
                check_solution(matrix, factor.solve(trial), trial)
                return factor
            except SingularKktError:
                logger.debug("Stage block of the KKT matrix is singular; factorizing it whole")
        return _SparseFactor(_splu(permuted), self.order)

    def _arrow(self, permuted: sp.csc_matrix, n_a: int) -> _ArrowFactor:
        lu = _splu(permuted[:n_a, :n_a].tocsc())
        coupling = lu.solve(permuted[:n_a, n_a:].toarray())
        lower_left = permuted[n_a:, :n_a].tocsr()
        schur = permuted[n_a:, n_a:].toarray() - lower_left @ coupling
        if not np.all(np.isfinite(schur)):
            raise SingularKktError("Border Schur complement is not finite")
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', sla.LinAlgWarning)
            lu_piv = sla.lu_factor(schur, check_finite=False)
        pivots = np.abs(np.diag(lu_piv[0]))
        if not np.all(np.isfinite(pivots)) or pivots.min() <= 1e-300:
            raise SingularKktError("Border Schur complement hit a zero pivot")
        return _ArrowFactor(lu, coupling, lower_left, lu_piv, self.order)


def _splu(matrix: sp.csc_matrix):
    try:
        return splu(matrix, permc_spec='NATURAL', diag_pivot_thresh=0.1, options={'SymmetricMode': True})
    except RuntimeError as exc:
        raise SingularKktError(str(exc)) from exc


def make_kkt_solver(name: str, var_stage: np.ndarray, row_stage: np.ndarray) -> KktSolver:
    if name == 'dense':
        return DenseKktSolver()
    if name == 'structured':
        return StructuredKktSolver(var_stage, row_stage)
    raise ValueError(f"Unknown KKT solver '{name}'")
