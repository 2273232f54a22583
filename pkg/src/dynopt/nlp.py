"""
Structured nonlinear programs produced by the transcriptions.

The decision vector is laid out stage by stage, [(s_0, q_0), ..., s_N, pi],
and every constraint row carries the stage it belongs to (-1 for border rows
that couple non-adjacent stages or only touch pi). Functions are assembled
from two kinds of terms:

* LinearTerm: rows M z + c.
* PointwiseTerm: a vectorized callable applied to arguments A = (argmap z +
  offset) reshaped to (n_args, n_points), optionally followed by a sparse
  reduction. Jacobians and Hessians follow from per-point partials through
  sparse chain rules, so only n_args-sized finite differences are ever taken.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import SizeError
from .logger import logger

EPS = np.finfo(float).eps
FD_STEP_FIRST = np.cbrt(EPS)
FD_STEP_SECOND = EPS ** 0.25


@dataclass(eq=False)
class DecisionLayout:
    """Stage-ordered decision vector description.

    Attributes:
        size: Number of decision variables.
        var_stage: Stage of each variable; -1 marks the parameter border.
        var_keys: Hashable identity of each variable, stable across meshes
            for intervals that did not change.
        param_slice: Location of pi.
        blocks: Per phase, a dict with 'state'/'input' lists of slices per
            interval, the 'terminal' slice, and transcription extras.
    """
    size: int
    var_stage: np.ndarray
    var_keys: List[tuple]
    param_slice: slice
    blocks: List[Dict[str, object]] = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return int(self.var_stage.max(initial=-1)) + 1

    def stage_variables(self, stage: int) -> np.ndarray:
        return np.flatnonzero(self.var_stage == stage)


class LayoutBuilder:
    """Allocates variable blocks in stage order."""

    def __init__(self):
        self.size = 0
        self._stage: List[np.ndarray] = []
        self._keys: List[tuple] = []
        self._lower: List[np.ndarray] = []
        self._upper: List[np.ndarray] = []
        self._guess: List[np.ndarray] = []

    def add(self, count: int, stage: int, key: tuple, lower, upper, guess) -> slice:
        block = slice(self.size, self.size + count)
        self.size += count
        self._stage.append(np.full(count, stage, dtype=int))
        self._keys.extend(key + (k,) for k in range(count))
        self._lower.append(np.broadcast_to(np.asarray(lower, dtype=float), (count,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, dtype=float), (count,)).copy())
        self._guess.append(np.broadcast_to(np.asarray(guess, dtype=float), (count,)).copy())
        return block

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        def cat(parts, dtype=float):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)
        return cat(self._stage, int), cat(self._lower), cat(self._upper), cat(self._guess)

    @property
    def keys(self) -> List[tuple]:
        return list(self._keys)


class Term(ABC):
    """A block of rows (constraints) or a scalar (cost) of the NLP."""

    def __init__(self, name: str, n_rows: int, n_vars: int, row_stage=None, lower=None, upper=None,
                 row_keys: Optional[List[tuple]] = None):
        self.name = name
        self.n_rows = int(n_rows)
        self.n_vars = int(n_vars)
        self.row_stage = (np.full(self.n_rows, -1, dtype=int) if row_stage is None
                          else np.broadcast_to(np.asarray(row_stage, dtype=int), (self.n_rows,)).copy())
        self.lower = np.zeros(self.n_rows) if lower is None else np.broadcast_to(
            np.asarray(lower, dtype=float), (self.n_rows,)).copy()
        self.upper = np.zeros(self.n_rows) if upper is None else np.broadcast_to(
            np.asarray(upper, dtype=float), (self.n_rows,)).copy()
        self.row_keys = row_keys if row_keys is not None else [(name, k) for k in range(self.n_rows)]

    @abstractmethod
    def values(self, z: np.ndarray) -> np.ndarray:
        """Row values at z."""

    @abstractmethod
    def jacobian(self, z: np.ndarray) -> sp.csr_matrix:
        """Sparse Jacobian (n_rows x n_vars)."""

    @abstractmethod
    def hessian(self, z: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
        """Sparse Hessian of weights . values (n_vars x n_vars)."""

    @abstractmethod
    def pattern(self) -> sp.csr_matrix:
        """Structural superset of the Jacobian nonzeros."""

    @abstractmethod
    def remap_columns(self, column_map: Callable[[np.ndarray, np.ndarray], np.ndarray], n_vars: int) -> 'Term':
        """Copy of the term with columns renamed row by row (used by lifting)."""


class LinearTerm(Term):
    """Rows matrix @ z + offset."""

    def __init__(self, name: str, matrix, offset=None, **kwargs):
        matrix = sp.csr_matrix(matrix)
        super().__init__(name, matrix.shape[0], matrix.shape[1], **kwargs)
        self.matrix = matrix
        self.offset = np.zeros(self.n_rows) if offset is None else np.asarray(offset, dtype=float)

    def values(self, z):
        return self.matrix @ z + self.offset

    def jacobian(self, z):
        return self.matrix

    def hessian(self, z, weights):
        return sp.csr_matrix((self.n_vars, self.n_vars))

    def pattern(self):
        pat = self.matrix.copy()
        pat.data = np.ones_like(pat.data)
        return pat

    def remap_columns(self, column_map, n_vars):
        coo = self.matrix.tocoo()
        cols = column_map(coo.row, coo.col)
        matrix = sp.csr_matrix((coo.data, (coo.row, cols)), shape=(self.n_rows, n_vars))
        return LinearTerm(self.name, matrix, self.offset, row_stage=self.row_stage,
                          lower=self.lower, upper=self.upper, row_keys=self.row_keys)


class PointwiseTerm(Term):
    """Vectorized callable applied pointwise to linearly mapped arguments.

    Args:
        name: Label used in logs and derivative reports.
        fun: Callable mapping an (n_args, P) array to (n_out, P).
        argmap: Sparse (n_args * P, n_vars) map; row a * P + p feeds argument
            a of point p.
        offset: Constant added to the mapped arguments (times, known data).
        n_args, n_points, n_out: Shapes.
        reduce: Optional sparse (n_rows, n_out * P) combination of outputs;
            output j of point p sits at column j * P + p.
        jac: Optional callable returning (n_out, n_args, P) partials.
        point_stage: Stage of each point (used by the lifting rewrite).
    """

    def __init__(self, name: str, fun, argmap, offset, n_args: int, n_points: int, n_out: int,
                 reduce=None, jac=None, point_stage=None, **kwargs):
        argmap = sp.csr_matrix(argmap)
        if argmap.shape[0] != n_args * n_points:
            raise SizeError(f"{name}: argmap has {argmap.shape[0]} rows, expected {n_args * n_points}")
        n_rows = reduce.shape[0] if reduce is not None else n_out * n_points
        super().__init__(name, n_rows, argmap.shape[1], **kwargs)
        self.fun = fun
        self.jac = jac
        self.argmap = argmap
        self.offset = np.zeros(n_args * n_points) if offset is None else np.asarray(offset, dtype=float)
        self.n_args, self.n_points, self.n_out = int(n_args), int(n_points), int(n_out)
        self.reduce = None if reduce is None else sp.csr_matrix(reduce)
        self.point_stage = (np.full(n_points, -1, dtype=int) if point_stage is None
                            else np.asarray(point_stage, dtype=int))
        counts = np.diff(self.argmap.indptr).reshape(self.n_args, self.n_points)
        self.active = np.flatnonzero(counts.sum(axis=1) > 0)

    # -- evaluation -------------------------------------------------------
    def arguments(self, z: np.ndarray) -> np.ndarray:
        return (self.argmap @ z + self.offset).reshape(self.n_args, self.n_points)

    def _call(self, args: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fun(args), dtype=float)
        return out.reshape(self.n_out, args.shape[1])

    def outputs(self, z: np.ndarray) -> np.ndarray:
        return self._call(self.arguments(z))

    def values(self, z):
        flat = self.outputs(z).reshape(-1)
        return self.reduce @ flat if self.reduce is not None else flat

    # -- derivatives ------------------------------------------------------
    def partials(self, args: np.ndarray) -> np.ndarray:
        """(n_out, n_args, P) partial derivatives, zero for inactive arguments."""
        P = self.n_points
        if self.jac is not None:
            return np.asarray(self.jac(args), dtype=float).reshape(self.n_out, self.n_args, P)
        result = np.zeros((self.n_out, self.n_args, P))
        act = self.active
        if act.size == 0:
            return result
        step = FD_STEP_FIRST * (1.0 + np.abs(args[act]))
        tiled = np.tile(args, (1, act.size))
        for slot, a in enumerate(act):
            tiled[a, slot * P:(slot + 1) * P] += step[slot]
        plus = self._call(tiled)
        for slot, a in enumerate(act):
            tiled[a, slot * P:(slot + 1) * P] -= 2.0 * step[slot]
        minus = self._call(tiled)
        diff = (plus - minus).reshape(self.n_out, act.size, P)
        result[:, act, :] = diff / (2.0 * step[None, :, :])
        return result

    def _block_diag(self, blocks: np.ndarray, n_left: int) -> sp.csr_matrix:
        """Sparse matrix with entry (r*P+p, a*P+p) = blocks[r, a, p]."""
        P = self.n_points
        act = self.active
        sub = blocks[:, act, :]
        rows = (np.arange(n_left)[:, None, None] * P + np.arange(P)[None, None, :])
        rows = np.broadcast_to(rows, sub.shape)
        cols = np.broadcast_to(act[None, :, None] * P + np.arange(P)[None, None, :], sub.shape)
        return sp.csr_matrix((sub.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(n_left * P, self.n_args * P))

    def jacobian(self, z):
        blocks = self.partials(self.arguments(z))
        jac = self._block_diag(blocks, self.n_out) @ self.argmap
        return (self.reduce @ jac).tocsr() if self.reduce is not None else jac.tocsr()

    def point_hessians(self, args: np.ndarray, omega: np.ndarray) -> np.ndarray:
        """(n_args, n_args, P) Hessians of sum_j omega[j, p] * f_j at each point."""
        P = self.n_points
        act = self.active
        q = act.size
        hess = np.zeros((self.n_args, self.n_args, P))
        if q == 0 or not np.any(omega):
            return hess
        if self.jac is not None:
            step = FD_STEP_FIRST * (1.0 + np.abs(args[act]))
            tiled = np.tile(args, (1, q))
            for slot, a in enumerate(act):
                tiled[a, slot * P:(slot + 1) * P] += step[slot]
            plus = np.asarray(self.jac(tiled), dtype=float).reshape(self.n_out, self.n_args, q, P)
            for slot, a in enumerate(act):
                tiled[a, slot * P:(slot + 1) * P] -= 2.0 * step[slot]
            minus = np.asarray(self.jac(tiled), dtype=float).reshape(self.n_out, self.n_args, q, P)
            # d/d(arg a) of sum_j omega_j df_j/d(arg b) -> [a, b]
            ddiff = np.einsum('jp,jbap->abp', omega, plus - minus) / (2.0 * step[:, None, :])
            hess[np.ix_(act, np.arange(self.n_args))] = ddiff
        else:
            step = FD_STEP_SECOND * (1.0 + np.abs(args[act]))
            phi = lambda values: np.einsum('jp,jcp->cp', omega, values.reshape(self.n_out, -1, P))  # noqa: E731
            for i, a in enumerate(act):
                partners = act[i:]
                count = partners.size
                tiled = np.tile(args, (1, 4 * count))
                for slot, b in enumerate(partners):
                    base = 4 * slot * P
                    for corner, (sa, sb) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
                        cols = slice(base + corner * P, base + (corner + 1) * P)
                        tiled[a, cols] += sa * step[i]
                        tiled[b, cols] += sb * step[i + slot]
                values = phi(self._call(tiled)).reshape(count, 4, P)
                mixed = (values[:, 0] - values[:, 1] - values[:, 2] + values[:, 3])
                mixed /= 4.0 * step[i][None, :] * step[i:]
                hess[a, partners, :] = mixed
                hess[partners, a, :] = mixed
        hess[np.ix_(act, act)] = 0.5 * (hess[np.ix_(act, act)] + np.transpose(hess[np.ix_(act, act)], (1, 0, 2)))
        return hess

    def hessian(self, z, weights):
        omega_flat = self.reduce.T @ weights if self.reduce is not None else np.asarray(weights, dtype=float)
        omega = np.asarray(omega_flat).reshape(self.n_out, self.n_points)
        hess = self.point_hessians(self.arguments(z), omega)
        inner = self._block_diag(hess, self.n_args)
        return (self.argmap.T @ inner @ self.argmap).tocsr()

    def pattern(self):
        P = self.n_points
        ones = np.ones((self.n_out, self.n_args, P))
        structure = self._block_diag(ones, self.n_out)
        amap = self.argmap.copy()
        amap.data = np.ones_like(amap.data)
        pat = structure @ amap
        if self.reduce is not None:
            red = self.reduce.copy()
            red.data = np.ones_like(red.data)
            pat = red @ pat
        pat = sp.csr_matrix(pat)
        pat.data = np.ones_like(pat.data)
        return pat

    def remap_columns(self, column_map, n_vars):
        coo = self.argmap.tocoo()
        point = coo.row % self.n_points
        cols = column_map(point, coo.col)
        argmap = sp.csr_matrix((coo.data, (coo.row, cols)), shape=(self.argmap.shape[0], n_vars))
        return PointwiseTerm(self.name, self.fun, argmap, self.offset, self.n_args, self.n_points,
                             self.n_out, reduce=self.reduce, jac=self.jac, point_stage=self.point_stage,
                             row_stage=self.row_stage, lower=self.lower, upper=self.upper,
                             row_keys=self.row_keys)


@dataclass(eq=False)
class StructuredNlp:
    """min cost(z) s.t. lower <= c(z) <= upper, z_lower <= z <= z_upper."""
    layout: DecisionLayout
    cost_terms: List[Term]
    constraints: List[Term]
    z_lower: np.ndarray
    z_upper: np.ndarray
    z_guess: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)
    name: str = 'nlp'

    def __post_init__(self):
        offsets = [0]
        for term in self.constraints:
            offsets.append(offsets[-1] + term.n_rows)
        self._offsets = offsets

    @property
    def n(self) -> int:
        return self.layout.size

    @property
    def m(self) -> int:
        return self._offsets[-1]

    def row_slices(self) -> List[slice]:
        return [slice(a, b) for a, b in zip(self._offsets[:-1], self._offsets[1:])]

    @property
    def row_stage(self) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0, dtype=int)
        return np.concatenate([t.row_stage for t in self.constraints])

    @property
    def row_keys(self) -> List[tuple]:
        keys: List[tuple] = []
        for term in self.constraints:
            keys.extend(term.row_keys)
        return keys

    def constraint_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.constraints:
            return np.zeros(0), np.zeros(0)
        return (np.concatenate([t.lower for t in self.constraints]),
                np.concatenate([t.upper for t in self.constraints]))

    def cost(self, z: np.ndarray) -> float:
        return float(sum(np.sum(t.values(z)) for t in self.cost_terms))

    def gradient(self, z: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.n)
        for term in self.cost_terms:
            grad += np.asarray(term.jacobian(z).sum(axis=0)).ravel()
        return grad

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate([t.values(z) for t in self.constraints])

    def jacobian(self, z: np.ndarray) -> sp.csr_matrix:
        if not self.constraints:
            return sp.csr_matrix((0, self.n))
        return sp.vstack([t.jacobian(z) for t in self.constraints], format='csr')

    def hessian(self, z: np.ndarray, multipliers: np.ndarray, obj_factor: float = 1.0) -> sp.csr_matrix:
        """Hessian of obj_factor * cost + multipliers . c."""
        hess = sp.csr_matrix((self.n, self.n))
        if obj_factor != 0.0:
            for term in self.cost_terms:
                hess = hess + term.hessian(z, np.full(term.n_rows, obj_factor))
        for term, rows in zip(self.constraints, self.row_slices()):
            lam = multipliers[rows]
            if np.any(lam):
                hess = hess + term.hessian(z, lam)
        return hess.tocsr()

    def equality_rows(self) -> np.ndarray:
        lower, upper = self.constraint_bounds()
        return np.flatnonzero(lower == upper)


def jacobian_pattern(nlp: StructuredNlp) -> sp.csr_matrix:
    """Declared constraint-Jacobian sparsity (a superset of the true nonzeros)."""
    if not nlp.constraints:
        return sp.csr_matrix((0, nlp.n))
    pat = sp.vstack([t.pattern() for t in nlp.constraints], format='csr')
    pat.data = np.ones_like(pat.data)
    return pat


def sampled_pattern(nlp: StructuredNlp, z: np.ndarray, rng: Optional[np.random.Generator] = None,
                    scale: float = 1e-3, tol: float = 0.0) -> sp.csr_matrix:
    """True nonzero pattern found by perturbing one variable at a time."""
    rng = np.random.default_rng(0) if rng is None else rng
    base = nlp.constraint_values(z)
    rows, cols = [], []
    for j in range(nlp.n):
        shifted = z.copy()
        shifted[j] += scale * (0.5 + rng.random()) * (1.0 + abs(z[j]))
        changed = np.flatnonzero(np.abs(nlp.constraint_values(shifted) - base) > tol)
        rows.extend(changed.tolist())
        cols.extend([j] * changed.size)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nlp.m, nlp.n))


def pattern_covers(declared: sp.csr_matrix, sampled: sp.csr_matrix) -> bool:
    missing = sampled - sampled.multiply(declared)
    return missing.count_nonzero() == 0


def arrowhead_violations(pattern: sp.csr_matrix, row_stage: np.ndarray, var_stage: np.ndarray) -> List[int]:
    """Rows of a stage that touch variables outside the stage pair or pi."""
    coo = sp.coo_matrix(pattern)
    row_tag = row_stage[coo.row]
    col_tag = var_stage[coo.col]
    staged = row_tag >= 0
    bad = staged & (col_tag >= 0) & ((col_tag < row_tag) | (col_tag > row_tag + 1))
    return sorted(set(coo.row[bad].tolist()))


def is_block_arrowhead(nlp: StructuredNlp, pattern: Optional[sp.csr_matrix] = None) -> bool:
    pattern = jacobian_pattern(nlp) if pattern is None else pattern
    return not arrowhead_violations(pattern, nlp.row_stage, nlp.layout.var_stage)


def is_strictly_banded(nlp: StructuredNlp, pattern: Optional[sp.csr_matrix] = None) -> bool:
    """No border: every row spans at most two adjacent stages and no pi column."""
    pattern = jacobian_pattern(nlp) if pattern is None else pattern
    var_stage = nlp.layout.var_stage
    if np.any(var_stage < 0):
        return False
    csr = sp.csr_matrix(pattern)
    for r in range(csr.shape[0]):
        stages = var_stage[csr.indices[csr.indptr[r]:csr.indptr[r + 1]]]
        if stages.size and stages.max() - stages.min() > 1:
            return False
    return True


@dataclass
class BlockDeviation:
    name: str
    max_deviation: float
    row: int
    column: int
    flagged: bool


def derivative_check(nlp: StructuredNlp, z: np.ndarray, step: float = 1e-6,
                     threshold: float = 1e-5) -> List[BlockDeviation]:
    """Compare each block's assembled Jacobian with central differences.

    Deviation is |J - J_fd| / (1 + |J_fd|); the worst entry of every block is
    reported with its global row and column.
    """
    report = []
    blocks = [(t, 0, 'cost') for t in nlp.cost_terms]
    blocks += [(t, rows.start, 'constraint') for t, rows in zip(nlp.constraints, nlp.row_slices())]
    for term, row_offset, kind in blocks:
        analytic = term.jacobian(z).toarray()
        columns = np.unique(sp.coo_matrix(term.pattern()).col)
        numeric = np.zeros_like(analytic)
        for j in columns:
            h = step * (1.0 + abs(z[j]))
            up, down = z.copy(), z.copy()
            up[j] += h
            down[j] -= h
            numeric[:, j] = (term.values(up) - term.values(down)) / (2.0 * h)
        deviation = np.abs(analytic - numeric) / (1.0 + np.abs(numeric))
        if deviation.size == 0:
            continue
        r, c = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
        worst = float(deviation[r, c])
        entry = BlockDeviation(name=f"{kind}:{term.name}", max_deviation=worst,
                               row=int(r + row_offset), column=int(c), flagged=worst > threshold)
        if entry.flagged:
            logger.warning("Derivative mismatch in %s at row %d, column %d: %.3e",
                           entry.name, entry.row, entry.column, worst)
        report.append(entry)
    return report


def lift_parameters(nlp: StructuredNlp) -> StructuredNlp:
    """Give every stage its own copy of pi, chained by equality rows.

    The original pi block serves as the copy of stage 0. Rows of a stage use
    that stage's copy; border rows use the copy of the latest stage they
    touch, so only rows that couple distant stages stay off the band.
    """
    layout = nlp.layout
    params = np.arange(layout.param_slice.start, layout.param_slice.stop)
    n_par = params.size
    stages = layout.n_stages
    if n_par == 0 or stages == 0:
        return nlp
    n_old = layout.size
    copy_start = {0: layout.param_slice.start}
    for k in range(1, stages):
        copy_start[k] = n_old + (k - 1) * n_par
    n_new = n_old + (stages - 1) * n_par
    var_stage = np.concatenate([layout.var_stage, np.repeat(np.arange(1, stages), n_par)])
    var_stage[params] = 0
    is_param = np.zeros(n_new, dtype=bool)
    is_param[params] = True

    def target_stage(item_stage: np.ndarray, item: np.ndarray, cols: np.ndarray) -> np.ndarray:
        # stage per (row or point) item; fall back to the latest staged column
        own = item_stage[item].copy()
        unresolved = own < 0
        if np.any(unresolved):
            latest = np.full(item_stage.size, 0)
            staged = ~is_param[cols] & (layout.var_stage[np.minimum(cols, n_old - 1)] >= 0)
            np.maximum.at(latest, item[staged], layout.var_stage[cols[staged]])
            own[unresolved] = latest[item[unresolved]]
        return own

    new_terms = []
    for term in nlp.constraints + nlp.cost_terms:
        if isinstance(term, PointwiseTerm):
            stage_of_item = term.point_stage
        else:
            stage_of_item = term.row_stage

        def column_map(item, cols, term=term, stage_of_item=stage_of_item):
            cols = np.asarray(cols).copy()
            hit = is_param[cols]
            if np.any(hit):
                stage = target_stage(stage_of_item, item, cols)
                offsets = cols[hit] - layout.param_slice.start
                cols[hit] = np.array([copy_start[int(s)] for s in stage[hit]]) + offsets
            return cols
        new_terms.append(term.remap_columns(column_map, n_new))
    constraints = new_terms[:len(nlp.constraints)]
    costs = new_terms[len(nlp.constraints):]

    rows, cols, vals = [], [], []
    for k in range(stages - 1):
        for j in range(n_par):
            r = k * n_par + j
            rows += [r, r]
            cols += [copy_start[k + 1] + j, copy_start[k] + j]
            vals += [1.0, -1.0]
    link = LinearTerm('parameter_copies', sp.csr_matrix((vals, (rows, cols)), shape=((stages - 1) * n_par, n_new)),
                      row_stage=np.repeat(np.arange(stages - 1), n_par))
    constraints.append(link)

    extra_keys = [('pi_copy', k, j) for k in range(1, stages) for j in range(n_par)]
    lifted_layout = DecisionLayout(size=n_new, var_stage=var_stage, var_keys=layout.var_keys + extra_keys,
                                   param_slice=layout.param_slice,
                                   blocks=layout.blocks)
    rep = lambda arr: np.concatenate([arr, np.tile(arr[params], stages - 1)])  # noqa: E731
    return StructuredNlp(layout=lifted_layout, cost_terms=costs, constraints=constraints,
                         z_lower=rep(nlp.z_lower), z_upper=rep(nlp.z_upper), z_guess=rep(nlp.z_guess),
                         meta=dict(nlp.meta, lifted=True), name=f"{nlp.name}-lifted")
