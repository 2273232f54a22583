"""
Runge-Kutta transcription of semi-explicit problems.

Interval i owns xi_i, the stage values xt_{i,j} and the stage slopes
ft_{i,j}; the inputs are sampled at the distinct abscissae. Continuity comes
for free because xi_{i+1} is shared with the next interval (or is the
terminal block).
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .base_transcriber import BaseTranscriber, PhaseContext
from .errors import FormError
from .nlp import LayoutBuilder, LinearTerm, PointwiseTerm, Term
from .poly import barycentric_build, interpolation_matrix
from .problem import _clip_guess
from .schemes import ButcherTableau, tableau as lookup_tableau
from .trajectory import PiecewiseTrajectory

HERMITE_NODES = np.array([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0])


def hermite_values(x0: np.ndarray, f0: np.ndarray, x1: np.ndarray, f1: np.ndarray, h: float,
                   taus: np.ndarray = HERMITE_NODES) -> np.ndarray:
    """Cubic Hermite interpolant of (x0, f0), (x1, f1) sampled at reference points."""
    s = 0.5 * (np.asarray(taus) + 1.0)
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return (np.outer(x0, h00) + h * np.outer(f0, h10) + np.outer(x1, h01) + h * np.outer(f1, h11))


class RungeKuttaTranscriber(BaseTranscriber):
    """
    Sparse Runge-Kutta NLP builder.

    Args:
        problem: DopProblem or PhaseStack with semi-explicit dynamics.
        mesh: Mesh (or one per phase); only the nodes are used.
        tableau: ButcherTableau or a registered name.
        algebraic_points: None for the stage points, or reference points on
            [-1, 1] where the algebraic equations hold.
        guess: Initial guess.
    """
    method = 'runge-kutta'

    def __init__(self, problem, mesh, tableau: Union[str, ButcherTableau] = 'rk4',
                 algebraic_points: Optional[Sequence[float]] = None, guess=None):
        super().__init__(problem, mesh, guess)
        self.tableau = lookup_tableau(tableau) if isinstance(tableau, str) else tableau
        self.algebraic_points = None if algebraic_points is None else np.asarray(algebraic_points, dtype=float)
        for phase in self.stack.phases:
            if phase.semi_explicit is None:
                raise FormError(f"Phase '{phase.name}' has no semi-explicit form; Runge-Kutta needs xdot = rhs(x, u)")
        self.stage_cols = {}

    @property
    def unique_c(self) -> np.ndarray:
        return self.tableau.unique_abscissae

    def _dense_stages(self) -> List[int]:
        """First stage of every distinct abscissa strictly inside (0, 1)."""
        picked, seen = [], set()
        for j, c in enumerate(self.tableau.c):
            if 0.0 < c < 1.0 and c not in seen:
                seen.add(c)
                picked.append(j)
        return picked

    def interval_nodes(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        inner = [2.0 * self.tableau.c[j] - 1.0 for j in self._dense_stages()]
        return np.array([-1.0] + sorted(inner) + [1.0]), 2.0 * self.unique_c - 1.0

    def inequality_points(self, ctx: PhaseContext, i: int) -> np.ndarray:
        return 2.0 * self.tableau.c - 1.0

    def cost_quadrature(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        return 2.0 * self.tableau.c - 1.0, 2.0 * self.tableau.b

    def continuity_terms(self, ctx: PhaseContext) -> List[Term]:
        return []

    # -- layout ----------------------------------------------------------
    def _allocate(self, ctx: PhaseContext, builder: LayoutBuilder, theta_guess: np.ndarray) -> None:
        problem, mesh, tab = ctx.problem, ctx.mesh, self.tableau
        n_x, n_u, K = problem.n_x, problem.n_u, tab.stages
        guess = self._phase_guess(ctx.index)
        x_fallback = _clip_guess(np.zeros(n_x), problem.x_lower, problem.x_upper)
        u_fallback = _clip_guess(np.zeros(n_u), problem.u_lower, problem.u_upper)
        theta = theta_guess[ctx.theta_index]
        rhs = problem.semi_explicit.rhs
        order = [int(j) for j in self._dense_stages()]
        order.sort(key=lambda j: tab.c[j])
        x_lower = np.tile(problem.x_lower, 1 + K)
        x_upper = np.tile(problem.x_upper, 1 + K)
        blocks = []
        for i in range(mesh.n_intervals):
            s_ref, q_ref = self.interval_nodes(ctx, i)
            ctx.state_ref.append(s_ref)
            ctx.input_ref.append(q_ref)
            ctx.state_bases.append(barycentric_build(s_ref))
            ctx.input_bases.append(barycentric_build(q_ref))
            t_nodes = mesh.nodes[i] + mesh.widths[i] * np.concatenate([[0.0], tab.c])
            t_orig = self._original_times(ctx, t_nodes, theta_guess)
            xs = self._values(guess.state, t_orig, n_x, x_fallback)
            us = self._values(guess.inputs, self._original_times(ctx, mesh.nodes[i] + mesh.widths[i] * tab.c,
                                                                  theta_guess), n_u, u_fallback)
            fs = np.asarray(rhs(xs[:, 1:], us, np.tile(theta[:, None], (1, K)), t_nodes[1:]),
                            dtype=float).reshape(n_x, K)
            values = np.concatenate([xs.T.reshape(-1), fs.T.reshape(-1)])
            stage = ctx.first_stage + i
            sig = mesh.signature(i)
            block = builder.add(n_x * (1 + 2 * K), stage, ('rk', ctx.index) + sig,
                                np.concatenate([x_lower, np.full(n_x * K, -np.inf)]),
                                np.concatenate([x_upper, np.full(n_x * K, np.inf)]), values)
            ctx.state_blocks.append(block)
            blocks.append(block)
            u_at = us[:, [int(np.flatnonzero(tab.c == c)[0]) for c in self.unique_c]]
            ublock = builder.add(n_u * q_ref.size, stage, ('u', ctx.index) + sig,
                                 np.tile(problem.u_lower, q_ref.size), np.tile(problem.u_upper, q_ref.size),
                                 u_at.T.reshape(-1))
            ctx.input_blocks.append(ublock)
            ctx.input_cols.append(ublock.start + n_u * np.arange(q_ref.size))
        t_end = self._original_times(ctx, np.array([mesh.tf]), theta_guess)
        if guess.terminal is not None:
            x_end = np.asarray(guess.terminal, dtype=float)
        else:
            x_end = self._values(guess.state, t_end, n_x, x_fallback)[:, 0]
        ctx.terminal = builder.add(n_x, ctx.terminal_stage, ('xN', ctx.index, float(mesh.tf)),
                                   problem.x_lower, problem.x_upper, x_end)
        xi = [b.start for b in blocks] + [ctx.terminal.start]
        for i, block in enumerate(blocks):
            inner = [block.start + n_x * (1 + j) for j in order]
            ctx.state_cols.append(np.array([xi[i]] + inner + [xi[i + 1]]))
        self.stage_cols[ctx.index] = {
            'xi': np.array(xi),
            'stage': np.array([[b.start + n_x * (1 + j) for j in range(K)] for b in blocks]),
            'slope': np.array([[b.start + n_x * (1 + K + j) for j in range(K)] for b in blocks]),
        }

    # -- stage-point arguments -------------------------------------------
    def stage_argmap(self, ctx: PhaseContext, fields: Sequence[str]) -> Tuple[sp.csr_matrix, np.ndarray, int,
                                                                             np.ndarray]:
        """Arguments at every (interval, stage) point: x -> xt, xdot -> ft, udot -> 0."""
        tab = self.tableau
        N, K = ctx.n_intervals, tab.stages
        P = N * K
        intervals = np.repeat(np.arange(N), K)
        stages = np.tile(np.arange(K), N)
        cols = self.stage_cols[ctx.index]
        sizes = self._sizes(ctx)
        u_index = np.searchsorted(self.unique_c, tab.c)
        rows, colv, vals = [], [], []
        n_args = sum(sizes[f] for f in fields)
        offset = np.zeros(n_args * P)
        a0 = 0
        for name in fields:
            dim = sizes[name]
            if dim and name in ('x', 'xdot', 'u'):
                if name == 'x':
                    starts = cols['stage'][intervals, stages]
                elif name == 'xdot':
                    starts = cols['slope'][intervals, stages]
                else:
                    starts = np.array([ctx.input_cols[i][u_index[j]] for i, j in zip(intervals, stages)])
                comp = np.arange(dim)[:, None]
                rows.append(((a0 + comp) * P + np.arange(P)[None, :]).ravel())
                colv.append((starts[None, :] + comp).ravel())
                vals.append(np.ones(dim * P))
            elif dim and name == 'theta':
                rows.append((np.arange(dim)[:, None] * P + np.arange(P)[None, :] + a0 * P).ravel())
                colv.append(np.repeat(ctx.theta_cols, P))
                vals.append(np.ones(dim * P))
            elif name == 't':
                offset[a0 * P:(a0 + 1) * P] = ctx.mesh.nodes[intervals] + ctx.mesh.widths[intervals] * tab.c[stages]
            a0 += dim
        return self._csr(rows, colv, vals, n_args * P), offset, n_args, intervals

    def _stage_term(self, ctx: PhaseContext, name: str, fun, n_out: int, fields, reduce=None,
                    lower=None, upper=None, row_stage=None) -> PointwiseTerm:
        argmap, offset, n_args, intervals = self.stage_argmap(ctx, fields)
        P = intervals.size
        point_stage = ctx.stage(intervals)
        K = self.tableau.stages
        keys = None
        if reduce is None:
            keys = [(name, ctx.index) + ctx.mesh.signature(int(intervals[p])) + (p % K, j)
                    for j in range(n_out) for p in range(P)]
            row_stage = np.tile(point_stage, n_out)
        return PointwiseTerm(f'{name}[{ctx.index}]', fun, argmap, offset, n_args, P, n_out, reduce=reduce,
                             point_stage=point_stage, row_stage=row_stage, lower=lower, upper=upper,
                             row_keys=keys)

    # -- rows ------------------------------------------------------------
    def dynamics_terms(self, ctx: PhaseContext) -> List[Term]:
        problem, tab = ctx.problem, self.tableau
        n_x, K = problem.n_x, tab.stages
        cols = self.stage_cols[ctx.index]
        h = ctx.mesh.widths
        rows, colv, vals, stages, keys = [], [], [], [], []
        r = 0
        for i in range(ctx.n_intervals):
            sig = ctx.mesh.signature(i)
            for c in range(n_x):
                rows += [r, r]
                colv += [cols['xi'][i + 1] + c, cols['xi'][i] + c]
                vals += [1.0, -1.0]
                for j in range(K):
                    if tab.b[j] != 0.0:
                        rows.append(r)
                        colv.append(cols['slope'][i, j] + c)
                        vals.append(-h[i] * tab.b[j])
                stages.append(ctx.first_stage + i)
                keys.append(('rk_update', ctx.index) + sig + (c,))
                r += 1
            for j in range(K):
                for c in range(n_x):
                    rows += [r, r]
                    colv += [cols['stage'][i, j] + c, cols['xi'][i] + c]
                    vals += [1.0, -1.0]
                    for k in range(K):
                        if tab.a[j, k] != 0.0:
                            rows.append(r)
                            colv.append(cols['slope'][i, k] + c)
                            vals.append(-h[i] * tab.a[j, k])
                    stages.append(ctx.first_stage + i)
                    keys.append(('rk_stage', ctx.index) + sig + (j, c))
                    r += 1
        terms: List[Term] = []
        if r:
            matrix = sp.csr_matrix((vals, (rows, colv)), shape=(r, self.layout.size))
            terms.append(LinearTerm(f'rk_linear[{ctx.index}]', matrix, row_stage=stages, row_keys=keys))

        sizes = self._sizes(ctx)
        form = problem.semi_explicit
        fields = ('xdot', 'x', 'u', 'theta', 't')
        dims = [sizes[f] for f in fields]
        if n_x:
            def slopes(args):
                ft, xt, u, theta, t = self.split(args, dims)
                return ft - np.asarray(form.rhs(xt, u, theta, t[0]), dtype=float).reshape(n_x, -1)
            terms.append(self._stage_term(ctx, 'rk_slope', slopes, n_x, fields))
        if form.algebraic is not None and form.n_a:
            alg_fields = ('x', 'u', 'theta', 't')
            alg_dims = [sizes[f] for f in alg_fields]

            def algebraic(args):
                xt, u, theta, t = self.split(args, alg_dims)
                return form.algebraic(xt, u, theta, t[0])
            if self.algebraic_points is None:
                terms.append(self._stage_term(ctx, 'algebraic', algebraic, form.n_a, alg_fields))
            else:
                intervals, taus, local = self._point_set(ctx, lambda c, i: self.algebraic_points)
                terms.append(self._pointwise(ctx, 'algebraic', algebraic, form.n_a, intervals, taus, local,
                                             alg_fields))
        return terms

    def _path_terms(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        if problem.path_inequality is None:
            return []
        sizes = self._sizes(ctx)
        fields = ('xdot', 'x', 'u', 'theta', 't')
        dims = [sizes[f] for f in fields]
        g = problem.path_inequality

        def fun(args):
            xdot, x, u, theta, t = self.split(args, dims)
            return g(xdot, x, np.zeros((problem.n_u, args.shape[1])), u, theta, t[0])
        K = self.tableau.stages
        n_rows = problem.n_g * ctx.n_intervals * K
        return [self._stage_term(ctx, 'path', fun, problem.n_g, fields,
                                 lower=np.full(n_rows, -np.inf), upper=np.zeros(n_rows))]

    def running_cost_term(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        if problem.running_cost is None:
            return []
        sizes = self._sizes(ctx)
        fields = ('x', 'u', 'theta', 't')
        dims = [sizes[f] for f in fields]
        running = problem.running_cost

        def fun(args):
            x, u, theta, t = self.split(args, dims)
            return np.asarray(running(x, u, theta, t[0]), dtype=float).reshape(1, -1)
        weights = np.repeat(ctx.mesh.widths, self.tableau.stages) * np.tile(self.tableau.b, ctx.n_intervals)
        return [self._stage_term(ctx, 'running_cost', fun, 1, fields, reduce=sp.csr_matrix(weights.reshape(1, -1)),
                                 row_stage=[-1])]

    # -- extraction ------------------------------------------------------
    def phase_trajectories(self, ctx: PhaseContext, z: np.ndarray) -> Tuple[PiecewiseTrajectory,
                                                                           PiecewiseTrajectory]:
        """Cubic Hermite state through (xi_i, F_i) and (xi_{i+1}, F_{i+1}) per interval."""
        problem = ctx.problem
        n_x, n_u = problem.n_x, problem.n_u
        cols = self.stage_cols[ctx.index]
        theta = z[ctx.theta_cols]
        inputs, coeffs = [], []
        hermite = barycentric_build(HERMITE_NODES)
        for i in range(ctx.n_intervals):
            u_nodes = (z[ctx.input_blocks[i]].reshape(-1, n_u).T if n_u
                       else np.zeros((0, ctx.input_bases[i].count)))
            inputs.append(u_nodes)
            u_ends = u_nodes @ interpolation_matrix(ctx.input_bases[i], [-1.0, 1.0]).T
            x0 = z[cols['xi'][i]:cols['xi'][i] + n_x]
            x1 = z[cols['xi'][i + 1]:cols['xi'][i + 1] + n_x]
            t = ctx.mesh.nodes[i:i + 2]
            f = np.asarray(problem.semi_explicit.rhs(np.column_stack([x0, x1]), u_ends,
                                                     np.tile(theta[:, None], (1, 2)), t), dtype=float)
            f = f.reshape(n_x, 2)
            coeffs.append(hermite_values(x0, f[:, 0], x1, f[:, 1], ctx.mesh.widths[i]))
        state = PiecewiseTrajectory(ctx.mesh.nodes, (hermite,) * ctx.n_intervals, tuple(coeffs),
                                    terminal=z[ctx.terminal])
        control = PiecewiseTrajectory(ctx.mesh.nodes, tuple(ctx.input_bases), tuple(inputs))
        return state, control
