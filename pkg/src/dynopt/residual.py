"""
Integrated-residual transcription.

Instead of zeroing the dynamics residual pointwise, the integral of its
weighted square over each interval is either minimized (phase 1, a
constrained least-squares problem) or bounded by h_i * eps_i (phase 2, with
the original cost).
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .base_transcriber import BaseTranscriber, PhaseContext
from .errors import ConfigurationError
from .nlp import PointwiseTerm, StructuredNlp, Term
from .poly import gauss_quadrature
from .schemes import RESIDUAL_FLOOR, ResidualOptions, default_quadrature_points, residual_nodes

RESIDUAL_FIELDS = ('xdot', 'x', 'u', 'theta', 't')
MODES = ('minimize', 'constrain')


def auto_bounds(integrals: np.ndarray, widths: np.ndarray, slack_factor: float) -> np.ndarray:
    """eps_i = alpha * r_i / h_i from phase-1 interval integrals r_i."""
    return slack_factor * np.asarray(integrals, dtype=float) / np.asarray(widths, dtype=float)


def apply_weight(weight, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """W(t) f for a diagonal (n_f, P) or full (n_f, n_f, P) weight."""
    if weight is None:
        return values
    w = np.asarray(weight(t), dtype=float)
    if w.ndim == 2:
        return w * values
    return np.einsum('rsp,sp->rp', w, values)


class ResidualTranscriber(BaseTranscriber):
    """
    Integrated-residual NLP builder.

    Args:
        problem: DopProblem or PhaseStack.
        mesh: Mesh (or one per phase) whose degrees give the state and input
            polynomials; state nodes are LGL(N_s + 1).
        options: ResidualOptions.
        mode: 'minimize' (phase 1) or 'constrain' (phase 2).
        bounds: Per-phase eps arrays for 'constrain'; defaults to
            options.bounds.
        guess: Initial guess.
    """
    method = 'integrated-residual'

    def __init__(self, problem, mesh, options: ResidualOptions = None, mode: str = 'minimize',
                 bounds: Optional[Sequence[np.ndarray]] = None, guess=None):
        super().__init__(problem, mesh, guess)
        if mode not in MODES:
            raise ConfigurationError(f"Unknown residual mode '{mode}'")
        self.options = options or ResidualOptions()
        self.mode = mode
        if bounds is None and self.options.bounds is not None:
            bounds = [self.options.bounds] * len(self.stack.phases)
        if mode == 'constrain' and bounds is None:
            raise ConfigurationError("Constrained residual transcription needs per-interval bounds")
        self.bounds = None if bounds is None else [np.asarray(b, dtype=float) for b in bounds]
        self.residual_terms: List[PointwiseTerm] = []

    def interval_nodes(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        return residual_nodes(ctx.mesh.state_degree[i]), residual_nodes(ctx.mesh.input_degree[i])

    def tightening(self) -> np.ndarray:
        return np.asarray(self.options.tightening, dtype=float)

    def input_continuity(self):
        return self.options.input_continuity

    def inequality_points(self, ctx: PhaseContext, i: int) -> np.ndarray:
        if ctx.mesh.inequality_points is not None:
            return np.asarray(ctx.mesh.inequality_points[i], dtype=float)
        if self.options.inequality_points == 'state':
            return ctx.state_ref[i]
        return np.asarray(self.options.inequality_points, dtype=float)

    def quadrature(self, ctx: PhaseContext, i: int):
        order = self.options.quadrature_order or int(ctx.mesh.quadrature_order[i])
        return gauss_quadrature(order or default_quadrature_points(ctx.mesh.state_degree[i]))

    def cost_quadrature(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        rule = self.quadrature(ctx, i)
        return rule.abscissae, rule.weights

    def _residual_term(self, ctx: PhaseContext, per_interval: bool) -> PointwiseTerm:
        problem = ctx.problem
        intervals, taus, weights = [], [], []
        for i in range(ctx.n_intervals):
            rule = self.quadrature(ctx, i)
            intervals.append(np.full(rule.count, i))
            taus.append(rule.abscissae)
            weights.append(0.5 * ctx.mesh.widths[i] * rule.weights)
        intervals = np.concatenate(intervals)
        taus = np.concatenate(taus)
        weights = np.concatenate(weights)
        P = taus.size
        sizes = self._sizes(ctx)
        dims = [sizes[f] for f in RESIDUAL_FIELDS]
        dynamics, weight = problem.dynamics, self.options.weight

        def fun(args):
            xdot, x, u, theta, t = self.split(args, dims)
            wf = apply_weight(weight, np.asarray(dynamics(xdot, x, u, theta, t[0]), dtype=float), t[0])
            return np.sum(wf * wf, axis=0, keepdims=True)

        jac = None
        if problem.dynamics_jacobian is not None:
            partials = problem.dynamics_jacobian

            def jac(args):
                xdot, x, u, theta, t = self.split(args, dims)
                f = np.asarray(dynamics(xdot, x, u, theta, t[0]), dtype=float)
                blocks = [np.asarray(b, dtype=float).reshape(problem.n_f, size, -1)
                          for b, size in zip(partials(xdot, x, u, theta, t[0]), dims[:4])]
                blocks.append(np.zeros((problem.n_f, 1, args.shape[1])))
                full = np.concatenate(blocks, axis=1)
                if weight is None:
                    wf, wj = f, full
                else:
                    w = np.asarray(weight(t[0]), dtype=float)
                    wf = apply_weight(weight, f, t[0])
                    wj = w[:, None, :] * full if w.ndim == 2 else np.einsum('rsp,sap->rap', w, full)
                return 2.0 * np.einsum('rp,rap->ap', wf, wj)[None, :, :]

        argmap, offset, n_args = self.point_argmap(ctx, intervals, taus, RESIDUAL_FIELDS)
        point_stage = ctx.stage(intervals)
        if per_interval:
            reduce = sp.csr_matrix((weights, (intervals, np.arange(P))), shape=(ctx.n_intervals, P))
            row_stage = ctx.stage(np.arange(ctx.n_intervals))
            keys = [('residual', ctx.index) + ctx.mesh.signature(i) for i in range(ctx.n_intervals)]
            return PointwiseTerm(f'residual[{ctx.index}]', fun, argmap, offset, n_args, P, 1, reduce=reduce,
                                 jac=jac, point_stage=point_stage, row_stage=row_stage, row_keys=keys,
                                 lower=np.full(ctx.n_intervals, -np.inf), upper=np.full(ctx.n_intervals, np.inf))
        t0, tf = ctx.span()
        reduce = sp.csr_matrix(weights.reshape(1, -1) / (tf - t0))
        return PointwiseTerm(f'residual_cost[{ctx.index}]', fun, argmap, offset, n_args, P, 1, reduce=reduce,
                             jac=jac, point_stage=point_stage, row_stage=[-1])

    def dynamics_terms(self, ctx: PhaseContext) -> List[Term]:
        term = self._residual_term(ctx, per_interval=True)
        self.residual_terms.append(term)
        if self.mode == 'minimize':
            return []
        eps = np.broadcast_to(self.bounds[ctx.index], (ctx.n_intervals,))
        term.upper = ctx.mesh.widths * (np.maximum(eps, 0.0) + RESIDUAL_FLOOR)
        return [term]

    def phase_cost_terms(self, ctx: PhaseContext) -> List[Term]:
        if self.mode == 'minimize':
            return [self._residual_term(ctx, per_interval=False)]
        return super().phase_cost_terms(ctx)

    def stack_cost_terms(self) -> List[Term]:
        if self.mode == 'minimize':
            return []
        return super().stack_cost_terms()

    def build(self) -> StructuredNlp:
        self.residual_terms = []
        nlp = super().build()
        nlp.meta['mode'] = self.mode
        return nlp

    def residual_integrals(self, z: np.ndarray) -> List[np.ndarray]:
        """Per phase, the interval integrals of ||W f||^2 at z."""
        return [np.asarray(term.values(z), dtype=float) for term in self.residual_terms]

    def automatic_bounds(self, z: np.ndarray) -> List[np.ndarray]:
        return [auto_bounds(r, ctx.mesh.widths, self.options.slack_factor)
                for r, ctx in zip(self.residual_integrals(z), self.contexts)]
