"""
Defines the base class shared by every transcription method.

`BaseTranscriber` turns a phase stack plus meshes into a StructuredNlp. It
handles the parts every method has in common: time transformation of
variable-horizon phases, the stage-ordered decision layout, argument maps
from decision variables to callable arguments, continuity, interior points,
path inequalities, boundary conditions, phase links and the Bolza cost.
Subclasses describe the interval parameterization and how the dynamics are
imposed.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .logger import logger
from .mesh import Mesh
from .nlp import DecisionLayout, LayoutBuilder, LinearTerm, PointwiseTerm, StructuredNlp, Term
from .poly import BarycentricBasis, barycentric_build, derivative_matrix, interpolation_matrix
from .problem import (DopProblem, Guess, PhaseEnds, PhaseStack, TimeMap, _clip_guess, as_stack,
                      stack_time_map, transform_stack)
from .trajectory import PiecewiseTrajectory, Solution, StackSolution, continuity_defect

POINT_FIELDS = ('xdot', 'x', 'udot', 'u', 'theta', 't')


@dataclass(eq=False)
class PhaseContext:
    """Everything the builders need to know about one phase."""
    index: int
    problem: DopProblem
    original: DopProblem
    mesh: Mesh
    theta_index: np.ndarray
    time_map: Optional[TimeMap]
    first_stage: int
    state_ref: List[np.ndarray] = field(default_factory=list)
    input_ref: List[np.ndarray] = field(default_factory=list)
    state_bases: List[BarycentricBasis] = field(default_factory=list)
    input_bases: List[BarycentricBasis] = field(default_factory=list)
    state_cols: List[np.ndarray] = field(default_factory=list)
    input_cols: List[np.ndarray] = field(default_factory=list)
    state_blocks: List[slice] = field(default_factory=list)
    input_blocks: List[slice] = field(default_factory=list)
    terminal: slice = slice(0, 0)
    theta_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_intervals(self) -> int:
        return self.mesh.n_intervals

    @property
    def terminal_stage(self) -> int:
        return self.first_stage + self.n_intervals

    def stage(self, interval) -> np.ndarray:
        return self.first_stage + np.asarray(interval, dtype=int)

    def span(self) -> Tuple[float, float]:
        return self.problem.span()


def _point_key(ctx: PhaseContext, name: str, interval: int, local: int) -> tuple:
    return (name, ctx.index) + ctx.mesh.signature(interval) + (local,)


class BaseTranscriber(ABC):
    """
    Abstract base class for transcription methods.

    Args:
        problem: DopProblem or PhaseStack.
        mesh: One Mesh for every phase or a sequence with one per phase. A
            mesh is rescaled onto its phase's horizon ([0, 1] for variable
            horizons).
        guess: None, a Guess, a Solution/StackSolution or one Guess per phase.
    """
    method = 'abstract'

    def __init__(self, problem: Union[DopProblem, PhaseStack], mesh: Union[Mesh, Sequence[Mesh]],
                 guess=None):
        self.original_stack = as_stack(problem)
        self.single = isinstance(problem, DopProblem)
        self.stack = transform_stack(self.original_stack)
        n_phases = len(self.stack.phases)
        meshes = [mesh] * n_phases if isinstance(mesh, Mesh) else list(mesh)
        if len(meshes) != n_phases:
            raise ConfigurationError(f"Expected {n_phases} meshes, got {len(meshes)}")
        self.meshes = meshes
        self.guess = guess
        self.contexts: List[PhaseContext] = []
        self.layout: Optional[DecisionLayout] = None

    # -- hooks -----------------------------------------------------------
    def prepare_mesh(self, problem: DopProblem, mesh: Mesh) -> Mesh:
        """Fill in per-interval settings before layout allocation."""
        return mesh

    @abstractmethod
    def interval_nodes(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Reference nodes (state, input) of interval i."""
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def dynamics_terms(self, ctx: PhaseContext) -> List[Term]:
        """Rows imposing the dynamics of one phase."""
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def inequality_points(self, ctx: PhaseContext, i: int) -> np.ndarray:
        """Reference points where path inequalities hold on interval i."""
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def cost_quadrature(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Reference points and weights (on [-1, 1]) of the running cost."""
        raise NotImplementedError  # pragma: no cover

    def tightening(self) -> np.ndarray:
        return np.zeros(1)

    def input_continuity(self) -> Optional[bool]:
        return None

    # -- layout ----------------------------------------------------------
    def _phase_guess(self, j: int) -> Guess:
        guess = self.guess
        if guess is None:
            return Guess()
        if isinstance(guess, Guess):
            return guess
        if isinstance(guess, (Solution, StackSolution)):
            from .transcribe import guess_from_solution
            return guess_from_solution(guess)[j]
        return list(guess)[j]

    def _theta_guess(self) -> np.ndarray:
        theta = self.stack.initial_theta()
        for j in range(len(self.stack.phases)):
            supplied = self._phase_guess(j).theta
            if supplied is not None:
                supplied = np.asarray(supplied, dtype=float)
                theta[:min(supplied.size, theta.size)] = supplied[:theta.size]
                break
        return _clip_guess(theta, self.stack.theta_lower, self.stack.theta_upper)

    def _original_times(self, ctx: PhaseContext, t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if ctx.time_map is None:
            return t
        return ctx.time_map.to_original(t, theta)

    def _values(self, fun, times: np.ndarray, size: int, fallback: np.ndarray) -> np.ndarray:
        if size == 0:
            return np.zeros((0, times.size))
        if fun is None:
            return np.tile(fallback[:, None], (1, times.size))
        return np.asarray(fun(times), dtype=float).reshape(size, times.size)

    def _allocate(self, ctx: PhaseContext, builder: LayoutBuilder, theta_guess: np.ndarray) -> None:
        problem, mesh = ctx.problem, ctx.mesh
        guess = self._phase_guess(ctx.index)
        x_fallback = _clip_guess(np.zeros(problem.n_x), problem.x_lower, problem.x_upper)
        u_fallback = _clip_guess(np.zeros(problem.n_u), problem.u_lower, problem.u_upper)
        for i in range(mesh.n_intervals):
            s_ref, q_ref = self.interval_nodes(ctx, i)
            ctx.state_ref.append(s_ref)
            ctx.input_ref.append(q_ref)
            ctx.state_bases.append(barycentric_build(s_ref))
            ctx.input_bases.append(barycentric_build(q_ref))
            t_state = self._original_times(ctx, mesh.from_reference(i, s_ref), theta_guess)
            t_input = self._original_times(ctx, mesh.from_reference(i, q_ref), theta_guess)
            xs = self._values(guess.state, t_state, problem.n_x, x_fallback)
            us = self._values(guess.inputs, t_input, problem.n_u, u_fallback)
            stage = ctx.first_stage + i
            sig = mesh.signature(i)
            block = builder.add(problem.n_x * s_ref.size, stage, ('x', ctx.index) + sig,
                                np.tile(problem.x_lower, s_ref.size), np.tile(problem.x_upper, s_ref.size),
                                xs.T.reshape(-1))
            ctx.state_blocks.append(block)
            ctx.state_cols.append(block.start + problem.n_x * np.arange(s_ref.size))
            ublock = builder.add(problem.n_u * q_ref.size, stage, ('u', ctx.index) + sig,
                                 np.tile(problem.u_lower, q_ref.size), np.tile(problem.u_upper, q_ref.size),
                                 us.T.reshape(-1))
            ctx.input_blocks.append(ublock)
            ctx.input_cols.append(ublock.start + problem.n_u * np.arange(q_ref.size))
        t_end = self._original_times(ctx, np.array([mesh.tf]), theta_guess)
        if guess.terminal is not None:
            x_end = np.asarray(guess.terminal, dtype=float)
        else:
            x_end = self._values(guess.state, t_end, problem.n_x, x_fallback)[:, 0]
        ctx.terminal = builder.add(problem.n_x, ctx.terminal_stage, ('xN', ctx.index, float(mesh.tf)),
                                   problem.x_lower, problem.x_upper, x_end)

    def _make_contexts(self) -> None:
        stage = 0
        for j, (phase, original, mesh) in enumerate(zip(self.stack.phases, self.original_stack.phases,
                                                        self.meshes)):
            t0, tf = phase.span()
            if not (np.isclose(mesh.t0, t0) and np.isclose(mesh.tf, tf)):
                mesh = mesh.rescaled(t0, tf)
            mesh = self.prepare_mesh(phase, mesh)
            ctx = PhaseContext(index=j, problem=phase, original=original, mesh=mesh,
                               theta_index=np.asarray(self.stack.theta_index[j], dtype=int),
                               time_map=stack_time_map(self.stack, j), first_stage=stage)
            self.contexts.append(ctx)
            stage = ctx.terminal_stage + 1

    def build(self) -> StructuredNlp:
        """Allocate the layout and assemble every term."""
        self.contexts = []
        self._make_contexts()
        builder = LayoutBuilder()
        theta_guess = self._theta_guess()
        for ctx in self.contexts:
            self._allocate(ctx, builder, theta_guess)
        stack = self.stack
        pi = builder.add(stack.n_theta, -1, ('pi',), stack.theta_lower, stack.theta_upper, theta_guess)
        for ctx in self.contexts:
            ctx.theta_cols = pi.start + ctx.theta_index
        var_stage, lower, upper, z_guess = builder.arrays()
        self.layout = DecisionLayout(size=builder.size, var_stage=var_stage, var_keys=builder.keys,
                                     param_slice=pi, blocks=[self._block_info(ctx) for ctx in self.contexts])
        n = builder.size

        constraints: List[Term] = []
        costs: List[Term] = []
        for ctx in self.contexts:
            constraints += self.dynamics_terms(ctx)
            constraints += self.continuity_terms(ctx)
            constraints += self._input_continuity(ctx)
            constraints += self._path_terms(ctx)
            constraints += self._interior_terms(ctx)
            constraints += self._phase_boundary_terms(ctx)
            costs += self.phase_cost_terms(ctx)
        constraints += self._link_terms()
        constraints += self._stack_boundary_terms()
        costs += self.stack_cost_terms()
        constraints = [t for t in constraints if t.n_rows > 0]
        nlp = StructuredNlp(layout=self.layout, cost_terms=costs, constraints=constraints,
                            z_lower=lower, z_upper=upper, z_guess=z_guess,
                            meta={'transcriber': self, 'method': self.method}, name=self.stack.name)
        logger.info("Transcribed '%s' with %s: %d variables, %d constraints, %d stages",
                    self.stack.name, self.method, n, nlp.m, self.layout.n_stages)
        return nlp

    def _block_info(self, ctx: PhaseContext) -> Dict[str, object]:
        return {'state': list(ctx.state_blocks), 'input': list(ctx.input_blocks), 'terminal': ctx.terminal,
                'first_stage': ctx.first_stage}

    # -- argument maps ---------------------------------------------------
    def _sizes(self, ctx: PhaseContext) -> Dict[str, int]:
        p = ctx.problem
        return {'xdot': p.n_x, 'x': p.n_x, 'udot': p.n_u, 'u': p.n_u, 'theta': p.n_theta, 't': 1}

    def point_argmap(self, ctx: PhaseContext, intervals: np.ndarray, taus: np.ndarray,
                     fields: Sequence[str]) -> Tuple[sp.csr_matrix, np.ndarray, int]:
        """Linear map from z to callable arguments at (interval, tau) points."""
        intervals = np.asarray(intervals, dtype=int)
        taus = np.asarray(taus, dtype=float)
        P = taus.size
        sizes = self._sizes(ctx)
        n_args = sum(sizes[f] for f in fields)
        rows, cols, vals = [], [], []
        offset = np.zeros(n_args * P)
        a0 = 0
        for name in fields:
            dim = sizes[name]
            if name in ('x', 'xdot', 'u', 'udot') and dim:
                state = name in ('x', 'xdot')
                for i in np.unique(intervals):
                    pts = np.flatnonzero(intervals == i)
                    basis = ctx.state_bases[i] if state else ctx.input_bases[i]
                    starts = ctx.state_cols[i] if state else ctx.input_cols[i]
                    if name in ('x', 'u'):
                        mat = interpolation_matrix(basis, taus[pts])
                    else:
                        mat = derivative_matrix(basis, taus[pts]) * (2.0 / ctx.mesh.widths[i])
                    comp, pp, kk = np.meshgrid(np.arange(dim), np.arange(pts.size), np.arange(basis.count),
                                               indexing='ij')
                    rows.append(((a0 + comp) * P + pts[pp]).ravel())
                    cols.append((starts[kk] + comp).ravel())
                    vals.append(mat[pp, kk].ravel())
            elif name == 'theta' and dim:
                r = np.arange(dim)[:, None] * P + np.arange(P)[None, :] + a0 * P
                rows.append(r.ravel())
                cols.append(np.repeat(ctx.theta_cols, P))
                vals.append(np.ones(dim * P))
            elif name == 't':
                times = np.array([ctx.mesh.from_reference(i, tau) for i, tau in zip(intervals, taus)])
                offset[a0 * P:(a0 + 1) * P] = times
            a0 += dim
        argmap = self._csr(rows, cols, vals, n_args * P)
        return argmap, offset, n_args

    def _csr(self, rows, cols, vals, n_rows) -> sp.csr_matrix:
        n = self.layout.size
        if not rows:
            return sp.csr_matrix((n_rows, n))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n_rows, n))

    def state_at(self, ctx: PhaseContext, i: int, tau: float) -> Tuple[np.ndarray, np.ndarray]:
        """Column starts and weights giving x_c = sum_k w_k z[start_k + c]."""
        weights = interpolation_matrix(ctx.state_bases[i], [tau])[0]
        keep = weights != 0.0
        return ctx.state_cols[i][keep], weights[keep]

    def start_state(self, ctx: PhaseContext) -> Tuple[np.ndarray, np.ndarray]:
        return self.state_at(ctx, 0, -1.0)

    def end_state(self, ctx: PhaseContext) -> Tuple[np.ndarray, np.ndarray]:
        return np.array([ctx.terminal.start]), np.array([1.0])

    @staticmethod
    def split(values: np.ndarray, sizes: Sequence[int]) -> List[np.ndarray]:
        out, start = [], 0
        for size in sizes:
            out.append(values[start:start + size])
            start += size
        return out

    # -- shared terms ----------------------------------------------------
    def continuity_terms(self, ctx: PhaseContext) -> List[Term]:
        """chi_{i-1}(t_i) - chi_i(t_i) = 0 and chi_{N-1}(t_N) - s_N = 0."""
        n_x = ctx.problem.n_x
        rows, cols, vals, stages, keys = [], [], [], [], []
        r = 0
        for i in range(1, ctx.n_intervals + 1):
            left_cols, left_w = self.state_at(ctx, i - 1, 1.0)
            if i < ctx.n_intervals:
                right_cols, right_w = self.state_at(ctx, i, -1.0)
            else:
                right_cols, right_w = self.end_state(ctx)
            for c in range(n_x):
                rows += [r] * (left_cols.size + right_cols.size)
                cols += list(left_cols + c) + list(right_cols + c)
                vals += list(left_w) + list(-right_w)
                stages.append(ctx.first_stage + i - 1)
                keys.append(('cont', ctx.index, float(ctx.mesh.nodes[i]), c))
                r += 1
        if r == 0:
            return []
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.layout.size))
        return [LinearTerm(f'continuity[{ctx.index}]', matrix, row_stage=stages, row_keys=keys)]

    def _input_continuity(self, ctx: PhaseContext) -> List[Term]:
        n_u = ctx.problem.n_u
        forced = self.input_continuity()
        if n_u == 0 or forced is False:
            return []
        rows, cols, vals, stages, keys = [], [], [], [], []
        r = 0
        for i in range(1, ctx.n_intervals):
            left, right = ctx.input_ref[i - 1], ctx.input_ref[i]
            if forced is None and not (np.isclose(left[-1], 1.0) and np.isclose(right[0], -1.0)):
                continue
            lw = interpolation_matrix(ctx.input_bases[i - 1], [1.0])[0]
            rw = interpolation_matrix(ctx.input_bases[i], [-1.0])[0]
            for c in range(n_u):
                rows += [r] * (lw.size + rw.size)
                cols += list(ctx.input_cols[i - 1] + c) + list(ctx.input_cols[i] + c)
                vals += list(lw) + list(-rw)
                stages.append(ctx.first_stage + i - 1)
                keys.append(('ucont', ctx.index, float(ctx.mesh.nodes[i]), c))
                r += 1
        if r == 0:
            return []
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.layout.size))
        return [LinearTerm(f'input_continuity[{ctx.index}]', matrix, row_stage=stages, row_keys=keys)]

    def _point_set(self, ctx: PhaseContext, points_of) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        intervals, taus, local = [], [], []
        for i in range(ctx.n_intervals):
            pts = np.asarray(points_of(ctx, i), dtype=float)
            intervals.append(np.full(pts.size, i))
            taus.append(pts)
            local.append(np.arange(pts.size))
        return np.concatenate(intervals), np.concatenate(taus), np.concatenate(local)

    def _pointwise(self, ctx: PhaseContext, name: str, fun, n_out: int, intervals, taus, local, fields,
                   lower=None, upper=None, jac=None) -> PointwiseTerm:
        argmap, offset, n_args = self.point_argmap(ctx, intervals, taus, fields)
        P = taus.size
        point_stage = ctx.stage(intervals)
        keys = [_point_key(ctx, name, int(intervals[p]), int(local[p])) + (j,)
                for j in range(n_out) for p in range(P)]
        return PointwiseTerm(f'{name}[{ctx.index}]', fun, argmap, offset, n_args, P, n_out, jac=jac,
                             point_stage=point_stage, row_stage=np.tile(point_stage, n_out),
                             lower=lower, upper=upper, row_keys=keys)

    def _path_terms(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        if problem.path_inequality is None:
            return []
        intervals, taus, local = self._point_set(ctx, self.inequality_points)
        sizes = self._sizes(ctx)
        fields = POINT_FIELDS
        dims = [sizes[f] for f in fields]
        g = problem.path_inequality

        def fun(args):
            xdot, x, udot, u, theta, t = self.split(args, dims)
            return g(xdot, x, udot, u, theta, t[0])
        eps = np.broadcast_to(self.tightening(), (problem.n_g,))
        widths = ctx.mesh.widths[intervals]
        upper = (eps[:, None] * widths[None, :]).reshape(-1)
        return [self._pointwise(ctx, 'path', fun, problem.n_g, intervals, taus, local, fields,
                                lower=np.full(upper.size, -np.inf), upper=upper)]

    def _interior_terms(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        terms = []
        sizes = self._sizes(ctx)
        dims = [sizes[f] for f in POINT_FIELDS]
        t0, tf = ctx.span()
        for k, point in enumerate(problem.interior):
            if ctx.time_map is not None or not point.normalized:
                time = point.time
            else:
                time = t0 + point.time * (tf - t0)
            if not t0 - 1e-12 <= time <= tf + 1e-12:
                raise ConfigurationError(f"Interior point '{point.label}' at t={time} is outside the horizon")
            i = int(ctx.mesh.interval_of(time))
            tau = float(ctx.mesh.to_reference(i, time))

            def fun(args, point=point):
                xdot, x, udot, u, theta, t = self.split(args, dims)
                return point.fun(xdot, x, udot, u, theta, t[0])
            label = point.label or f'interior{k}'
            terms.append(self._pointwise(ctx, label, fun, point.n_c, np.array([i]), np.array([tau]),
                                         np.array([k]), POINT_FIELDS))
        return terms

    def _ends_argmap(self, ctxs: Sequence[PhaseContext], theta_cols: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray,
                                                                                        List[int]]:
        """Arguments [x0, xf, t0, tf] per phase followed by theta (one point)."""
        rows, cols, vals = [], [], []
        dims = []
        offsets = []
        a0 = 0
        for ctx in ctxs:
            n_x = ctx.problem.n_x
            for which in (self.start_state(ctx), self.end_state(ctx)):
                starts, weights = which
                for c in range(n_x):
                    rows += [a0 + c] * starts.size
                    cols += list(starts + c)
                    vals += list(weights)
                a0 += n_x
                dims.append(n_x)
                offsets += [0.0] * n_x
            t0, tf = ctx.span()
            offsets += [t0, tf]
            dims += [1, 1]
            a0 += 2
        for col in theta_cols:
            rows.append(a0)
            cols.append(int(col))
            vals.append(1.0)
            a0 += 1
            offsets.append(0.0)
        dims.append(len(theta_cols))
        argmap = sp.csr_matrix((vals, (rows, cols)), shape=(a0, self.layout.size))
        return argmap, np.array(offsets), dims

    def _ends_term(self, name: str, ctxs: Sequence[PhaseContext], theta_cols, fun, n_out: int, stage: int,
                   lower=None, upper=None) -> PointwiseTerm:
        argmap, offset, dims = self._ends_argmap(ctxs, theta_cols)
        keys = [(name, j) for j in range(n_out)]
        return PointwiseTerm(name, fun, argmap, offset, argmap.shape[0], 1, n_out,
                             point_stage=np.array([stage]), row_stage=np.full(n_out, stage),
                             lower=lower, upper=upper, row_keys=keys)

    def _phase_boundary_terms(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        terms = []
        n_x = problem.n_x

        def unpack(args):
            x0, xf, t0, tf, theta = self.split(args, [n_x, n_x, 1, 1, problem.n_theta])
            return x0, xf, theta, t0[0], tf[0]
        if problem.boundary_eq is not None:
            terms.append(self._ends_term(f'boundary_eq[{ctx.index}]', [ctx], ctx.theta_cols,
                                         lambda a: problem.boundary_eq(*unpack(a)), problem.n_eq, -1))
        if problem.boundary_ineq is not None:
            terms.append(self._ends_term(f'boundary_ineq[{ctx.index}]', [ctx], ctx.theta_cols,
                                         lambda a: problem.boundary_ineq(*unpack(a)), problem.n_ineq, -1,
                                         lower=np.full(problem.n_ineq, -np.inf),
                                         upper=np.zeros(problem.n_ineq)))
        return terms

    def _stack_unpack(self, args) -> Tuple[List[PhaseEnds], np.ndarray]:
        ends, start = [], 0
        for ctx in self.contexts:
            n_x = ctx.problem.n_x
            x0 = args[start:start + n_x]
            xf = args[start + n_x:start + 2 * n_x]
            t0 = args[start + 2 * n_x]
            tf = args[start + 2 * n_x + 1]
            ends.append(PhaseEnds(x0, xf, t0, tf))
            start += 2 * n_x + 2
        return ends, args[start:]

    def _stack_theta_cols(self) -> np.ndarray:
        return self.layout.param_slice.start + np.arange(self.stack.n_theta)

    def _stack_boundary_terms(self) -> List[Term]:
        stack = self.stack
        terms = []
        cols = self._stack_theta_cols()
        if stack.boundary_eq is not None and stack.n_eq:
            terms.append(self._ends_term('stack_boundary_eq', self.contexts, cols,
                                         lambda a: np.asarray(stack.boundary_eq(*self._stack_unpack(a))),
                                         stack.n_eq, -1))
        if stack.boundary_ineq is not None and stack.n_ineq:
            terms.append(self._ends_term('stack_boundary_ineq', self.contexts, cols,
                                         lambda a: np.asarray(stack.boundary_ineq(*self._stack_unpack(a))),
                                         stack.n_ineq, -1, lower=np.full(stack.n_ineq, -np.inf),
                                         upper=np.zeros(stack.n_ineq)))
        return terms

    def _link_terms(self) -> List[Term]:
        rows, cols, vals, stages, keys = [], [], [], [], []
        r = 0
        for link in self.stack.links:
            src, dst = self.contexts[link.from_phase], self.contexts[link.to_phase]
            end_cols, end_w = self.end_state(src)
            start_cols, start_w = self.start_state(dst)
            adjacent = link.to_phase == link.from_phase + 1
            for c in link.indices:
                rows += [r] * (end_cols.size + start_cols.size)
                cols += list(end_cols + c) + list(start_cols + c)
                vals += list(end_w) + list(-start_w)
                stages.append(src.terminal_stage if adjacent else -1)
                keys.append(('link', link.from_phase, link.to_phase, c))
                r += 1
        if r == 0:
            return []
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(r, self.layout.size))
        return [LinearTerm('links', matrix, row_stage=stages, row_keys=keys)]

    # -- costs -----------------------------------------------------------
    def running_cost_term(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        if problem.running_cost is None:
            return []
        intervals, taus, weights = [], [], []
        for i in range(ctx.n_intervals):
            pts, w = self.cost_quadrature(ctx, i)
            intervals.append(np.full(pts.size, i))
            taus.append(pts)
            weights.append(0.5 * ctx.mesh.widths[i] * np.asarray(w))
        intervals = np.concatenate(intervals)
        taus = np.concatenate(taus)
        weights = np.concatenate(weights)
        fields = ('x', 'u', 'theta', 't')
        sizes = self._sizes(ctx)
        dims = [sizes[f] for f in fields]
        argmap, offset, n_args = self.point_argmap(ctx, intervals, taus, fields)
        running = problem.running_cost

        def fun(args):
            x, u, theta, t = self.split(args, dims)
            return np.asarray(running(x, u, theta, t[0]), dtype=float).reshape(1, -1)
        reduce = sp.csr_matrix(weights.reshape(1, -1))
        return [PointwiseTerm(f'running_cost[{ctx.index}]', fun, argmap, offset, n_args, taus.size, 1,
                              reduce=reduce, point_stage=ctx.stage(intervals), row_stage=[-1])]

    def phase_cost_terms(self, ctx: PhaseContext) -> List[Term]:
        terms = self.running_cost_term(ctx)
        problem = ctx.problem
        if problem.mayer_cost is not None:
            n_x = problem.n_x

            def fun(args):
                x0, xf, t0, tf, theta = self.split(args, [n_x, n_x, 1, 1, problem.n_theta])
                return np.asarray(problem.mayer_cost(x0, xf, theta, t0[0], tf[0]), dtype=float).reshape(1, -1)
            terms.append(self._ends_term(f'mayer[{ctx.index}]', [ctx], ctx.theta_cols, fun, 1, -1))
        return terms

    def stack_cost_terms(self) -> List[Term]:
        stack = self.stack
        if stack.mayer_cost is None:
            return []

        def fun(args):
            return np.asarray(stack.mayer_cost(*self._stack_unpack(args)), dtype=float).reshape(1, -1)
        return [self._ends_term('stack_mayer', self.contexts, self._stack_theta_cols(), fun, 1, -1)]

    # -- extraction ------------------------------------------------------
    def phase_trajectories(self, ctx: PhaseContext, z: np.ndarray) -> Tuple[PiecewiseTrajectory,
                                                                           PiecewiseTrajectory]:
        """State and input trajectories of one phase in transcription time."""
        n_x, n_u = ctx.problem.n_x, ctx.problem.n_u
        states = tuple(z[block].reshape(-1, n_x).T if n_x else np.zeros((0, basis.count))
                       for block, basis in zip(ctx.state_blocks, ctx.state_bases))
        inputs = tuple(z[block].reshape(-1, n_u).T if n_u else np.zeros((0, basis.count))
                       for block, basis in zip(ctx.input_blocks, ctx.input_bases))
        state = PiecewiseTrajectory(ctx.mesh.nodes, tuple(ctx.state_bases), states, terminal=z[ctx.terminal])
        control = PiecewiseTrajectory(ctx.mesh.nodes, tuple(ctx.input_bases), inputs)
        return state, control

    def extract(self, report, z: Optional[np.ndarray] = None, with_errors: bool = True
                ) -> Union[Solution, StackSolution]:
        """Map an NLP point back to trajectories in original time."""
        z = report.x if z is None else z
        theta_stack = z[self.layout.param_slice]
        status = report.status.value if hasattr(report.status, 'value') else str(report.status)
        phases = []
        for ctx in self.contexts:
            state, control = self.phase_trajectories(ctx, z)
            t0, tf = ctx.span()
            if ctx.time_map is not None:
                t0, tf = ctx.time_map.bounds(theta_stack)
                state = state.rescaled(t0, tf)
                control = control.rescaled(t0, tf)
            theta = theta_stack[ctx.theta_index][:ctx.original.n_theta]
            solution = Solution(state=state, inputs=control, theta=theta, t0=float(t0), tf=float(tf),
                                cost=float(report.objective), status=status, iterations=report.iterations,
                                continuity=continuity_defect(state), multipliers=report.multipliers,
                                report=report, phase=ctx.index,
                                extras={'method': self.method, 'intervals': ctx.n_intervals,
                                        'decisions': self.layout.size, 'theta_stack': theta_stack.copy(),
                                        'mesh': self.meshes[ctx.index]})
            if with_errors:
                from .refine import local_errors, violation_errors
                solution.errors = local_errors(solution, ctx.original)
                solution.violations = violation_errors(solution, ctx.original)
            phases.append(solution)
        if self.single:
            return phases[0]
        return StackSolution(phases=phases, theta=theta_stack, cost=float(report.objective), status=status,
                             iterations=report.iterations, report=report, extras=dict(self.original_stack.meta))
