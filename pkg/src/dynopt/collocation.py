"""
Direct collocation: the dynamics residual vanishes at the collocation points
of every interval.
"""
from typing import List, Tuple

import numpy as np

from .base_transcriber import BaseTranscriber, PhaseContext
from .errors import ConfigurationError
from .mesh import Mesh
from .nlp import Term
from .poly import gauss_quadrature, interpolatory_weights
from .problem import DofDims, DopProblem, dof_check
from .schemes import CollocationOptions, default_quadrature_points, input_nodes, state_nodes

DYNAMICS_FIELDS = ('xdot', 'x', 'u', 'theta', 't')


class CollocationTranscriber(BaseTranscriber):
    """
    Builds the collocation NLP of a problem or phase stack.

    Args:
        problem: DopProblem or PhaseStack.
        mesh: Mesh (or one per phase); without a scheme in ``options`` the
            mesh must already carry collocation node sets.
        options: CollocationOptions.
        guess: Initial guess, see BaseTranscriber.
    """
    method = 'collocation'

    def __init__(self, problem, mesh, options: CollocationOptions = None, guess=None):
        super().__init__(problem, mesh, guess)
        self.options = options or CollocationOptions()
        self.dof_findings = []

    def prepare_mesh(self, problem: DopProblem, mesh: Mesh) -> Mesh:
        if self.options.scheme is not None:
            mesh = self.options.scheme.apply(mesh)
        elif mesh.collocation is None:
            raise ConfigurationError("The mesh carries no collocation nodes and no scheme was given")
        self.dof_findings.append(dof_check(mesh, DofDims(problem.n_x, problem.n_algebraic, problem.n_f)))
        return mesh

    def interval_nodes(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        colloc = ctx.mesh.collocation[i]
        return (state_nodes(colloc, ctx.mesh.state_degree[i]),
                input_nodes(colloc, ctx.mesh.input_degree[i]))

    def tightening(self) -> np.ndarray:
        return np.asarray(self.options.tightening, dtype=float)

    def input_continuity(self):
        return self.options.input_continuity

    def inequality_points(self, ctx: PhaseContext, i: int) -> np.ndarray:
        if ctx.mesh.inequality_points is not None:
            return np.asarray(ctx.mesh.inequality_points[i], dtype=float)
        selector = self.options.inequality_points
        if selector == 'collocation':
            return ctx.mesh.collocation[i].points
        if selector == 'state':
            return ctx.state_ref[i]
        return np.asarray(selector, dtype=float)

    def cost_quadrature(self, ctx: PhaseContext, i: int) -> Tuple[np.ndarray, np.ndarray]:
        order = int(ctx.mesh.quadrature_order[i])
        if self.options.cost_quadrature == 'gauss' or order > 0:
            rule = gauss_quadrature(order or default_quadrature_points(ctx.mesh.state_degree[i]))
            return rule.abscissae, rule.weights
        points = ctx.mesh.collocation[i].points
        return points, interpolatory_weights(points)

    def dynamics_terms(self, ctx: PhaseContext) -> List[Term]:
        problem = ctx.problem
        intervals, taus, local = self._point_set(ctx, lambda c, i: c.mesh.collocation[i].points)
        sizes = self._sizes(ctx)
        dims = [sizes[f] for f in DYNAMICS_FIELDS]
        dynamics = problem.dynamics

        def fun(args):
            xdot, x, u, theta, t = self.split(args, dims)
            return dynamics(xdot, x, u, theta, t[0])

        jac = None
        if problem.dynamics_jacobian is not None:
            partials = problem.dynamics_jacobian

            def jac(args):
                xdot, x, u, theta, t = self.split(args, dims)
                blocks = [np.asarray(b, dtype=float).reshape(problem.n_f, size, -1)
                          for b, size in zip(partials(xdot, x, u, theta, t[0]), dims[:4])]
                blocks.append(np.zeros((problem.n_f, 1, args.shape[1])))
                return np.concatenate(blocks, axis=1)
        return [self._pointwise(ctx, 'dynamics', fun, problem.n_f, intervals, taus, local,
                                DYNAMICS_FIELDS, jac=jac)]
