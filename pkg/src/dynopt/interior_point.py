"""
Primal-dual interior-point method for StructuredNlp.

Inequality rows get slack variables, so the barrier problem only has
equality constraints and simple bounds. Each iteration solves the
regularized Newton system through a KktSolver, applies the fraction-to-the-
boundary rule and runs a backtracking line search on an l1 merit function
(with one second-order correction). When the line search stalls, a
Levenberg-Marquardt feasibility phase either recovers or declares the
problem locally infeasible.
"""
import time
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .kkt import SingularKktError, assemble_kkt, make_kkt_solver
from .logger import logger
from .nlp import StructuredNlp
from .solver_interface import NlpSolver, SolveReport, SolverOptions, SolveStatus, WarmStart

KAPPA_MU = 0.2
THETA_MU = 1.5
KAPPA_EPS = 10.0
TAU_MIN = 0.99
S_MAX = 100.0
KAPPA_SIGMA = 1e10
ARMIJO = 1e-4
CURVATURE = 1e-8
DELTA_W_FIRST = 1e-4
DELTA_W_MAX = 1e40
SCALE_TARGET = 100.0
ALPHA_MIN = 1e-12
LOG_HEADER = "iter    objective      inf_pr    inf_du    mu        alpha_pr  alpha_du"


class _Problem:
    """The NLP in solver coordinates: x = (free decision variables, slacks)."""

    def __init__(self, nlp: StructuredNlp, z0: np.ndarray, scaling: bool):
        self.nlp = nlp
        zl, zu = nlp.z_lower, nlp.z_upper
        width = zu - zl
        self.fixed = np.isfinite(width) & (width <= 1e-12 * np.maximum(1.0, np.abs(zl)))
        self.free = ~self.fixed
        self.template = np.clip(np.asarray(z0, dtype=float), zl, zu)
        self.template[self.fixed] = zl[self.fixed]
        cl, cu = nlp.constraint_bounds()
        self.cl, self.cu = cl, cu
        self.eq = cl == cu
        self.ineq = ~self.eq
        self.ineq_rows = np.flatnonzero(self.ineq)
        self.n_free = int(self.free.sum())
        self.n_s = int(self.ineq.sum())
        self.nx = self.n_free + self.n_s
        self.m = nlp.m

        self.obj_scale = 1.0
        self.row_scale = np.ones(self.m)
        if scaling:
            grad = nlp.gradient(self.template)[self.free]
            gmax = np.max(np.abs(grad), initial=0.0)
            if gmax > SCALE_TARGET:
                self.obj_scale = SCALE_TARGET / gmax
            if self.m:
                jac = abs(nlp.jacobian(self.template)[:, self.free])
                rmax = np.asarray(jac.max(axis=1).todense()).ravel() if self.n_free else np.zeros(self.m)
                big = rmax > SCALE_TARGET
                self.row_scale[big] = SCALE_TARGET / rmax[big]

        self.slack_map = sp.csr_matrix((-np.ones(self.n_s), (self.ineq_rows, np.arange(self.n_s))),
                                       shape=(self.m, self.n_s))
        scaled_l = self.row_scale[self.ineq] * cl[self.ineq]
        scaled_u = self.row_scale[self.ineq] * cu[self.ineq]
        self.xl = np.concatenate([zl[self.free], scaled_l])
        self.xu = np.concatenate([zu[self.free], scaled_u])
        self.has_l = np.isfinite(self.xl)
        self.has_u = np.isfinite(self.xu)
        self.var_stage = np.concatenate([nlp.layout.var_stage[self.free], nlp.row_stage[self.ineq]])
        self.row_stage = nlp.row_stage

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = self.template.copy()
        z[self.free] = x[:self.n_free]
        return z, x[self.n_free:]

    def objective(self, x) -> float:
        return self.obj_scale * self.nlp.cost(self.unpack(x)[0])

    def gradient(self, x) -> np.ndarray:
        g = self.obj_scale * self.nlp.gradient(self.unpack(x)[0])[self.free]
        return np.concatenate([g, np.zeros(self.n_s)])

    def constraints(self, x) -> np.ndarray:
        z, s = self.unpack(x)
        c = self.row_scale * self.nlp.constraint_values(z)
        c[self.eq] -= self.row_scale[self.eq] * self.cl[self.eq]
        c[self.ineq] -= s
        return c

    def jacobian(self, x) -> sp.csr_matrix:
        z, _ = self.unpack(x)
        jac = sp.diags(self.row_scale) @ self.nlp.jacobian(z)[:, self.free]
        return sp.hstack([jac, self.slack_map], format='csr')

    def hessian(self, x, y) -> sp.csr_matrix:
        z, _ = self.unpack(x)
        hess = self.nlp.hessian(z, self.row_scale * y, self.obj_scale)[self.free][:, self.free]
        return sp.block_diag((hess, sp.csr_matrix((self.n_s, self.n_s))), format='csr')

    def push_inside(self, x: np.ndarray, kappa: float) -> np.ndarray:
        x = x.copy()
        pl = kappa * np.maximum(1.0, np.abs(np.where(self.has_l, self.xl, 0.0)))
        pu = kappa * np.maximum(1.0, np.abs(np.where(self.has_u, self.xu, 0.0)))
        both = self.has_l & self.has_u
        span = np.where(both, self.xu - self.xl, np.inf)
        pl = np.minimum(pl, kappa * span)
        pu = np.minimum(pu, kappa * span)
        x[self.has_l] = np.maximum(x[self.has_l], (self.xl + pl)[self.has_l])
        x[self.has_u] = np.minimum(x[self.has_u], (self.xu - pu)[self.has_u])
        return x


def _fraction_to_boundary(values: np.ndarray, step: np.ndarray, tau: float) -> float:
    """Largest alpha in (0, 1] with values + alpha * step >= (1 - tau) * values."""
    shrinking = step < 0
    if not np.any(shrinking):
        return 1.0
    return float(min(1.0, np.min(-tau * values[shrinking] / step[shrinking])))


class InteriorPointSolver(NlpSolver):
    """Built-in primal-dual barrier solver."""

    def solve(self, nlp, init=None, options=None, warm=None):
        return _Run(nlp, options or SolverOptions(), init, warm).run()


def solve(nlp: StructuredNlp, init: Optional[np.ndarray] = None, options: Optional[SolverOptions] = None,
          warm: Optional[WarmStart] = None) -> SolveReport:
    """Solve an NLP with the built-in interior-point method."""
    return InteriorPointSolver().solve(nlp, init, options, warm)


class _Run:
    def __init__(self, nlp: StructuredNlp, opts: SolverOptions, init, warm: Optional[WarmStart]):
        self.nlp = nlp
        self.opts = opts
        self.warm = warm
        z0 = nlp.z_guess if init is None else np.asarray(init, dtype=float)
        if z0.size != nlp.n:
            raise ValueError(f"Initial point has {z0.size} entries, the layout has {nlp.n}")
        self.prob = _Problem(nlp, z0, opts.scaling)
        self.kkt = make_kkt_solver(opts.kkt, self.prob.var_stage, self.prob.row_stage)
        self.log: List[str] = [LOG_HEADER]
        self.delta_w_last = 0.0
        self.nu = 1.0
        self.bfgs: Optional[np.ndarray] = None
        self.iterations = 0
        self.forced = 0

    # -- setup -----------------------------------------------------------
    def _initial_point(self):
        p = self.prob
        c_raw = p.row_scale * self.nlp.constraint_values(p.template)
        x = np.concatenate([p.template[p.free], c_raw[p.ineq]])
        push = self.opts.warm_bound_push if self.warm is not None else self.opts.bound_push
        return p.push_inside(x, push)

    def _initial_multipliers(self, x: np.ndarray, mu: float):
        p = self.prob
        dl, du = self._gaps(x)
        zl = np.where(p.has_l, 1.0, 0.0)
        zu = np.where(p.has_u, 1.0, 0.0)
        y = np.zeros(p.m)
        if self.warm is not None:
            y = np.asarray(self.warm.multipliers, dtype=float) * p.obj_scale / p.row_scale
            ys = y[p.ineq]
            zl = np.where(p.has_l, mu / np.where(p.has_l, dl, 1.0), 0.0)
            zu = np.where(p.has_u, mu / np.where(p.has_u, du, 1.0), 0.0)
            if self.warm.z_lower is not None:
                zl[:p.n_free] = np.maximum(zl[:p.n_free], p.obj_scale * self.warm.z_lower[p.free])
            if self.warm.z_upper is not None:
                zu[:p.n_free] = np.maximum(zu[:p.n_free], p.obj_scale * self.warm.z_upper[p.free])
            zl[p.n_free:] = np.where(p.has_l[p.n_free:], np.maximum(zl[p.n_free:], -ys), 0.0)
            zu[p.n_free:] = np.where(p.has_u[p.n_free:], np.maximum(zu[p.n_free:], ys), 0.0)
        elif p.m:
            y = self._least_squares_multipliers(x, zl, zu)
        return y, zl, zu

    def _least_squares_multipliers(self, x, zl, zu) -> np.ndarray:
        p = self.prob
        jac = p.jacobian(x)
        rhs = np.concatenate([-(p.gradient(x) - zl + zu), np.zeros(p.m)])
        matrix = assemble_kkt(sp.csr_matrix((p.nx, p.nx)), jac, np.ones(p.nx))
        try:
            sol = self.kkt.solve(matrix, rhs)
        except SingularKktError:
            return np.zeros(p.m)
        y = sol[p.nx:]
        return y if np.max(np.abs(y), initial=0.0) <= 1e3 else np.zeros(p.m)

    def _gaps(self, x):
        p = self.prob
        dl = np.where(p.has_l, x - np.where(p.has_l, p.xl, 0.0), np.inf)
        du = np.where(p.has_u, np.where(p.has_u, p.xu, 0.0) - x, np.inf)
        return dl, du

    # -- merit -----------------------------------------------------------
    def _barrier(self, x, mu) -> float:
        dl, du = self._gaps(x)
        if np.any(dl <= 0) or np.any(du <= 0):
            return np.inf
        value = self.prob.objective(x)
        value -= mu * (np.sum(np.log(dl[self.prob.has_l])) + np.sum(np.log(du[self.prob.has_u])))
        return float(value)

    def _merit(self, x, mu) -> Tuple[float, np.ndarray]:
        barrier = self._barrier(x, mu)
        if not np.isfinite(barrier):
            return np.inf, np.full(self.prob.m, np.nan)
        c = self.prob.constraints(x)
        value = barrier + self.nu * np.sum(np.abs(c))
        return (float(value) if np.all(np.isfinite(c)) else np.inf), c

    # -- linear algebra --------------------------------------------------
    def _hessian(self, x, y) -> sp.csr_matrix:
        if self.opts.hessian == 'bfgs':
            if self.bfgs is None:
                self.bfgs = np.eye(self.prob.n_free)
            return sp.block_diag((sp.csr_matrix(self.bfgs), sp.csr_matrix((self.prob.n_s, self.prob.n_s))),
                                 format='csr')
        return self.prob.hessian(x, y)

    def _newton_step(self, hess, jac, sigma, r1, r2, mu):
        """Regularized step whose tangential part has positive curvature."""
        p = self.prob
        delta_w, delta_c = 0.0, 0.0
        base = hess + sp.diags(sigma)
        while True:
            matrix = assemble_kkt(hess, jac, sigma, delta_w, delta_c)
            try:
                factor = self.kkt.factorize(matrix)
                tangential = self.kkt.solve(matrix, np.concatenate([r1, np.zeros(p.m)]), factor)
                normal = self.kkt.solve(matrix, np.concatenate([np.zeros(p.nx), r2]), factor)
            except SingularKktError:
                if delta_c == 0.0 and p.m:
                    delta_c = 1e-8 * mu ** 0.25
                    continue
                delta_w = self._next_delta(delta_w)
                if delta_w > DELTA_W_MAX:
                    return None
                continue
            dt = tangential[:p.nx]
            curvature = float(dt @ (base @ dt)) + delta_w * float(dt @ dt)
            if curvature >= CURVATURE * float(dt @ dt):
                if delta_w > 0:
                    self.delta_w_last = delta_w
                return tangential + normal, matrix, factor
            delta_w = self._next_delta(delta_w)
            if delta_w > DELTA_W_MAX:
                return None

    def _next_delta(self, delta_w: float) -> float:
        if delta_w == 0.0:
            return DELTA_W_FIRST if self.delta_w_last == 0.0 else max(1e-20, self.delta_w_last / 3.0)
        return delta_w * (100.0 if self.delta_w_last == 0.0 else 8.0)

    # -- feasibility phase -----------------------------------------------
    def _projected_infeasibility_gradient(self, x, c, jac) -> np.ndarray:
        p = self.prob
        grad = jac.T @ c
        dl, du = self._gaps(x)
        at_lower = p.has_l & (dl <= 1e-6 * np.maximum(1.0, np.abs(x))) & (grad > 0)
        at_upper = p.has_u & (du <= 1e-6 * np.maximum(1.0, np.abs(x))) & (grad < 0)
        grad[at_lower | at_upper] = 0.0
        return grad

    def _restore(self, x, zl, zu, mu) -> Tuple[Optional[np.ndarray], bool]:
        """Levenberg-Marquardt steps on ||c||^2 inside the bounds.

        Returns (new point or None, locally infeasible flag).
        """
        p = self.prob
        c = p.constraints(x)
        start = np.sum(np.abs(c))
        damping = 1e-4
        for _ in range(50):
            self.iterations += 1
            if self.iterations > self.opts.max_iter:
                return None, False
            jac = p.jacobian(x)
            grad = self._projected_infeasibility_gradient(x, c, jac)
            if np.max(np.abs(grad), initial=0.0) <= 1e-9 * max(1.0, np.max(np.abs(c), initial=0.0)):
                return None, np.max(np.abs(c), initial=0.0) > self.opts.tol
            dl, du = self._gaps(x)
            sigma = np.where(p.has_l, zl / np.where(p.has_l, dl, 1.0), 0.0) + \
                np.where(p.has_u, zu / np.where(p.has_u, du, 1.0), 0.0)
            matrix = assemble_kkt(sp.csr_matrix((p.nx, p.nx)), jac, sigma + damping, 0.0, 1.0)
            try:
                step = self.kkt.solve(matrix, np.concatenate([np.zeros(p.nx), -c]))[:p.nx]
            except SingularKktError:
                damping *= 10.0
                continue
            tau = max(TAU_MIN, 1.0 - mu)
            alpha = min(_fraction_to_boundary(dl[p.has_l], step[p.has_l], tau),
                        _fraction_to_boundary(du[p.has_u], -step[p.has_u], tau))
            trial = x + alpha * step
            c_trial = p.constraints(trial)
            if np.all(np.isfinite(c_trial)) and np.sum(np.abs(c_trial)) < np.sum(np.abs(c)):
                x, c = trial, c_trial
                damping = max(damping / 3.0, 1e-12)
                if np.sum(np.abs(c)) <= 0.9 * start:
                    return x, False
            else:
                damping *= 10.0
                if damping > 1e20:
                    break
        return None, np.max(np.abs(c), initial=0.0) > self.opts.tol

    # -- main loop -------------------------------------------------------
    def run(self) -> SolveReport:
        started = time.perf_counter()
        p, opts = self.prob, self.opts
        if p.nx == 0:
            return self._report(np.zeros(0), np.zeros(p.m), np.zeros(0), np.zeros(0), started,
                                SolveStatus.OPTIMAL if np.max(np.abs(p.constraints(np.zeros(0))), initial=0.0)
                                <= opts.tol else SolveStatus.INFEASIBLE)
        mu = opts.warm_mu if self.warm is not None else opts.mu_init
        x = self._initial_point()
        y, zl, zu = self._initial_multipliers(x, mu)
        status = SolveStatus.MAX_ITER
        alpha_pr = alpha_du = 0.0
        streak, streak_ref = 0, np.inf
        while True:
            c = p.constraints(x)
            grad = p.gradient(x)
            jac = p.jacobian(x)
            dl, du = self._gaps(x)
            grad_lag = grad + jac.T @ y - zl + zu
            compl_l = np.where(p.has_l, zl * np.where(p.has_l, dl, 0.0), 0.0)
            compl_u = np.where(p.has_u, zu * np.where(p.has_u, du, 0.0), 0.0)
            mult_sum = np.sum(np.abs(y)) + np.sum(zl) + np.sum(zu)
            s_d = max(S_MAX, mult_sum / max(p.m + 2 * p.nx, 1)) / S_MAX
            s_c = max(S_MAX, (np.sum(zl) + np.sum(zu)) / max(2 * p.nx, 1)) / S_MAX
            inf_du = np.max(np.abs(grad_lag), initial=0.0) / s_d
            inf_pr = np.max(np.abs(c), initial=0.0)

            def kkt_error(target):
                comp = max(np.max(np.abs(compl_l[p.has_l] - target), initial=0.0),
                           np.max(np.abs(compl_u[p.has_u] - target), initial=0.0))
                return max(inf_du, inf_pr, comp / s_c)

            self._log_line(x, inf_pr, inf_du, mu, alpha_pr, alpha_du)
            error = kkt_error(0.0)
            if error <= opts.tol:
                status = SolveStatus.OPTIMAL
                break
            streak, streak_ref = self._acceptable_streak(error, streak, streak_ref)
            if opts.acceptable_iter and streak >= opts.acceptable_iter:
                logger.debug("KKT error %.2e stalled below acceptable_tol for %d iterates", error, streak)
                status = SolveStatus.OPTIMAL
                break
            if self.iterations >= opts.max_iter:
                status = SolveStatus.MAX_ITER
                break
            mu_floor = opts.tol / 10.0
            while mu > mu_floor and kkt_error(mu) <= KAPPA_EPS * mu:
                mu = max(mu_floor, min(KAPPA_MU * mu, mu ** THETA_MU))
            tau = max(TAU_MIN, 1.0 - mu)

            sigma_l = np.where(p.has_l, zl / np.where(p.has_l, dl, 1.0), 0.0)
            sigma_u = np.where(p.has_u, zu / np.where(p.has_u, du, 1.0), 0.0)
            sigma = sigma_l + sigma_u
            barrier_l = np.where(p.has_l, mu / np.where(p.has_l, dl, 1.0), 0.0)
            barrier_u = np.where(p.has_u, mu / np.where(p.has_u, du, 1.0), 0.0)
            grad_phi = grad - barrier_l + barrier_u
            hess = self._hessian(x, y)
            step = self._newton_step(hess, jac, sigma, -(grad_phi + jac.T @ y), -c, mu)
            self.iterations += 1
            if step is None:
                status = SolveStatus.NUMERICAL_FAILURE
                logger.debug("KKT regularization exhausted at iteration %d", self.iterations)
                break
            sol, matrix, factor = step
            dx, dy = sol[:p.nx], sol[p.nx:]
            dzl = np.where(p.has_l, barrier_l - zl - sigma_l * dx, 0.0)
            dzu = np.where(p.has_u, barrier_u - zu + sigma_u * dx, 0.0)

            alpha_max = min(_fraction_to_boundary(dl[p.has_l], dx[p.has_l], tau),
                            _fraction_to_boundary(du[p.has_u], -dx[p.has_u], tau))
            alpha_du = min(_fraction_to_boundary(zl[p.has_l], dzl[p.has_l], tau),
                           _fraction_to_boundary(zu[p.has_u], dzu[p.has_u], tau))

            c_norm = float(np.sum(np.abs(c)))
            dphi = float(grad_phi @ dx)
            curvature = float(dx @ ((hess + sp.diags(sigma)) @ dx))
            self.nu = max(self.nu, np.max(np.abs(y + dy), initial=0.0) + 1.0)
            if c_norm > 1e-12:
                self.nu = max(self.nu, (dphi + 0.5 * max(curvature, 0.0)) / (0.9 * c_norm))
            slope = min(dphi - self.nu * c_norm, -1e-16)
            merit0, _ = self._merit(x, mu)

            tiny = np.max(np.abs(alpha_max * dx) / (1.0 + np.abs(x)), initial=0.0) < 10 * np.finfo(float).eps
            new_x, alpha_pr = None, alpha_max
            if tiny:
                new_x = x + alpha_max * dx
            else:
                alpha = alpha_max
                first = True
                while alpha >= ALPHA_MIN:
                    trial = x + alpha * dx
                    merit_t, c_trial = self._merit(trial, mu)
                    if merit_t <= merit0 + ARMIJO * alpha * slope:
                        new_x, alpha_pr = trial, alpha
                        break
                    if first and np.all(np.isfinite(c_trial)):
                        first = False
                        corrected = self._second_order_correction(x, matrix, factor, grad_phi, jac, y, c,
                                                                  c_trial, alpha, dl, du, tau, mu,
                                                                  merit0, slope)
                        if corrected is not None:
                            new_x, alpha_pr = corrected, alpha
                            break
                    alpha *= 0.5
            if new_x is not None:
                self.forced = 0
            elif inf_pr <= 1e-6 and self.forced < 3:
                trial = x + alpha_max * dx
                if np.isfinite(self._merit(trial, mu)[0]):
                    new_x, alpha_pr = trial, alpha_max
                    self.forced += 1
            if new_x is None:
                restored, infeasible = self._restore(x, zl, zu, mu)
                if restored is None:
                    status = SolveStatus.INFEASIBLE if infeasible else (
                        SolveStatus.MAX_ITER if self.iterations > opts.max_iter else SolveStatus.NUMERICAL_FAILURE)
                    break
                x = restored
                dl, du = self._gaps(x)
                zl = np.where(p.has_l, np.minimum(zl, KAPPA_SIGMA * mu / np.where(p.has_l, dl, 1.0)), 0.0)
                zu = np.where(p.has_u, np.minimum(zu, KAPPA_SIGMA * mu / np.where(p.has_u, du, 1.0)), 0.0)
                y = self._least_squares_multipliers(x, zl, zu)
                alpha_pr = alpha_du = 0.0
                continue

            old_x = x
            x = new_x
            y = y + alpha_pr * dy
            zl = zl + alpha_du * dzl
            zu = zu + alpha_du * dzu
            dl, du = self._gaps(x)
            zl = np.where(p.has_l, np.clip(zl, mu / (KAPPA_SIGMA * np.where(p.has_l, dl, 1.0)),
                                           KAPPA_SIGMA * mu / np.where(p.has_l, dl, 1.0)), 0.0)
            zu = np.where(p.has_u, np.clip(zu, mu / (KAPPA_SIGMA * np.where(p.has_u, du, 1.0)),
                                           KAPPA_SIGMA * mu / np.where(p.has_u, du, 1.0)), 0.0)
            if opts.hessian == 'bfgs':
                self._bfgs_update(old_x, x, y)
            if opts.callback is not None:
                opts.callback(self.iterations, p.unpack(x)[0])
        return self._report(x, y, zl, zu, started, status)

    def _acceptable_streak(self, error: float, streak: int, reference: float) -> Tuple[int, float]:
        """Count iterates below acceptable_tol that failed to cut the error tenfold."""
        if error > self.opts.acceptable_tol:
            return 0, np.inf
        if error < 0.1 * reference:
            return 1, error
        return streak + 1, reference

    def _second_order_correction(self, x, matrix, factor, grad_phi, jac, y, c, c_trial, alpha, dl, du, tau,
                                 mu, merit0, slope) -> Optional[np.ndarray]:
        p = self.prob
        c_soc = alpha * c + c_trial
        rhs = np.concatenate([-(grad_phi + jac.T @ y), -c_soc])
        try:
            sol = self.kkt.solve(matrix, rhs, factor)
        except SingularKktError:
            return None
        dx = sol[:p.nx]
        alpha_soc = min(_fraction_to_boundary(dl[p.has_l], dx[p.has_l], tau),
                        _fraction_to_boundary(du[p.has_u], -dx[p.has_u], tau))
        trial = x + alpha_soc * dx
        merit_t, _ = self._merit(trial, mu)
        return trial if merit_t <= merit0 + ARMIJO * alpha * slope else None

    def _bfgs_update(self, old_x, new_x, y) -> None:
        p = self.prob
        s = (new_x - old_x)[:p.n_free]
        if not np.any(s):
            return
        grad_new = p.gradient(new_x) + p.jacobian(new_x).T @ y
        grad_old = p.gradient(old_x) + p.jacobian(old_x).T @ y
        r = (grad_new - grad_old)[:p.n_free]
        bs = self.bfgs @ s
        sbs = float(s @ bs)
        sr = float(s @ r)
        if sbs <= 0:
            return
        if sr < 0.2 * sbs:
            theta = 0.8 * sbs / (sbs - sr)
            r = theta * r + (1.0 - theta) * bs
            sr = float(s @ r)
        self.bfgs = self.bfgs - np.outer(bs, bs) / sbs + np.outer(r, r) / sr

    # -- output ----------------------------------------------------------
    def _log_line(self, x, inf_pr, inf_du, mu, alpha_pr, alpha_du) -> None:
        z, _ = self.prob.unpack(x) if x.size else (self.prob.template, None)
        objective = self.nlp.cost(z)
        line = (f"{self.iterations:4d}  {objective:+.7e}  {inf_pr:.2e}  {inf_du:.2e}  "
                f"{mu:.2e}  {alpha_pr:.2e}  {alpha_du:.2e}")
        self.log.append(line)
        logger.debug(line)

    def _report(self, x, y, zl, zu, started, status) -> SolveReport:
        p = self.prob
        z, _ = p.unpack(x) if x.size else (p.template.copy(), None)
        n = self.nlp.n
        multipliers = y * p.row_scale / p.obj_scale if p.m else np.zeros(0)
        z_lower, z_upper = np.zeros(n), np.zeros(n)
        z_lower[p.free] = zl[:p.n_free] / p.obj_scale
        z_upper[p.free] = zu[:p.n_free] / p.obj_scale
        if np.any(p.fixed):
            reduced = self.nlp.gradient(z)
            if p.m:
                reduced = reduced + self.nlp.jacobian(z).T @ multipliers
            z_lower[p.fixed] = np.maximum(reduced[p.fixed], 0.0)
            z_upper[p.fixed] = np.maximum(-reduced[p.fixed], 0.0)

        residuals = {'stationarity': 0.0, 'feasibility': 0.0, 'complementarity': 0.0}
        if x.size:
            c = p.constraints(x)
            dl, du = self._gaps(x)
            residuals['feasibility'] = float(np.max(np.abs(c), initial=0.0))
            grad_lag = p.gradient(x) + p.jacobian(x).T @ y - zl + zu
            mult_sum = np.sum(np.abs(y)) + np.sum(zl) + np.sum(zu)
            s_d = max(S_MAX, mult_sum / max(p.m + 2 * p.nx, 1)) / S_MAX
            s_c = max(S_MAX, (np.sum(zl) + np.sum(zu)) / max(2 * p.nx, 1)) / S_MAX
            residuals['stationarity'] = float(np.max(np.abs(grad_lag), initial=0.0) / s_d)
            compl = np.concatenate([(zl * np.where(p.has_l, dl, 0.0))[p.has_l],
                                    (zu * np.where(p.has_u, du, 0.0))[p.has_u]])
            residuals['complementarity'] = float(np.max(np.abs(compl), initial=0.0) / s_c)

        values = self.nlp.constraint_values(z)
        violation = np.max(np.concatenate([p.cl - values, values - p.cu, [0.0]]))
        elapsed = time.perf_counter() - started
        logger.debug("Interior point finished: %s after %d iterations (%.3fs)", status.value,
                     self.iterations, elapsed)
        return SolveReport(status=status, x=z, multipliers=multipliers, z_lower=z_lower, z_upper=z_upper,
                           objective=float(self.nlp.cost(z)), residuals=residuals,
                           iterations=self.iterations, wall_time=elapsed, log=self.log,
                           constraint_violation=float(violation))
