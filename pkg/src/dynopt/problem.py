"""
Data model for continuous-time dynamic optimization problems in Bolza form.

Every callable receives arrays whose trailing axis indexes evaluation points:
states and their derivatives are (n_x, P), inputs (n_u, P), static
parameters (n_theta, P) and time (P,). Callables return (n_out, P) arrays, or
(P,) for scalar costs. Writing them with row indexing (``x[0]``) and numpy
elementwise operations is enough to satisfy this contract.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, SizeError
from .logger import logger

Callback = Callable[..., np.ndarray]

MIN_DURATION = 1e-6


@dataclass(frozen=True)
class FixedHorizon:
    t0: float
    tf: float

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ConfigurationError(f"Fixed horizon needs tf > t0, got [{self.t0}, {self.tf}]")


@dataclass(frozen=True)
class VariableHorizon:
    """Free initial/final time with bounds and a starting guess."""
    t0_bounds: Tuple[float, float]
    tf_bounds: Tuple[float, float]
    guess: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        (t0_lb, t0_ub), (tf_lb, tf_ub) = self.t0_bounds, self.tf_bounds
        if t0_lb > t0_ub or tf_lb > tf_ub:
            raise ConfigurationError("Horizon bounds must satisfy lower <= upper")
        if tf_ub <= t0_lb:
            raise ConfigurationError("Variable horizon admits no positive duration")

    def initial(self) -> Tuple[float, float]:
        if self.guess is not None:
            return self.guess
        t0 = self.t0_bounds[0] if np.isfinite(self.t0_bounds[0]) else 0.0
        tf_lb, tf_ub = self.tf_bounds
        if np.isfinite(tf_lb) and np.isfinite(tf_ub):
            tf = 0.5 * (tf_lb + tf_ub)
        elif np.isfinite(tf_lb):
            tf = tf_lb + 1.0
        else:
            tf = t0 + 1.0
        return t0, max(tf, t0 + 1.0e-3)


Horizon = Union[FixedHorizon, VariableHorizon]


@dataclass(frozen=True)
class InteriorPoint:
    """Equality c(xdot, x, udot, u, theta, t) = 0 enforced at one time instant.

    With ``normalized=True`` the time is a fraction of the horizon, which is
    the only form accepted on variable-horizon problems.
    """
    time: float
    fun: Callback
    n_c: int
    normalized: bool = False
    label: str = ''


@dataclass(frozen=True)
class SemiExplicitForm:
    """xdot = rhs(x, u, theta, t) with optional algebraic 0 = algebraic(x, u, theta, t)."""
    rhs: Callback
    algebraic: Optional[Callback] = None
    n_a: int = 0


@dataclass(frozen=True)
class TimeMap:
    """Locates t0 and tf inside the parameter vector of a transformed problem."""
    t0_index: int
    tf_index: int

    def bounds(self, theta: np.ndarray) -> Tuple[float, float]:
        return float(theta[self.t0_index]), float(theta[self.tf_index])

    def to_original(self, tau, theta: np.ndarray):
        t0, tf = self.bounds(theta)
        return t0 + np.asarray(tau, dtype=float) * (tf - t0)


def _bounds(values, size: int, fill: float) -> np.ndarray:
    if values is None:
        return np.full(size, fill)
    arr = np.broadcast_to(np.asarray(values, dtype=float), (size,)).copy()
    return arr


@dataclass(frozen=True, eq=False)
class DopProblem:
    """Continuous dynamic optimization problem.

    Args:
        n_x, n_u, n_theta: State, free-variable and static-parameter counts.
        dynamics: Residual f(xdot, x, u, theta, t) -> (n_f, P).
        n_f: Number of residual rows (n_x for an ODE, more for a DAE).
        dynamics_jacobian: Optional partials of f returned as a tuple
            (df/dxdot, df/dx, df/du, df/dtheta), each (n_f, n_arg, P).
        path_inequality: g(xdot, x, udot, u, theta, t) <= 0, n_g rows.
        interior: Interior-point equalities.
        running_cost: l(x, u, theta, t) -> (P,).
        mayer_cost: V(x0, xf, theta, t0, tf) -> (P,).
        boundary_eq / boundary_ineq: psi(x0, xf, theta, t0, tf) -> (n, P);
            the inequality form is psi <= 0.
        horizon: FixedHorizon or VariableHorizon.
    """
    n_x: int
    n_u: int
    dynamics: Callback
    horizon: Horizon
    n_theta: int = 0
    n_f: Optional[int] = None
    dynamics_jacobian: Optional[Callback] = None
    path_inequality: Optional[Callback] = None
    n_g: int = 0
    interior: Tuple[InteriorPoint, ...] = ()
    running_cost: Optional[Callback] = None
    mayer_cost: Optional[Callback] = None
    boundary_eq: Optional[Callback] = None
    n_eq: int = 0
    boundary_ineq: Optional[Callback] = None
    n_ineq: int = 0
    x_lower: Optional[np.ndarray] = None
    x_upper: Optional[np.ndarray] = None
    u_lower: Optional[np.ndarray] = None
    u_upper: Optional[np.ndarray] = None
    theta_lower: Optional[np.ndarray] = None
    theta_upper: Optional[np.ndarray] = None
    theta_guess: Optional[np.ndarray] = None
    semi_explicit: Optional[SemiExplicitForm] = None
    state_names: Tuple[str, ...] = ()
    input_names: Tuple[str, ...] = ()
    theta_names: Tuple[str, ...] = ()
    time_map: Optional[TimeMap] = None
    name: str = 'problem'

    def __post_init__(self):
        if self.n_x < 0 or self.n_u < 0 or self.n_theta < 0:
            raise SizeError("Problem dimensions must be nonnegative")
        set_ = lambda key, value: object.__setattr__(self, key, value)  # noqa: E731
        if self.n_f is None:
            set_('n_f', self.n_x)
        set_('x_lower', _bounds(self.x_lower, self.n_x, -np.inf))
        set_('x_upper', _bounds(self.x_upper, self.n_x, np.inf))
        set_('u_lower', _bounds(self.u_lower, self.n_u, -np.inf))
        set_('u_upper', _bounds(self.u_upper, self.n_u, np.inf))
        set_('theta_lower', _bounds(self.theta_lower, self.n_theta, -np.inf))
        set_('theta_upper', _bounds(self.theta_upper, self.n_theta, np.inf))
        if self.theta_guess is not None:
            set_('theta_guess', _bounds(self.theta_guess, self.n_theta, 0.0))
        if self.path_inequality is not None and self.n_g <= 0:
            raise SizeError("path_inequality given without n_g")
        if self.boundary_eq is not None and self.n_eq <= 0:
            raise SizeError("boundary_eq given without n_eq")
        if self.boundary_ineq is not None and self.n_ineq <= 0:
            raise SizeError("boundary_ineq given without n_ineq")
        set_('interior', tuple(self.interior))
        if not self.state_names:
            set_('state_names', tuple(f"x{k}" for k in range(self.n_x)))
        if not self.input_names:
            set_('input_names', tuple(f"u{k}" for k in range(self.n_u)))
        if not self.theta_names:
            set_('theta_names', tuple(f"theta{k}" for k in range(self.n_theta)))

    @property
    def n_algebraic(self) -> int:
        return max(self.n_f - self.n_x, 0)

    @property
    def is_variable_horizon(self) -> bool:
        return isinstance(self.horizon, VariableHorizon)

    def span(self) -> Tuple[float, float]:
        """Fixed horizon endpoints (the reference [0, 1] once transformed)."""
        if isinstance(self.horizon, FixedHorizon):
            return self.horizon.t0, self.horizon.tf
        raise ConfigurationError("Variable-horizon problems must be time transformed first")

    def initial_theta(self) -> np.ndarray:
        if self.theta_guess is not None:
            return np.array(self.theta_guess, dtype=float)
        return _clip_guess(np.zeros(self.n_theta), self.theta_lower, self.theta_upper)

    def validate(self) -> None:
        """Evaluate every callable once at a sample point and check the shapes."""
        P = 2
        t0, tf = self.span()
        x = np.tile(_clip_guess(np.zeros(self.n_x), self.x_lower, self.x_upper)[:, None], (1, P))
        u = np.tile(_clip_guess(np.zeros(self.n_u), self.u_lower, self.u_upper)[:, None], (1, P))
        theta = np.tile(self.initial_theta()[:, None], (1, P))
        t = np.array([t0, tf])
        zx, zu = np.zeros_like(x), np.zeros_like(u)
        _expect(self.dynamics(zx, x, u, theta, t), (self.n_f, P), 'dynamics')
        if self.path_inequality is not None:
            _expect(self.path_inequality(zx, x, zu, u, theta, t), (self.n_g, P), 'path_inequality')
        for point in self.interior:
            _expect(point.fun(zx, x, zu, u, theta, t), (point.n_c, P), f'interior {point.label}')
        if self.running_cost is not None:
            _expect(self.running_cost(x, u, theta, t), (P,), 'running_cost')
        t0s, tfs = np.full(P, t0), np.full(P, tf)
        if self.mayer_cost is not None:
            _expect(self.mayer_cost(x, x, theta, t0s, tfs), (P,), 'mayer_cost')
        if self.boundary_eq is not None:
            _expect(self.boundary_eq(x, x, theta, t0s, tfs), (self.n_eq, P), 'boundary_eq')
        if self.boundary_ineq is not None:
            _expect(self.boundary_ineq(x, x, theta, t0s, tfs), (self.n_ineq, P), 'boundary_ineq')


def _expect(value, shape, label: str) -> None:
    got = np.shape(np.asarray(value))
    if got != shape:
        raise SizeError(f"{label} returned shape {got}, expected {shape}")


def _clip_guess(values: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=float).copy()
    both = np.isfinite(lower) & np.isfinite(upper)
    out[both] = np.clip(out[both], lower[both], upper[both])
    only_lower = np.isfinite(lower) & ~np.isfinite(upper)
    out[only_lower] = np.maximum(out[only_lower], lower[only_lower])
    only_upper = ~np.isfinite(lower) & np.isfinite(upper)
    out[only_upper] = np.minimum(out[only_upper], upper[only_upper])
    return out


@dataclass(frozen=True)
class StateLink:
    """x_end(from_phase)[indices] = x_start(to_phase)[indices]."""
    from_phase: int
    to_phase: int
    indices: Tuple[int, ...]


@dataclass(frozen=True)
class PhaseEnds:
    """Boundary values handed to stack-level callables (original time)."""
    x0: np.ndarray
    xf: np.ndarray
    t0: np.ndarray
    tf: np.ndarray


@dataclass(frozen=True, eq=False)
class PhaseStack:
    """Ordered chain of phases sharing one static-parameter vector.

    State continuity between consecutive phases is added automatically for
    every state both phases have in common, unless ``waive_continuity`` is set.
    Stack-level boundary callables receive ``(ends, theta)`` with one
    PhaseEnds per phase.
    ``meta`` is copied into the extras of the stack solution.
    """
    phases: Tuple[DopProblem, ...]
    links: Tuple[StateLink, ...] = ()
    waive_continuity: bool = False
    boundary_eq: Optional[Callback] = None
    n_eq: int = 0
    boundary_ineq: Optional[Callback] = None
    n_ineq: int = 0
    mayer_cost: Optional[Callback] = None
    theta_index: Tuple[np.ndarray, ...] = ()
    n_theta: Optional[int] = None
    theta_lower: Optional[np.ndarray] = None
    theta_upper: Optional[np.ndarray] = None
    theta_guess: Optional[np.ndarray] = None
    theta_names: Tuple[str, ...] = ()
    name: str = 'stack'
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        set_ = lambda key, value: object.__setattr__(self, key, value)  # noqa: E731
        phases = tuple(self.phases)
        if not phases:
            raise SizeError("A phase stack needs at least one phase")
        set_('phases', phases)
        base = phases[0]
        if self.n_theta is None:
            if any(p.n_theta != base.n_theta for p in phases):
                raise SizeError("Phases without an explicit theta_index must share n_theta")
            set_('n_theta', base.n_theta)
            set_('theta_index', tuple(np.arange(base.n_theta) for _ in phases))
            set_('theta_lower', base.theta_lower if self.theta_lower is None else self.theta_lower)
            set_('theta_upper', base.theta_upper if self.theta_upper is None else self.theta_upper)
            if self.theta_guess is None and base.theta_guess is not None:
                set_('theta_guess', base.theta_guess)
            if not self.theta_names:
                set_('theta_names', base.theta_names)
        set_('theta_lower', _bounds(self.theta_lower, self.n_theta, -np.inf))
        set_('theta_upper', _bounds(self.theta_upper, self.n_theta, np.inf))
        if not self.theta_names:
            set_('theta_names', tuple(f"theta{k}" for k in range(self.n_theta)))
        links = list(self.links)
        for link in links:
            for idx in (link.from_phase, link.to_phase):
                if not 0 <= idx < len(phases):
                    raise ConfigurationError(f"Link references missing phase {idx}")
            if max(link.indices, default=-1) >= min(phases[link.from_phase].n_x, phases[link.to_phase].n_x):
                raise ConfigurationError("Link references a state outside the phase dimensions")
        if not self.waive_continuity:
            for j in range(len(phases) - 1):
                if not any(l.from_phase == j and l.to_phase == j + 1 for l in links):
                    shared = min(phases[j].n_x, phases[j + 1].n_x)
                    links.append(StateLink(j, j + 1, tuple(range(shared))))
        set_('links', tuple(links))

    @property
    def shared_parameters(self) -> np.ndarray:
        """Stack parameter indices used by more than one phase."""
        counts = np.zeros(self.n_theta, dtype=int)
        for index in self.theta_index:
            counts[np.asarray(index, dtype=int)] += 1
        return np.flatnonzero(counts > 1)

    def initial_theta(self) -> np.ndarray:
        if self.theta_guess is not None:
            return np.array(self.theta_guess, dtype=float)
        theta = np.zeros(self.n_theta)
        for phase, index in zip(self.phases, self.theta_index):
            theta[np.asarray(index, dtype=int)] = phase.initial_theta()
        return _clip_guess(theta, self.theta_lower, self.theta_upper)

    @classmethod
    def single(cls, problem: DopProblem) -> 'PhaseStack':
        return cls(phases=(problem,), name=problem.name)


def time_transform(problem: DopProblem) -> DopProblem:
    """Map a variable-horizon problem onto the fixed horizon [0, 1].

    t0 and tf are appended to theta; the returned problem carries a TimeMap
    pointing at them. A fixed-horizon problem comes back unchanged (and
    without a time map), which is logged as a no-op.
    """
    if not isinstance(problem.horizon, VariableHorizon):
        logger.warning("time_transform on fixed-horizon problem '%s' is a no-op", problem.name)
        return problem

    horizon = problem.horizon
    n_th = problem.n_theta
    i0, i1 = n_th, n_th + 1

    def split(theta):
        t0, tf = theta[i0], theta[i1]
        return theta[:n_th], t0, tf, tf - t0

    def dynamics(xdot, x, u, theta, tau):
        th, t0, _, dur = split(theta)
        return dur * problem.dynamics(xdot / dur, x, u, th, t0 + tau * dur)

    dynamics_jacobian = None
    if problem.dynamics_jacobian is not None:
        def dynamics_jacobian(xdot, x, u, theta, tau):
            th, t0, _, dur = split(theta)
            t = t0 + tau * dur
            d_xdot, d_x, d_u, d_th = problem.dynamics_jacobian(xdot / dur, x, u, th, t)
            d_time = _time_partials(dynamics, xdot, x, u, theta, tau, (i0, i1))
            return (np.asarray(d_xdot), dur * np.asarray(d_x), dur * np.asarray(d_u),
                    np.concatenate([dur * np.asarray(d_th).reshape(problem.n_f, n_th, -1), d_time], axis=1))

    path = None
    if problem.path_inequality is not None:
        def path(xdot, x, udot, u, theta, tau):
            th, t0, _, dur = split(theta)
            return problem.path_inequality(xdot / dur, x, udot / dur, u, th, t0 + tau * dur)

    interior = []
    for point in problem.interior:
        if not point.normalized:
            raise ConfigurationError(
                f"Interior point '{point.label}' on a variable horizon must use normalized time")
        interior.append(replace(point, fun=_normalized_interior(point.fun, split)))

    running = None
    if problem.running_cost is not None:
        def running(x, u, theta, tau):
            th, t0, _, dur = split(theta)
            return dur * problem.running_cost(x, u, th, t0 + tau * dur)

    def _ends(fun):
        if fun is None:
            return None

        def wrapped(x0, xf, theta, _t0, _tf):
            th, t0, tf, _ = split(theta)
            return fun(x0, xf, th, t0, tf)
        return wrapped

    def duration_floor(x0, xf, theta, _t0, _tf):
        _, t0, tf, _ = split(theta)
        extra = [] if problem.boundary_ineq is None else list(problem.boundary_ineq(x0, xf, theta[:n_th], t0, tf))
        return np.array(extra + [t0 - tf + MIN_DURATION])

    semi = None
    if problem.semi_explicit is not None:
        form = problem.semi_explicit

        def rhs(x, u, theta, tau):
            th, t0, _, dur = split(theta)
            return dur * form.rhs(x, u, th, t0 + tau * dur)
        algebraic = None
        if form.algebraic is not None:
            def algebraic(x, u, theta, tau):
                th, t0, _, dur = split(theta)
                return form.algebraic(x, u, th, t0 + tau * dur)
        semi = SemiExplicitForm(rhs=rhs, algebraic=algebraic, n_a=form.n_a)

    guess = problem.initial_theta()
    t0_guess, tf_guess = horizon.initial()
    return replace(
        problem,
        n_theta=n_th + 2,
        dynamics=dynamics,
        dynamics_jacobian=dynamics_jacobian,
        path_inequality=path,
        interior=tuple(interior),
        running_cost=running,
        mayer_cost=_ends(problem.mayer_cost),
        boundary_eq=_ends(problem.boundary_eq),
        boundary_ineq=duration_floor,
        n_ineq=problem.n_ineq + 1,
        horizon=FixedHorizon(0.0, 1.0),
        theta_lower=np.concatenate([problem.theta_lower, [horizon.t0_bounds[0], horizon.tf_bounds[0]]]),
        theta_upper=np.concatenate([problem.theta_upper, [horizon.t0_bounds[1], horizon.tf_bounds[1]]]),
        theta_guess=np.concatenate([guess, [t0_guess, tf_guess]]),
        semi_explicit=semi,
        theta_names=tuple(problem.theta_names) + ('t0', 'tf'),
        time_map=TimeMap(i0, i1),
    )


def _normalized_interior(fun, split):
    def wrapped(xdot, x, udot, u, theta, tau):
        th, t0, _, dur = split(theta)
        return fun(xdot / dur, x, udot / dur, u, th, t0 + tau * dur)
    return wrapped


def _time_partials(fun, xdot, x, u, theta, tau, indices) -> np.ndarray:
    """Central differences of fun with respect to selected theta rows."""
    columns = []
    for index in indices:
        step = np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(theta[index]))
        up, down = np.array(theta, dtype=float), np.array(theta, dtype=float)
        up[index] = up[index] + step
        down[index] = down[index] - step
        columns.append((fun(xdot, x, u, up, tau) - fun(xdot, x, u, down, tau)) / (2.0 * step))
    return np.stack(columns, axis=1)


def transform_stack(stack: PhaseStack) -> PhaseStack:
    """Time-transform every variable-horizon phase of a stack.

    Each transformed phase gets two fresh entries (t0, tf) at the end of the
    stack parameter vector. Stack-level callables keep receiving original
    times, and consecutive phases are tied by t_f(j) = t_0(j+1).
    """
    if not any(p.is_variable_horizon for p in stack.phases):
        return stack
    n_base = stack.n_theta
    phases, indices, maps = [], [], []
    lower, upper = list(stack.theta_lower), list(stack.theta_upper)
    guess = list(stack.initial_theta())
    names = list(stack.theta_names)
    for j, (phase, index) in enumerate(zip(stack.phases, stack.theta_index)):
        index = np.asarray(index, dtype=int)
        if phase.is_variable_horizon:
            transformed = time_transform(phase)
            slot = len(lower)
            indices.append(np.concatenate([index, [slot, slot + 1]]))
            lower += list(transformed.theta_lower[-2:])
            upper += list(transformed.theta_upper[-2:])
            guess += list(transformed.theta_guess[-2:])
            names += [f"t0_phase{j}", f"tf_phase{j}"]
            maps.append(TimeMap(slot, slot + 1))
            phases.append(transformed)
        else:
            indices.append(index)
            maps.append(None)
            phases.append(phase)
    n_theta = len(lower)
    original = stack

    def ends_in_time(ends: List[PhaseEnds], theta) -> List[PhaseEnds]:
        out = []
        for end, tmap in zip(ends, maps):
            if tmap is None:
                out.append(end)
            else:
                out.append(PhaseEnds(end.x0, end.xf, theta[tmap.t0_index], theta[tmap.tf_index]))
        return out

    def time_links(ends, theta):
        rows = []
        for j in range(len(maps) - 1):
            left = theta[maps[j].tf_index] if maps[j] is not None else ends[j].tf
            right = theta[maps[j + 1].t0_index] if maps[j + 1] is not None else ends[j + 1].t0
            rows.append(left - right)
        return rows

    n_links = len(maps) - 1

    def boundary_eq(ends, theta):
        rows = []
        if original.boundary_eq is not None:
            rows += list(original.boundary_eq(ends_in_time(ends, theta), theta[:n_base]))
        rows += time_links(ends, theta)
        return np.array(rows)

    boundary_ineq = None
    if original.boundary_ineq is not None:
        def boundary_ineq(ends, theta):
            return original.boundary_ineq(ends_in_time(ends, theta), theta[:n_base])

    mayer = None
    if original.mayer_cost is not None:
        def mayer(ends, theta):
            return original.mayer_cost(ends_in_time(ends, theta), theta[:n_base])

    return PhaseStack(
        phases=tuple(phases),
        links=original.links,
        waive_continuity=True,
        boundary_eq=boundary_eq if (original.boundary_eq is not None or n_links) else None,
        n_eq=original.n_eq + n_links,
        boundary_ineq=boundary_ineq,
        n_ineq=original.n_ineq,
        mayer_cost=mayer,
        theta_index=tuple(indices),
        n_theta=n_theta,
        theta_lower=np.array(lower),
        theta_upper=np.array(upper),
        theta_guess=np.array(guess),
        theta_names=tuple(names),
        name=original.name,
        meta=original.meta,
    )


def stack_time_map(stack: PhaseStack, j: int) -> Optional[TimeMap]:
    """Time map of phase j expressed in stack parameter indices."""
    phase = stack.phases[j]
    if phase.time_map is None:
        return None
    index = np.asarray(stack.theta_index[j], dtype=int)
    return TimeMap(int(index[phase.time_map.t0_index]), int(index[phase.time_map.tf_index]))


@dataclass(frozen=True)
class DofDims:
    n_x: int
    n_a: int
    n_f: int


@dataclass(frozen=True)
class DofFinding:
    interval: int
    available: int
    required: int

    @property
    def ok(self) -> bool:
        return self.available >= self.required


def dof_check(mesh, dims: DofDims) -> List[DofFinding]:
    """Degrees-of-freedom audit per interval.

    Checks n_x(N_s + 1) + n_a(N_q + 1) >= n_x + n_f * N_f where N_f is the
    number of collocation points of the interval. Advisory only: findings
    that fail are logged as warnings and returned.
    """
    findings = []
    for i in range(mesh.n_intervals):
        n_points = mesh.collocation_count(i)
        available = dims.n_x * (int(mesh.state_degree[i]) + 1) + dims.n_a * (int(mesh.input_degree[i]) + 1)
        required = dims.n_x + dims.n_f * n_points
        finding = DofFinding(i, available, required)
        if not finding.ok:
            logger.warning("Interval %d is over-determined: %d unknowns for %d conditions",
                           i, available, required)
        findings.append(finding)
    return findings


@dataclass
class Guess:
    """Initial guess: callables of time returning (n, P) arrays, plus theta."""
    state: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inputs: Optional[Callable[[np.ndarray], np.ndarray]] = None
    theta: Optional[np.ndarray] = None
    terminal: Optional[np.ndarray] = None


def as_stack(problem: Union[DopProblem, PhaseStack]) -> PhaseStack:
    return problem if isinstance(problem, PhaseStack) else PhaseStack.single(problem)


def phase_guesses(guess, n_phases: int) -> Sequence[Optional[Guess]]:
    if guess is None:
        return [None] * n_phases
    if isinstance(guess, Guess):
        return [guess] * n_phases
    return list(guess)


__all__ = [
    'FixedHorizon', 'VariableHorizon', 'InteriorPoint', 'SemiExplicitForm', 'TimeMap',
    'DopProblem', 'StateLink', 'PhaseEnds', 'PhaseStack', 'time_transform', 'transform_stack',
    'DofDims', 'DofFinding', 'dof_check', 'Guess', 'as_stack', 'stack_time_map', 'MIN_DURATION',
]
