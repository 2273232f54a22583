"""
Split-ventilator patient model.

Several patients share one ventilator. Patient p is an RC circuit: the lung
pressure v_p charges a compliance C_p through a linear and a quadratic airway
resistance, in series with an adjustable resistance set to a fraction a_p of
its maximum. A breath is an inhale phase at pressure V_I followed by an
exhale phase at V_E; check valves keep the flow nonnegative while inhaling
and nonpositive while exhaling.

Units: pressures in cmH2O, volumes in L, flows in L/s, times in s. Energies
are reported in cmH2O*L; energy(solution, unit="J") converts with
1 cmH2O*L = 0.0980665 J.
"""
from dataclasses import astuple, dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DivergenceError, SimulationError, SingularityError, SolverFailure
from .logger import logger
from .mesh import Mesh
from .oracle import OracleResult, integrate_oracle
from .poly import gauss_quadrature
from .problem import (DopProblem, FixedHorizon, Guess, InteriorPoint, PhaseStack, SemiExplicitForm, StateLink,
                      VariableHorizon)
from .schemes import CollocationOptions, Scheme
from .solver_interface import SolverOptions
from .trajectory import StackSolution
from .transcribe import solve

INHALE = 'inhale'
EXHALE = 'exhale'
PHASES = (INHALE, EXHALE)
MODELS = ('linear', 'quadratic')
FORMS = ('dae', 'ode')
PRESSURE_MODES = ('constant', 'time-varying')
PARAM_NAMES = {
    'linear': ('C', 'R_I', 'R_E'),
    'quadratic': ('C', 'R_I', 'R_E', 'RQ_I', 'RQ_E'),
}
MIN_COMPLIANCE = 1e-3
SINGULAR_TOL = 1e-12
DEFAULT_INTERVALS = 10
DEFAULT_SCHEME = 'HermiteSimpson'
ENERGY_POINTS = 10
JOULES_PER_CMH2O_LITRE = 0.0980665
ENERGY_UNITS = {'cmH2O*L': 1.0, 'J': JOULES_PER_CMH2O_LITRE}
PEEP_PREFERENCE = 1e-3

Pressure = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class PatientParams:
    """Compliance (L/cmH2O) and airway resistances of one patient.

    Linear resistances are in cmH2O/(L/s), quadratic ones in cmH2O/(L/s)^2.
    """
    compliance: float
    r_inhale: float
    r_exhale: float
    rq_inhale: float = 0.0
    rq_exhale: float = 0.0

    def __post_init__(self):
        values = astuple(self)
        if not np.all(np.isfinite(values)):
            raise ConfigurationError(f"Patient parameters must be finite, got {values}")
        if min(values) < 0.0:
            raise ConfigurationError(f"Patient parameters must be nonnegative, got {values}")
        if self.compliance <= 0.0:
            raise ConfigurationError("Patient compliance must be positive")

    @property
    def is_linear(self) -> bool:
        return self.rq_inhale == 0.0 and self.rq_exhale == 0.0

    def as_array(self, model: str = 'quadratic') -> np.ndarray:
        return np.array(astuple(self)[:len(PARAM_NAMES[model])], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'PatientParams':
        return cls(*(float(v) for v in values))


REFERENCE_PATIENTS = (
    PatientParams(0.54, 12.06, 12.06, 2.0, 2.0),
    PatientParams(0.49, 12.86, 12.86, 2.0, 2.0),
)
GUESS_PATIENT = PatientParams(0.5, 10.0, 10.0, 1.0, 1.0)


class PatientArrays(NamedTuple):
    """Patient parameters as (n_p, P) or (n_p, 1) arrays."""
    compliance: np.ndarray
    r_inhale: np.ndarray
    r_exhale: np.ndarray
    rq_inhale: np.ndarray
    rq_exhale: np.ndarray


def patient_arrays(patients: Sequence[PatientParams]) -> PatientArrays:
    table = np.array([astuple(p) for p in patients], dtype=float).reshape(-1, 5)
    return PatientArrays(*(table[:, k:k + 1] for k in range(5)))


@dataclass(frozen=True, eq=False)
class VentilatorSettings:
    """Manipulated variables of one breath.

    Args:
        pip, peep: Inhale and exhale pressures, constants or callables of time.
        valve_inhale, valve_exhale: Adjustable resistance fractions, one per patient.
        t_inhale, t_exhale: Phase durations.
        r_delta, r_delta_q: Linear and quadratic coefficients of a fully set
            adjustable resistance, 10 cmH2O/(L/s) and 2 cmH2O/(L/s)^2 by
            default.
        t0: Start of the breath.
    """
    pip: Pressure = 25.0
    peep: Pressure = 5.0
    valve_inhale: Tuple[float, ...] = (0.0, 0.0)
    valve_exhale: Tuple[float, ...] = (0.0, 0.0)
    t_inhale: float = 1.5
    t_exhale: float = 2.5
    r_delta: float = 10.0
    r_delta_q: float = 2.0
    t0: float = 0.0

    def __post_init__(self):
        inhale = tuple(float(a) for a in np.atleast_1d(self.valve_inhale))
        exhale = tuple(float(a) for a in np.atleast_1d(self.valve_exhale))
        if not inhale or len(inhale) != len(exhale):
            raise ConfigurationError("One inhale and one exhale valve fraction per patient are required")
        if min(inhale + exhale) < 0.0 or max(inhale + exhale) > 1.0:
            raise ConfigurationError(f"Valve fractions must lie in [0, 1], got {inhale} and {exhale}")
        if not (self.t_inhale > 0.0 and self.t_exhale > 0.0):
            raise ConfigurationError("Phase durations must be positive")
        if self.r_delta < 0.0 or self.r_delta_q < 0.0:
            raise ConfigurationError("Adjustable resistance coefficients must be nonnegative")
        object.__setattr__(self, 'valve_inhale', inhale)
        object.__setattr__(self, 'valve_exhale', exhale)

    @property
    def n_patients(self) -> int:
        return len(self.valve_inhale)

    @property
    def period(self) -> float:
        return self.t_inhale + self.t_exhale

    @property
    def rate(self) -> float:
        """Breaths per minute."""
        return 60.0 / self.period

    @property
    def ratio(self) -> float:
        """Inhale to exhale duration ratio."""
        return self.t_inhale / self.t_exhale

    @property
    def t_switch(self) -> float:
        return self.t0 + self.t_inhale

    @property
    def tf(self) -> float:
        return self.t0 + self.period

    @property
    def constant_pressure(self) -> bool:
        return not (callable(self.pip) or callable(self.peep))

    def horizon(self, phase: str) -> Tuple[float, float]:
        return (self.t0, self.t_switch) if phase == INHALE else (self.t_switch, self.tf)

    def valves(self, phase: str) -> np.ndarray:
        values = self.valve_inhale if phase == INHALE else self.valve_exhale
        return np.array(values, dtype=float).reshape(-1, 1)

    def pressure(self, phase: str, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        value = self.pip if phase == INHALE else self.peep
        if callable(value):
            return np.broadcast_to(np.asarray(value(t), dtype=float), t.shape)
        return np.full(t.shape, float(value))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Noisy readings taken during one breath.

    Args:
        times: Strictly increasing sample times inside the breath.
        flow: Total flow out of the ventilator at each time.
        volume: Total volume delivered since the breath began, if measured.
        patient_flow, patient_volume: Branch readings keyed by patient index.
        noise_bound: Bound on the magnitude of every reading's noise.
        seed: Seed of the noise generator, when the readings were synthesized.
    """
    times: np.ndarray
    flow: np.ndarray
    volume: Optional[np.ndarray] = None
    patient_flow: Dict[int, np.ndarray] = field(default_factory=dict)
    patient_volume: Dict[int, np.ndarray] = field(default_factory=dict)
    noise_bound: float = 0.005
    seed: Optional[int] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if np.any(np.diff(times) <= 0.0):
            raise ConfigurationError("Measurement times must be strictly increasing")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'flow', self._series(self.flow, 'flow'))
        if self.volume is not None:
            object.__setattr__(self, 'volume', self._series(self.volume, 'volume'))
        object.__setattr__(self, 'patient_flow',
                           {int(p): self._series(v, f'patient_flow[{p}]') for p, v in self.patient_flow.items()})
        object.__setattr__(self, 'patient_volume',
                           {int(p): self._series(v, f'patient_volume[{p}]') for p, v in self.patient_volume.items()})
        if self.noise_bound < 0.0:
            raise ConfigurationError("Noise bound must be nonnegative")

    def _series(self, values, label: str) -> np.ndarray:
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.size != self.times.size:
            raise ConfigurationError(f"{label} has {arr.size} readings for {self.times.size} times")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError(f"{label} contains non-finite readings")
        return arr

    def readings(self) -> List[Tuple[str, Optional[int], np.ndarray]]:
        """(kind, patient or None for the total, values) per measured signal."""
        out: List[Tuple[str, Optional[int], np.ndarray]] = [('flow', None, self.flow)]
        if self.volume is not None:
            out.append(('volume', None, self.volume))
        out += [('flow', p, v) for p, v in sorted(self.patient_flow.items())]
        out += [('volume', p, v) for p, v in sorted(self.patient_volume.items())]
        return out

    @property
    def count(self) -> int:
        return self.times.size * len(self.readings())


@dataclass(frozen=True, eq=False)
class EstimationConfig:
    """Weights and bounds of the least-squares estimate.

    Args:
        noise_weight: S_nu as a scalar, a diagonal or a full matrix.
        disturbance_weight: S_w as a scalar or one value per patient.
        disturbance_bound: Bound on |w_p(t)|.
    """
    noise_weight: Union[float, np.ndarray] = 1.0
    disturbance_weight: Union[float, np.ndarray] = 1e-3
    disturbance_bound: float = 0.005

    def __post_init__(self):
        for label, weight in (('noise', self.noise_weight), ('disturbance', self.disturbance_weight)):
            arr = np.asarray(weight, dtype=float)
            values = np.linalg.eigvalsh(arr) if arr.ndim == 2 else arr
            if not np.all(values > 0.0):
                raise ConfigurationError(f"The {label} weight must be positive definite")
        if self.disturbance_bound < 0.0:
            raise ConfigurationError("Disturbance bound must be nonnegative")

    def noise_inverse(self, size: int) -> np.ndarray:
        arr = np.asarray(self.noise_weight, dtype=float)
        if arr.ndim == 2:
            if arr.shape != (size, size):
                raise ConfigurationError(f"Noise weight is {arr.shape}, expected ({size}, {size})")
            return np.linalg.inv(arr)
        return np.diag(1.0 / np.broadcast_to(arr, (size,)))

    def disturbance_inverse(self, n_patients: int) -> np.ndarray:
        return (1.0 / np.broadcast_to(np.asarray(self.disturbance_weight, dtype=float), (n_patients,))).reshape(-1, 1)


def _rows(values, n: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(n, -1)


def _check_phase(phase: str) -> None:
    if phase not in PHASES:
        raise ConfigurationError(f"Unknown breathing phase '{phase}', expected one of {PHASES}")


def combined_resistance(phase: str, patients: PatientArrays, valves, settings: VentilatorSettings
                        ) -> Tuple[np.ndarray, np.ndarray]:
    """(R_L, R_Q) such that R_L i + R_Q i^2 = V - v + w holds on the phase.

    The flow sign is fixed by the phase, so the adjustable resistance adds
    a (R_delta i + R_delta_q i^2) while inhaling and a (R_delta i - R_delta_q i^2)
    while exhaling.
    """
    _check_phase(phase)
    if phase == INHALE:
        return (patients.r_inhale + valves * settings.r_delta,
                patients.rq_inhale + valves * settings.r_delta_q)
    return (patients.r_exhale + valves * settings.r_delta,
            -(patients.rq_exhale + valves * settings.r_delta_q))


def dynamics_residual(phase: str, v, i, w, params: Sequence[PatientParams], settings: VentilatorSettings,
                      t, vdot=None, valves=None) -> np.ndarray:
    """
    Airway relation R_L i + R_Q i^2 - (V - v + w) per patient.

    Args:
        v, i, w: Lung pressures, flows and disturbances as (n_p, P) arrays;
            w may be None.
        t: Time (scalar or (P,)) at which the ventilator pressure is read.
        vdot: When given, the charge rows C vdot - i are stacked on top.
        valves: Valve fractions overriding the settings.

    Returns:
        (n_p, P) algebraic residuals, or (2 n_p, P) with vdot.
    """
    n = len(params)
    arrays = patient_arrays(params)
    v, i = _rows(v, n), _rows(i, n)
    w = np.zeros_like(i) if w is None else _rows(w, n)
    a = settings.valves(phase) if valves is None else _rows(valves, n)
    pressure = settings.pressure(phase, np.broadcast_to(np.asarray(t, dtype=float), (i.shape[1],)))
    r_l, r_q = combined_resistance(phase, arrays, a, settings)
    algebraic = r_l * i + r_q * i * i - (pressure - v + w)
    if vdot is None:
        return algebraic
    return np.vstack([arrays.compliance * _rows(vdot, n) - i, algebraic])


def _flow(phase: str, v: np.ndarray, arrays: PatientArrays, valves, settings: VentilatorSettings, t,
          w=0.0) -> np.ndarray:
    drive = settings.pressure(phase, t) - v + w
    r_l, r_q = combined_resistance(phase, arrays, valves, settings)
    root = np.sqrt(np.maximum(r_l * r_l + 4.0 * r_q * drive, 0.0))
    denominator = np.broadcast_to(r_l + root, drive.shape)
    flow = np.divide(2.0 * drive, denominator, out=np.zeros_like(drive), where=denominator > 0.0)
    return np.maximum(flow, 0.0) if phase == INHALE else np.minimum(flow, 0.0)


def flow_from_pressure(phase: str, v, params: Sequence[PatientParams], settings: VentilatorSettings, t,
                       w=None) -> np.ndarray:
    """Flow solving the airway relation, clipped by the check valves."""
    _check_phase(phase)
    n = len(params)
    v = _rows(v, n)
    w = 0.0 if w is None else _rows(w, n)
    return _flow(phase, v, patient_arrays(params), settings.valves(phase), settings,
                 np.broadcast_to(np.asarray(t, dtype=float), (v.shape[1],)), w)


@dataclass(frozen=True)
class FlowOde:
    """di/dt = -i / (C (R_L + 2 R_Q i)) for every patient on one phase."""
    compliance: np.ndarray
    r_linear: np.ndarray
    r_quadratic: np.ndarray

    def denominator(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=float)
        shape = (-1,) + (1,) * (i.ndim - 1)
        return (self.compliance.reshape(shape)
                * (self.r_linear.reshape(shape) + 2.0 * self.r_quadratic.reshape(shape) * i))

    def __call__(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=float)
        den = self.denominator(i)
        small = np.abs(den) <= SINGULAR_TOL
        if np.any(small):
            value = float(np.broadcast_to(i, den.shape)[small][0])
            raise SingularityError(f"Reduced flow equation is singular at i = {value:.6g}", value)
        return -i / den


def dae_to_ode(params: Sequence[PatientParams], phase: str, settings: VentilatorSettings) -> FlowOde:
    """Flow dynamics obtained by differentiating the airway relation.

    Valid for constant ventilator pressure and disturbance; the airway
    relation itself must hold at the start of the phase.
    """
    _check_phase(phase)
    arrays = patient_arrays(params)
    r_l, r_q = combined_resistance(phase, arrays, settings.valves(phase), settings)
    return FlowOde(arrays.compliance.reshape(-1), np.asarray(r_l, dtype=float).reshape(-1),
                   np.asarray(r_q, dtype=float).reshape(-1))


@dataclass
class BreathSimulation:
    """Periodic breath of the true model integrated with the RK4 oracle.

    Each segment holds states [v, Q] sampled over its phase; Q starts at zero
    with the breath.
    """
    params: Tuple[PatientParams, ...]
    settings: VentilatorSettings
    inhale: OracleResult
    exhale: OracleResult
    cycles: int
    step: float

    @property
    def n_patients(self) -> int:
        return len(self.params)

    def segment(self, phase: str) -> OracleResult:
        return self.inhale if phase == INHALE else self.exhale

    def sample(self, phase: str, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(v, Q, i) on the phase, each (n_p, P); times are clipped to the phase."""
        seg = self.segment(phase)
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), seg.times[0], seg.times[-1])
        states = seg.at(t)
        n = self.n_patients
        v = states[:n]
        flows = _flow(phase, v, patient_arrays(self.params), self.settings.valves(phase), self.settings, t)
        return v, states[n:], flows

    def exact_state(self, t: float) -> np.ndarray:
        """[v, Q] at t, integrated from the start of its phase onto t exactly."""
        phase = INHALE if t < self.settings.t_switch else EXHALE
        seg = self.segment(phase)
        start = seg.times[0]
        if t <= start:
            return seg.states[:, 0].copy()
        run = integrate_oracle(_breath_form(phase, self.params, self.settings), seg.states[:, 0], None, None,
                               start, float(t), self.step, n_u=0)
        return run.final()

    def flows_at(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        n = self.n_patients
        out = np.empty((n, times.size))
        arrays = patient_arrays(self.params)
        for phase in PHASES:
            mask = (times < self.settings.t_switch) if phase == INHALE else (times >= self.settings.t_switch)
            if np.any(mask):
                out[:, mask] = _flow(phase, states[:n, mask], arrays, self.settings.valves(phase),
                                     self.settings, times[mask])
        return out

    def tidal_volume(self) -> np.ndarray:
        """C_p (v_p at the end of inhale - v_p at the end of the breath)."""
        n = self.n_patients
        compliance = patient_arrays(self.params).compliance.reshape(-1)
        return compliance * (self.inhale.states[:n, -1] - self.exhale.states[:n, -1])


def _breath_form(phase: str, params: Sequence[PatientParams], settings: VentilatorSettings) -> SemiExplicitForm:
    arrays = patient_arrays(params)
    n = len(params)
    valves = settings.valves(phase)

    def rhs(x, u, theta, t):
        i = _flow(phase, x[:n], arrays, valves, settings, t)
        return np.vstack([i / arrays.compliance, i])
    return SemiExplicitForm(rhs=rhs)


def _check_patients(params: Sequence[PatientParams], settings: VentilatorSettings) -> Tuple[PatientParams, ...]:
    params = tuple(params)
    if len(params) != settings.n_patients:
        raise ConfigurationError(
            f"{len(params)} patients given for settings with {settings.n_patients} valve pairs")
    return params


def simulate_breath(params: Sequence[PatientParams], settings: VentilatorSettings, step: float = 1e-3,
                    tol: float = 1e-8, max_cycles: int = 100, initial=None) -> BreathSimulation:
    """
    Integrate breaths until the lung pressures repeat.

    The start pressure is updated by a per-patient secant step on
    v(t_f) - v(t_0) (patients are decoupled for given settings), falling back
    to plain iteration when the secant slope is unusable.

    Raises:
        SimulationError: no limit cycle within max_cycles, or the integration diverged.
    """
    params = _check_patients(params, settings)
    n = len(params)
    if initial is None:
        v = np.full(n, float(settings.pressure(EXHALE, settings.tf)[0]))
    else:
        v = np.asarray(initial, dtype=float).reshape(n).copy()
    inhale_form = _breath_form(INHALE, params, settings)
    exhale_form = _breath_form(EXHALE, params, settings)

    def one_breath(v0):
        first = integrate_oracle(inhale_form, np.concatenate([v0, np.zeros(n)]), None, None,
                                 settings.t0, settings.t_switch, step, n_u=0)
        second = integrate_oracle(exhale_form, first.final(), None, None, settings.t_switch, settings.tf,
                                  step, n_u=0)
        return first, second

    v_prev = g_prev = None
    gap = np.inf
    try:
        for cycle in range(1, max_cycles + 1):
            inhale, exhale = one_breath(v)
            g = exhale.states[:n, -1] - v
            gap = float(np.max(np.abs(g)))
            logger.debug("Breath cycle %d: periodicity gap %.3e", cycle, gap)
            if gap <= tol:
                logger.info("Limit cycle reached after %d breaths", cycle)
                return BreathSimulation(params, settings, inhale, exhale, cycle, step)
            v_next = v + g
            if v_prev is not None:
                dv = v - v_prev
                dg = g - g_prev
                usable = (np.abs(dv) > 0.0) & (dg * dv < 0.0)
                slope = np.divide(dg, dv, out=np.ones_like(dg), where=usable)
                v_next = np.where(usable, v - g / slope, v_next)
            v_prev, g_prev, v = v, g, v_next
    except DivergenceError as exc:
        raise SimulationError(f"Breath simulation diverged: {exc}") from exc
    raise SimulationError(f"No limit cycle after {max_cycles} breaths, last gap {gap:.3e}")


def measurement_times(settings: VentilatorSettings, per_phase: int = 3) -> np.ndarray:
    """per_phase equally spaced times strictly inside each phase."""
    if per_phase < 0:
        raise ConfigurationError("per_phase must be nonnegative")
    k = np.arange(1, per_phase + 1) / (per_phase + 1)
    return np.concatenate([settings.t0 + settings.t_inhale * k, settings.t_switch + settings.t_exhale * k])


def synthesize_measurements(params: Sequence[PatientParams], settings: VentilatorSettings, times=None,
                            seed: int = 0, noise: float = 0.005, per_phase: int = 3, volume: bool = True,
                            patient_flows: Sequence[int] = (), patient_volumes: Sequence[int] = (),
                            noise_bound: float = 0.005,
                            simulation: Optional[BreathSimulation] = None) -> MeasurementSet:
    """
    Sample the periodic breath of the true model and add uniform noise.

    Noise is drawn from [-noise, noise] by a generator seeded with ``seed``,
    in the order total flow, total volume, branch flows, branch volumes.

    Raises:
        SimulationError: the true model has no limit cycle.
    """
    if noise < 0.0:
        raise ConfigurationError("Noise range must be nonnegative")
    params = _check_patients(params, settings)
    simulation = simulation or simulate_breath(params, settings)
    times = measurement_times(settings, per_phase) if times is None else np.asarray(times, dtype=float)
    if times.size and (times[0] < settings.t0 or times[-1] >= settings.tf):
        raise ConfigurationError("Measurement times must lie inside the breath")
    n = len(params)
    states = np.column_stack([simulation.exact_state(float(t)) for t in times]) if times.size \
        else np.zeros((2 * n, 0))
    flows = simulation.flows_at(times, states)
    volumes = states[n:]
    rng = np.random.default_rng(seed)

    def noisy(values):
        return values + rng.uniform(-noise, noise, size=values.shape)

    return MeasurementSet(
        times=times,
        flow=noisy(flows.sum(axis=0)),
        volume=noisy(volumes.sum(axis=0)) if volume else None,
        patient_flow={int(p): noisy(flows[p]) for p in patient_flows},
        patient_volume={int(p): noisy(volumes[p]) for p in patient_volumes},
        noise_bound=noise_bound,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class BreathModel:
    """
    Variable layout and parameter sources of a two-phase breath problem.

    States are [v, Q] in DAE form and [v, i, Q] in ODE form, where Q_p is the
    volume delivered to patient p since the breath began. DAE free variables
    are [i, w, V], the w block present only with ``disturbance`` and V only
    with ``pressure_input``; the ODE form has no free variables and keeps one
    disturbance per patient and phase in theta.

    Patient parameters come from ``patients`` when known and otherwise from
    theta starting at ``param_start``. Valve fractions ([a_I, a_E]) and
    constant pressures ([V_I, V_E]) come from theta when ``valve_start`` or
    ``pressure_start`` is set, otherwise from ``settings``.
    """
    settings: VentilatorSettings
    patients: Optional[Tuple[PatientParams, ...]] = None
    form: str = 'dae'
    model: str = 'quadratic'
    param_start: int = 0
    valve_start: Optional[int] = None
    pressure_start: Optional[int] = None
    pressure_input: bool = False
    disturbance: bool = False
    disturbance_start: Optional[int] = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigurationError(f"Unknown model form '{self.form}', expected one of {FORMS}")
        if self.model not in MODELS:
            raise ConfigurationError(f"Unknown resistance model '{self.model}', expected one of {MODELS}")
        if self.patients is not None:
            object.__setattr__(self, 'patients', _check_patients(self.patients, self.settings))
        if self.form == 'ode':
            if self.pressure_input or not self.settings.constant_pressure:
                raise ConfigurationError("The reduced ODE form needs constant ventilator pressures")
            if self.disturbance and self.disturbance_start is None:
                raise ConfigurationError("The reduced ODE form keeps disturbances in theta")

    @property
    def n_patients(self) -> int:
        return self.settings.n_patients

    @property
    def per_patient(self) -> int:
        return len(PARAM_NAMES[self.model])

    @property
    def n_params(self) -> int:
        return 0 if self.patients is not None else self.n_patients * self.per_patient

    @property
    def n_x(self) -> int:
        return (3 if self.form == 'ode' else 2) * self.n_patients

    @property
    def n_u(self) -> int:
        if self.form == 'ode':
            return 0
        n = self.n_patients
        return n + (n if self.disturbance else 0) + (1 if self.pressure_input else 0)

    @property
    def volume_indices(self) -> Tuple[int, ...]:
        n = self.n_patients
        return tuple(range(self.n_x - n, self.n_x))

    def state_names(self) -> Tuple[str, ...]:
        n = self.n_patients
        names = [f"v_{p + 1}" for p in range(n)]
        if self.form == 'ode':
            names += [f"i_{p + 1}" for p in range(n)]
        return tuple(names + [f"Q_{p + 1}" for p in range(n)])

    def input_names(self) -> Tuple[str, ...]:
        if self.form == 'ode':
            return ()
        n = self.n_patients
        names = [f"i_{p + 1}" for p in range(n)]
        if self.disturbance:
            names += [f"w_{p + 1}" for p in range(n)]
        if self.pressure_input:
            names.append('V')
        return tuple(names)

    def param_names(self) -> List[str]:
        if self.patients is not None:
            return []
        return [f"{name}_{p + 1}" for p in range(self.n_patients) for name in PARAM_NAMES[self.model]]

    def volumes(self, x) -> np.ndarray:
        return x[self.n_x - self.n_patients:]

    def flow(self, x, u) -> np.ndarray:
        n = self.n_patients
        return x[n:2 * n] if self.form == 'ode' else u[:n]

    def disturbance_of(self, phase: str, u, theta):
        n = self.n_patients
        if not self.disturbance:
            return 0.0
        if self.form == 'dae':
            return u[n:2 * n]
        start = self.disturbance_start + (0 if phase == INHALE else n)
        return np.stack([theta[start + p] for p in range(n)])

    def pressure_of(self, phase: str, u, theta, t) -> np.ndarray:
        if self.pressure_input:
            return u[-1]
        if self.pressure_start is not None:
            return theta[self.pressure_start + (0 if phase == INHALE else 1)] + 0.0 * np.asarray(t)
        return self.settings.pressure(phase, t)

    def valves_of(self, phase: str, theta) -> np.ndarray:
        if self.valve_start is None:
            return self.settings.valves(phase)
        n = self.n_patients
        start = self.valve_start + (0 if phase == INHALE else n)
        return np.stack([theta[start + p] for p in range(n)])

    def patient_arrays(self, theta) -> PatientArrays:
        if self.patients is not None:
            return patient_arrays(self.patients)
        n, k = self.n_patients, self.per_patient
        columns = [np.stack([theta[self.param_start + p * k + j] for p in range(n)]) for j in range(k)]
        if self.model == 'linear':
            columns += [np.zeros_like(columns[0]), np.zeros_like(columns[0])]
        return PatientArrays(*columns)

    def params(self, theta) -> Tuple[PatientParams, ...]:
        """Patient parameters at a (flat) theta."""
        if self.patients is not None:
            return self.patients
        theta = np.asarray(theta, dtype=float).reshape(-1)
        k = self.per_patient
        out = []
        for p in range(self.n_patients):
            values = np.maximum(theta[self.param_start + p * k:self.param_start + (p + 1) * k], 0.0)
            out.append(PatientParams.from_array(values))
        return tuple(out)

    def algebraic(self, phase: str, x, u, theta, t) -> np.ndarray:
        n = self.n_patients
        i = self.flow(x, u)
        r_l, r_q = combined_resistance(phase, self.patient_arrays(theta), self.valves_of(phase, theta),
                                       self.settings)
        drive = self.pressure_of(phase, u, theta, t) - x[:n] + self.disturbance_of(phase, u, theta)
        return r_l * i + r_q * i * i - drive

    def dynamics(self, phase: str):
        n = self.n_patients

        def dynamics(xdot, x, u, theta, t):
            arrays = self.patient_arrays(theta)
            i = self.flow(x, u)
            rows = [arrays.compliance * xdot[:n] - i]
            if self.form == 'ode':
                r_l, r_q = combined_resistance(phase, arrays, self.valves_of(phase, theta), self.settings)
                rows.append(arrays.compliance * (r_l + 2.0 * r_q * i) * xdot[n:2 * n] + i)
            else:
                rows.append(self.algebraic(phase, x, u, theta, t))
            rows.append(xdot[self.n_x - n:] - i)
            return np.vstack(rows)
        return dynamics

    def dynamics_jacobian(self, phase: str, n_theta: int):
        """Analytic partials of ``dynamics(phase)`` for a theta of n_theta entries.

        Rows are ordered as in ``dynamics``: charge, airway (or reduced flow
        ODE), volume. Returns (df/dxdot, df/dx, df/du, df/dtheta).
        """
        n, n_x, n_u = self.n_patients, self.n_x, self.n_u
        ode = self.form == 'ode'
        inhale = phase == INHALE
        q_sign = 1.0 if inhale else -1.0
        rows = np.arange(n)
        k = self.per_patient

        def jacobian(xdot, x, u, theta, t):
            size = np.shape(x)[1]
            arrays = self.patient_arrays(theta)
            compliance = np.broadcast_to(arrays.compliance, (n, size))
            r_l, r_q = combined_resistance(phase, arrays, self.valves_of(phase, theta), self.settings)
            r_q = np.broadcast_to(r_q, (n, size))
            i = np.broadcast_to(self.flow(x, u), (n, size))
            d_xdot = np.zeros((3 * n, n_x, size))
            d_x = np.zeros((3 * n, n_x, size))
            d_u = np.zeros((3 * n, n_u, size))
            d_th = np.zeros((3 * n, n_theta, size))
            d_flow = d_x[:, n:2 * n] if ode else d_u[:, :n]

            d_xdot[rows, rows] = compliance
            d_flow[rows, rows] = -1.0
            d_xdot[2 * n + rows, n_x - n + rows] = 1.0
            d_flow[2 * n + rows, rows] = -1.0

            airway = n + rows
            if ode:
                idot = xdot[n:2 * n]
                slope = np.broadcast_to(r_l + 2.0 * r_q * i, (n, size))
                d_xdot[airway, n + rows] = compliance * slope
                d_flow[airway, rows] = 2.0 * compliance * r_q * idot + 1.0
                by_linear, by_quadratic = compliance * idot, 2.0 * compliance * i * idot
                by_compliance = slope * idot
            else:
                d_x[airway, rows] = 1.0
                d_flow[airway, rows] = r_l + 2.0 * r_q * i
                by_linear, by_quadratic = i, i * i
                by_compliance = np.zeros((n, size))
                if self.disturbance:
                    d_u[airway, n + rows] = -1.0
                if self.pressure_input:
                    d_u[airway, n_u - 1] = -1.0
            if not ode and not self.pressure_input and self.pressure_start is not None:
                d_th[airway, self.pressure_start + (0 if inhale else 1)] = -1.0
            if self.valve_start is not None:
                valves = self.valve_start + (0 if inhale else n) + rows
                d_th[airway, valves] = (self.settings.r_delta * by_linear
                                        + q_sign * self.settings.r_delta_q * by_quadratic)
            if self.patients is None:
                base = self.param_start + rows * k
                d_th[rows, base] = xdot[:n]
                d_th[airway, base] = by_compliance
                d_th[airway, base + (1 if inhale else 2)] = by_linear
                if self.model == 'quadratic':
                    d_th[airway, base + (3 if inhale else 4)] = q_sign * by_quadratic
            return d_xdot, d_x, d_u, d_th
        return jacobian

    def semi_explicit(self, phase: str) -> SemiExplicitForm:
        n = self.n_patients

        def rhs(x, u, theta, t):
            arrays = self.patient_arrays(theta)
            i = self.flow(x, u)
            rows = [i / arrays.compliance]
            if self.form == 'ode':
                r_l, r_q = combined_resistance(phase, arrays, self.valves_of(phase, theta), self.settings)
                rows.append(-i / (arrays.compliance * (r_l + 2.0 * r_q * i)))
            rows.append(i)
            return np.vstack(rows)

        if self.form == 'ode':
            return SemiExplicitForm(rhs=rhs)
        return SemiExplicitForm(rhs=rhs, algebraic=lambda x, u, theta, t: self.algebraic(phase, x, u, theta, t),
                                n_a=n)

    def measurement(self, rows: Sequence[Tuple[str, Optional[int], float, int]]):
        """Interior equality y - nu - signal for (kind, patient, value, nu column) rows."""
        def fun(xdot, x, udot, u, theta, t):
            flows, volumes = self.flow(x, u), self.volumes(x)
            out = []
            for kind, patient, value, column in rows:
                signal = flows if kind == 'flow' else volumes
                signal = signal.sum(axis=0) if patient is None else signal[patient]
                out.append(value - theta[column] - signal)
            return np.array(out)
        return fun

    def phase_problem(self, phase: str, horizon, n_theta: int = 0, theta_lower=None, theta_upper=None,
                      theta_guess=None, theta_names: Sequence[str] = (), interior: Sequence[InteriorPoint] = (),
                      running_cost=None, disturbance_bound: float = 0.0,
                      pressure_bounds: Tuple[float, float] = (-np.inf, np.inf),
                      initial_pressure=None, name: str = '') -> DopProblem:
        """One phase of the breath as a DopProblem.

        The inhale phase pins Q(t0) = 0 (and v(t0) when initial_pressure is
        given); in ODE form every phase also imposes the airway relation at
        its start.
        """
        _check_phase(phase)
        n = self.n_patients
        eq_rows = (n if phase == INHALE else 0) + (n if self.form == 'ode' else 0)
        eq_rows += n if initial_pressure is not None else 0
        start_pressure = None if initial_pressure is None else _rows(initial_pressure, n)

        def boundary_eq(x0, xf, theta, t0, tf):
            rows = []
            if phase == INHALE:
                rows += list(self.volumes(x0))
            if self.form == 'ode':
                rows += list(self.algebraic(phase, x0, None, theta, t0))
            if start_pressure is not None:
                rows += list(x0[:n] - start_pressure)
            return np.array(rows)

        sign = -1.0 if phase == INHALE else 1.0

        def flow_sign(xdot, x, udot, u, theta, t):
            return sign * self.flow(x, u)

        u_lower, u_upper = [], []
        if self.form == 'dae':
            u_lower += [-np.inf] * n
            u_upper += [np.inf] * n
            if self.disturbance:
                u_lower += [-disturbance_bound] * n
                u_upper += [disturbance_bound] * n
            if self.pressure_input:
                u_lower.append(pressure_bounds[0])
                u_upper.append(pressure_bounds[1])
        return DopProblem(
            n_x=self.n_x, n_u=self.n_u, n_f=3 * n, dynamics=self.dynamics(phase),
            dynamics_jacobian=self.dynamics_jacobian(phase, n_theta), horizon=horizon,
            n_theta=n_theta, path_inequality=flow_sign, n_g=n, interior=tuple(interior),
            running_cost=running_cost,
            boundary_eq=boundary_eq if eq_rows else None, n_eq=eq_rows,
            x_lower=np.concatenate([np.zeros(n), np.full(self.n_x - n, -np.inf)]),
            u_lower=np.array(u_lower), u_upper=np.array(u_upper),
            theta_lower=theta_lower, theta_upper=theta_upper, theta_guess=theta_guess,
            semi_explicit=self.semi_explicit(phase),
            state_names=self.state_names(), input_names=self.input_names(), theta_names=tuple(theta_names),
            name=name or phase,
        )

    def links(self) -> Tuple[StateLink, StateLink]:
        """Pressure and volume carried into the exhale phase; periodic pressure."""
        n = self.n_patients
        carried = tuple(range(n)) + self.volume_indices
        return StateLink(0, 1, carried), StateLink(1, 0, tuple(range(n)))

    def guess(self, simulation: BreathSimulation, theta=None) -> List[Guess]:
        """Per-phase initial guess sampled from a simulated breath."""
        guesses = []
        for phase in PHASES:
            def state(t, phase=phase):
                v, q, i = simulation.sample(phase, t)
                return np.vstack([v, i, q]) if self.form == 'ode' else np.vstack([v, q])

            def inputs(t, phase=phase):
                _, _, i = simulation.sample(phase, t)
                blocks = [i]
                if self.disturbance:
                    blocks.append(np.zeros_like(i))
                if self.pressure_input:
                    blocks.append(simulation.settings.pressure(phase, t)[None, :])
                return np.vstack(blocks)
            guesses.append(Guess(state=state, inputs=inputs if self.n_u else None, theta=theta))
        return guesses


def _disturbance_cost(breath: BreathModel, config: EstimationConfig):
    n = breath.n_patients
    inverse = config.disturbance_inverse(n)

    def running(x, u, theta, t):
        w = u[n:2 * n]
        return np.sum(inverse * w * w, axis=0)
    return running


def build_breath_problem(params: Sequence[PatientParams], settings: VentilatorSettings,
                         config: Optional[EstimationConfig] = None) -> PhaseStack:
    """
    Periodic two-phase breath with known patients and settings.

    Without a config the problem has no cost and no disturbance; with one,
    bounded disturbances are added and their weighted square is minimized.
    """
    params = _check_patients(params, settings)
    disturbed = config is not None and config.disturbance_bound > 0.0
    breath = BreathModel(settings, patients=params, disturbance=disturbed)
    running = _disturbance_cost(breath, config) if disturbed else None
    bound = config.disturbance_bound if disturbed else 0.0
    phases = tuple(breath.phase_problem(phase, FixedHorizon(*settings.horizon(phase)), running_cost=running,
                                        disturbance_bound=bound) for phase in PHASES)
    return PhaseStack(phases=phases, links=breath.links(), name='ventilator-breath', meta={'breath': breath})


def inhale_phase_problem(params: Sequence[PatientParams], settings: VentilatorSettings,
                         initial_pressure=None) -> DopProblem:
    """Single inhale phase from a given lung pressure (PEEP by default), without a cost."""
    params = _check_patients(params, settings)
    breath = BreathModel(settings, patients=params)
    if initial_pressure is None:
        initial_pressure = np.full(len(params), float(settings.pressure(EXHALE, settings.t0)[0]))
    return breath.phase_problem(INHALE, FixedHorizon(*settings.horizon(INHALE)),
                                initial_pressure=initial_pressure, name='ventilator-inhale')


def build_estimation_dop(settings: VentilatorSettings, measurements: MeasurementSet,
                         config: Optional[EstimationConfig] = None, model: str = 'quadratic',
                         form: str = 'dae', guess_patient: PatientParams = GUESS_PATIENT) -> PhaseStack:
    """
    Weighted least-squares fit of the breath model to measurements.

    theta holds the patient parameters, then one noise value per reading
    (signal-major, time-minor), then in ODE form the per-phase disturbances
    [w_I, w_E]. The cost is nu' S_nu^-1 nu plus the integral of
    w' S_w^-1 w; readings enter as interior equalities y = nu + signal.
    """
    config = config or EstimationConfig()
    n = settings.n_patients
    k = len(PARAM_NAMES[model]) if model in MODELS else 0
    readings = measurements.readings()
    m = measurements.times.size
    nu_start = n * k
    n_nu = len(readings) * m
    w_start = nu_start + n_nu
    n_theta = w_start + (2 * n if form == 'ode' else 0)
    breath = BreathModel(settings, form=form, model=model, disturbance=True,
                         disturbance_start=w_start if form == 'ode' else None)

    guess_values = guess_patient.as_array(model)
    lower = np.concatenate([np.tile(np.r_[MIN_COMPLIANCE, np.zeros(k - 1)], n),
                            np.full(n_nu, -measurements.noise_bound),
                            np.full(n_theta - w_start, -config.disturbance_bound)])
    upper = np.concatenate([np.full(n * k, np.inf), np.full(n_nu, measurements.noise_bound),
                            np.full(n_theta - w_start, config.disturbance_bound)])
    guess = np.concatenate([np.tile(guess_values, n), np.zeros(n_theta - nu_start)])
    names = breath.param_names()
    names += [f"nu_{kind}{'' if p is None else p + 1}[{t}]" for kind, p, _ in readings for t in range(m)]
    names += [f"w_{phase}_{p + 1}" for phase in PHASES for p in range(n)][:n_theta - w_start]

    if measurements.count == 0:
        logger.warning("No measurements given: patient parameters are not identifiable")
    points: Dict[str, List[InteriorPoint]] = {INHALE: [], EXHALE: []}
    for j, t in enumerate(measurements.times):
        if not settings.t0 <= t < settings.tf:
            raise ConfigurationError(f"Measurement time {t:.6g} lies outside the breath")
        phase = INHALE if t < settings.t_switch else EXHALE
        rows = [(kind, p, float(values[j]), nu_start + r * m + j) for r, (kind, p, values) in enumerate(readings)]
        points[phase].append(InteriorPoint(time=float(t), fun=breath.measurement(rows), n_c=len(rows),
                                           label=f"y[{j}]"))

    noise_inverse = config.noise_inverse(n_nu)
    w_inverse = config.disturbance_inverse(n)

    def fit_cost(ends, theta):
        nu = theta[nu_start:nu_start + n_nu]
        cost = np.einsum('ip,ij,jp->p', nu, noise_inverse, nu)
        if form == 'ode':
            for phase, duration in ((INHALE, settings.t_inhale), (EXHALE, settings.t_exhale)):
                w = breath.disturbance_of(phase, None, theta)
                cost = cost + duration * np.sum(w_inverse * w * w, axis=0)
        return cost

    running = _disturbance_cost(breath, config) if form == 'dae' else None
    phases = tuple(
        breath.phase_problem(phase, FixedHorizon(*settings.horizon(phase)), n_theta=n_theta, theta_lower=lower,
                             theta_upper=upper, theta_guess=guess, theta_names=names, interior=points[phase],
                             running_cost=running, disturbance_bound=config.disturbance_bound,
                             name=f"estimation-{phase}")
        for phase in PHASES)
    logger.info("Estimation problem: %d patients, %s model, %s form, %d readings", n, model, form,
                measurements.count)
    return PhaseStack(phases=phases, links=breath.links(), mayer_cost=fit_cost, name='ventilator-estimation',
                      meta={'breath': breath, 'noise': slice(nu_start, nu_start + n_nu)})


@dataclass(frozen=True)
class TidalVolume:
    """Exhaled volume by flow integration and by the compliance identity."""
    integral: float
    compliance_form: float

    @property
    def value(self) -> float:
        return self.integral

    @property
    def discrepancy(self) -> float:
        return abs(self.integral - self.compliance_form)


def _breath_of(solution: StackSolution) -> BreathModel:
    breath = solution.extras.get('breath')
    if breath is None:
        raise ConfigurationError("Solution does not come from a ventilator breath problem")
    return breath


def tidal_volume(solution: StackSolution, p: int) -> TidalVolume:
    """Volume exhaled by patient p: -integral of i_p over exhale and C_p (v_p(t_I) - v_p(t_f))."""
    breath = _breath_of(solution)
    n = breath.n_patients
    if not 0 <= p < n:
        raise ConfigurationError(f"Patient index {p} outside 0..{n - 1}")
    exhale = solution.phases[1]
    if breath.form == 'ode':
        integral = -float(exhale.state.integral()[n + p])
    else:
        integral = -float(exhale.inputs.integral()[p])
    compliance = breath.params(solution.theta)[p].compliance
    pressure_drop = exhale.state.start_value(0)[p] - exhale.state.final_value()[p]
    return TidalVolume(integral=integral, compliance_form=float(compliance * pressure_drop))


def energy(solution: StackSolution, unit: str = 'cmH2O*L') -> float:
    """Integral of V(t) times the total flow over the breath, in cmH2O*L or J."""
    if unit not in ENERGY_UNITS:
        raise ConfigurationError(f"Unknown energy unit '{unit}', expected one of {tuple(ENERGY_UNITS)}")
    breath = _breath_of(solution)
    theta = np.asarray(solution.theta, dtype=float)
    rule = gauss_quadrature(ENERGY_POINTS)
    total = 0.0
    for phase, part in zip(PHASES, solution.phases):
        for i in range(part.state.n_intervals):
            points, weights = rule.mapped(part.state.nodes[i], part.state.nodes[i + 1])
            x = part.state.evaluate_interval(i, points)
            u = part.inputs.evaluate_interval(i, points) if breath.n_u else np.zeros((0, points.size))
            th = np.tile(theta[:, None], (1, points.size))
            pressure = breath.pressure_of(phase, u, th, points)
            total += float(weights @ (pressure * breath.flow(x, u).sum(axis=0)))
    return total * ENERGY_UNITS[unit]


def _solve_stack(stack: PhaseStack, mesh: Optional[Mesh], scheme: Union[str, Scheme],
                 solver_options: Optional[SolverOptions], guess=None) -> StackSolution:
    mesh = mesh or Mesh.uniform(0.0, 1.0, DEFAULT_INTERVALS)
    options = CollocationOptions(scheme=scheme if isinstance(scheme, Scheme) else Scheme.parse(scheme))
    solution = solve(stack, mesh, 'collocation', options, solver_options, guess=guess)
    if not solution.succeeded:
        raise SolverFailure(f"'{stack.name}' ended with status {solution.status}", report=solution.report)
    return solution


def _simulated_guess(breath: BreathModel, params: Sequence[PatientParams], theta) -> Optional[List[Guess]]:
    try:
        simulation = simulate_breath(params, breath.settings, step=2e-3, tol=1e-6)
    except SimulationError as exc:
        logger.warning("No simulated initial guess: %s", exc)
        return None
    return breath.guess(simulation, theta)


def solve_breath(params: Sequence[PatientParams], settings: VentilatorSettings, mesh: Optional[Mesh] = None,
                 scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                 solver_options: Optional[SolverOptions] = None) -> StackSolution:
    """Transcribe and solve the periodic breath of known patients."""
    stack = build_breath_problem(params, settings)
    guess = _simulated_guess(stack.meta['breath'], params, None)
    return _solve_stack(stack, mesh, scheme, solver_options, guess)


@dataclass
class EstimationResult:
    params: Tuple[PatientParams, ...]
    noise: np.ndarray
    tidal_volumes: List[TidalVolume]
    solution: StackSolution


def estimate_parameters(settings: VentilatorSettings, measurements: MeasurementSet,
                        config: Optional[EstimationConfig] = None, model: str = 'quadratic', form: str = 'dae',
                        mesh: Optional[Mesh] = None, scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                        solver_options: Optional[SolverOptions] = None,
                        guess_patient: PatientParams = GUESS_PATIENT) -> EstimationResult:
    """
    Solve the least-squares estimate, starting from a breath simulated with
    ``guess_patient`` for every patient.

    Raises:
        SolverFailure: the NLP did not converge.
    """
    stack = build_estimation_dop(settings, measurements, config, model, form, guess_patient)
    breath: BreathModel = stack.meta['breath']
    guess = _simulated_guess(breath, [guess_patient] * settings.n_patients, stack.initial_theta())
    solution = _solve_stack(stack, mesh, scheme, solver_options, guess)
    theta = np.asarray(solution.theta, dtype=float)
    params = breath.params(theta)
    for p, patient in enumerate(params):
        logger.info("Patient %d: C=%.5g R_I=%.5g R_E=%.5g RQ_I=%.5g RQ_E=%.5g", p + 1, *astuple(patient))
    return EstimationResult(params=params, noise=theta[stack.meta['noise']].copy(),
                            tidal_volumes=[tidal_volume(solution, p) for p in range(settings.n_patients)],
                            solution=solution)


@dataclass(frozen=True)
class TidalBounds:
    patient: int
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-6) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def _tidal_objective(breath: BreathModel, p: int, sign: float):
    def objective(ends, theta):
        compliance = breath.patient_arrays(theta).compliance[p]
        return sign * compliance * (ends[0].xf[p] - ends[0].x0[p])
    return objective


def tidal_volume_bounds(settings: VentilatorSettings, measurements: MeasurementSet,
                        config: Optional[EstimationConfig] = None, model: str = 'quadratic',
                        mesh: Optional[Mesh] = None, scheme: Union[str, Scheme] = DEFAULT_SCHEME,
                        solver_options: Optional[SolverOptions] = None,
                        estimate: Optional[EstimationResult] = None) -> List[TidalBounds]:
    """
    Smallest and largest inhaled volume C_p (v_p(t0 + t_I) - v_p(t0)) per
    patient over every model trajectory consistent with the measurements.

    Raises:
        SolverFailure: one of the bound problems did not converge, e.g. for
            an infeasible measurement set.
    """
    base = build_estimation_dop(settings, measurements, config, model)
    breath: BreathModel = base.meta['breath']
    if estimate is not None:
        guess = estimate.solution
    else:
        guess = _simulated_guess(breath, [GUESS_PATIENT] * settings.n_patients, base.initial_theta())
    feasibility = tuple(replace(phase, running_cost=None) for phase in base.phases)
    out = []
    for p in range(breath.n_patients):
        values = []
        for sign in (1.0, -1.0):
            stack = replace(base, phases=feasibility, mayer_cost=_tidal_objective(breath, p, sign),
                            name=f"tidal-bound-{p + 1}{'-min' if sign > 0 else '-max'}")
            solution = _solve_stack(stack, mesh, scheme, solver_options, guess)
            values.append(sign * float(solution.cost))
        out.append(TidalBounds(patient=p, lower=values[0], upper=values[1]))
        logger.info("Patient %d tidal volume within [%.6g, %.6g] L", p + 1, values[0], values[1])
    return out


@dataclass(frozen=True)
class ControlBounds:
    """Admissible ranges of the control problem (breaths/min, ratio, cmH2O, fraction)."""
    rate: Tuple[float, float] = (10.0, 20.0)
    ratio: Tuple[float, float] = (0.4, 0.6)
    pip: Tuple[float, float] = (15.0, 35.0)
    peep: Tuple[float, float] = (5.0, 20.0)
    valve: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for label in ('rate', 'ratio', 'pip', 'peep', 'valve'):
            lo, hi = getattr(self, label)
            if not lo <= hi:
                raise ConfigurationError(f"Control bound '{label}' needs lower <= upper, got ({lo}, {hi})")
        if self.rate[0] <= 0.0 or self.ratio[0] <= 0.0:
            raise ConfigurationError("Rate and ratio bounds must be positive")
        if self.valve[0] < 0.0 or self.valve[1] > 1.0:
            raise ConfigurationError("Valve bounds must lie in [0, 1]")

    @property
    def period(self) -> Tuple[float, float]:
        return 60.0 / self.rate[1], 60.0 / self.rate[0]

    @property
    def inhale(self) -> Tuple[float, float]:
        (lo, hi), (r_lo, r_hi) = self.period, self.ratio
        return r_lo * lo / (1.0 + r_lo), r_hi * hi / (1.0 + r_hi)


CONTROL_GUESS = VentilatorSettings(pip=28.0, peep=15.0, valve_inhale=(0.5, 0.5), valve_exhale=(0.5, 0.5),
                                   t_inhale=1.8, t_exhale=3.6)


def _initial_value(pressure: Pressure, t: float) -> float:
    return float(pressure(np.array([t]))[0]) if callable(pressure) else float(pressure)


def build_control_dop(params: Sequence[PatientParams], targets=0.5, tolerances=0.005,
                      bounds: Optional[ControlBounds] = None, mode: str = 'constant',
                      settings: Optional[VentilatorSettings] = None,
                      peep_preference: float = PEEP_PREFERENCE) -> PhaseStack:
    """
    Minimum-energy ventilator settings delivering target tidal volumes.

    theta is [V_I, V_E, a_I, a_E] in constant mode and [a_I, a_E] in
    time-varying mode, where the pressure is a free variable of each phase.
    Both phases have free horizons; the time transform appends their start
    and end times. ``settings`` supplies the adjustable resistance
    coefficients and the initial guess.

    Shifting every pressure by the same amount leaves the flows unchanged,
    so the energy alone does not fix the pressure level. The exhale running
    cost therefore subtracts peep_preference * V_E, selecting the highest
    admissible PEEP among equal-energy settings; energy() excludes it.
    """
    if mode not in PRESSURE_MODES:
        raise ConfigurationError(f"Unknown pressure mode '{mode}', expected one of {PRESSURE_MODES}")
    bounds = bounds or ControlBounds()
    params = tuple(params)
    n = len(params)
    if settings is None:
        settings = replace(CONTROL_GUESS, valve_inhale=(0.5,) * n, valve_exhale=(0.5,) * n)
    params = _check_patients(params, settings)
    targets = np.broadcast_to(np.asarray(targets, dtype=float), (n,))
    tolerances = np.broadcast_to(np.asarray(tolerances, dtype=float), (n,))
    if np.any(tolerances <= 0.0):
        raise ConfigurationError("Tidal volume tolerances must be positive")
    if peep_preference < 0.0:
        raise ConfigurationError("The PEEP preference must be nonnegative")

    constant = mode == 'constant'
    valve_start = 2 if constant else 0
    breath = BreathModel(settings, patients=params, valve_start=valve_start,
                         pressure_start=0 if constant else None, pressure_input=not constant)
    lower = [bounds.pip[0], bounds.peep[0]] if constant else []
    upper = [bounds.pip[1], bounds.peep[1]] if constant else []
    guess = [_initial_value(settings.pip, settings.t0), _initial_value(settings.peep, settings.t0)] if constant else []
    names = ['V_I', 'V_E'] if constant else []
    lower += [bounds.valve[0]] * 2 * n
    upper += [bounds.valve[1]] * 2 * n
    guess += list(settings.valve_inhale) + list(settings.valve_exhale)
    names += [f"a_I_{p + 1}" for p in range(n)] + [f"a_E_{p + 1}" for p in range(n)]
    n_theta = len(lower)

    def power(phase):
        preference = peep_preference if phase == EXHALE else 0.0

        def running(x, u, theta, t):
            pressure = breath.pressure_of(phase, u, theta, t)
            return pressure * (breath.flow(x, u).sum(axis=0) - preference)
        return running

    inhale_range, period_range = bounds.inhale, bounds.period
    horizons = {
        INHALE: VariableHorizon((0.0, 0.0), inhale_range, guess=(0.0, settings.t_inhale)),
        EXHALE: VariableHorizon(inhale_range, period_range, guess=(settings.t_inhale, settings.period)),
    }
    pressure_range = {INHALE: bounds.pip, EXHALE: bounds.peep}
    phases = tuple(
        breath.phase_problem(phase, horizons[phase], n_theta=n_theta, theta_lower=np.array(lower),
                             theta_upper=np.array(upper), theta_guess=np.array(guess), theta_names=names,
                             running_cost=power(phase), pressure_bounds=pressure_range[phase],
                             name=f"control-{phase}")
        for phase in PHASES)
    (period_lo, period_hi), (ratio_lo, ratio_hi) = period_range, bounds.ratio
    compliance = patient_arrays(params).compliance.reshape(-1)

    def limits(ends, theta):
        t_in = ends[0].tf - ends[0].t0
        t_ex = ends[1].tf - ends[1].t0
        period = ends[1].tf - ends[0].t0
        rows = [period - period_hi, period_lo - period, t_in - ratio_hi * t_ex, ratio_lo * t_ex - t_in]
        for p in range(n):
            exhaled = compliance[p] * (ends[0].xf[p] - ends[1].xf[p])
            rows += [exhaled - targets[p] - tolerances[p], targets[p] - tolerances[p] - exhaled]
        return np.array(rows)

    return PhaseStack(phases=phases, links=breath.links(), boundary_ineq=limits, n_ineq=4 + 2 * n,
                      name=f"ventilator-control-{mode}", meta={'breath': breath, 'mode': mode})


@dataclass
class ControlResult:
    settings: VentilatorSettings
    energy: float
    tidal_volumes: List[TidalVolume]
    solution: StackSolution


def _settings_from(solution: StackSolution, breath: BreathModel) -> VentilatorSettings:
    theta = np.asarray(solution.theta, dtype=float)
    n = breath.n_patients
    inhale, exhale = solution.phases
    if breath.pressure_input:
        pip = lambda t: inhale.inputs.evaluate(t)[-1]  # noqa: E731
        peep = lambda t: exhale.inputs.evaluate(t)[-1]  # noqa: E731
    else:
        pip, peep = float(theta[breath.pressure_start]), float(theta[breath.pressure_start + 1])
    valves = np.clip(theta[breath.valve_start:breath.valve_start + 2 * n], 0.0, 1.0)
    return replace(breath.settings, pip=pip, peep=peep, valve_inhale=tuple(valves[:n]),
                   valve_exhale=tuple(valves[n:]), t_inhale=inhale.tf - inhale.t0,
                   t_exhale=exhale.tf - exhale.t0, t0=inhale.t0)


def _control_guess(previous: ControlResult, breath: BreathModel, theta: np.ndarray) -> List[Guess]:
    """Trajectories of a previous control solution in the layout of ``breath``."""
    n = breath.n_patients
    guesses = []
    for phase, part in zip(PHASES, previous.solution.phases):
        def inputs(t, phase=phase, part=part):
            rows = [part.inputs.evaluate(t)[:n]]
            if breath.pressure_input:
                rows.append(previous.settings.pressure(phase, t)[None, :])
            return np.vstack(rows)
        guesses.append(Guess(state=part.state.evaluate, inputs=inputs, theta=theta,
                             terminal=part.state.final_value()))
    return guesses


def solve_control(params: Sequence[PatientParams], targets=0.5, tolerances=0.005,
                  bounds: Optional[ControlBounds] = None, mode: str = 'constant',
                  settings: Optional[VentilatorSettings] = None, mesh: Optional[Mesh] = None,
                  scheme: Union[str, Scheme] = DEFAULT_SCHEME, solver_options: Optional[SolverOptions] = None,
                  previous: Optional[ControlResult] = None) -> ControlResult:
    """
    Solve the minimum-energy control problem.

    Args:
        previous: Control result to start from, in either pressure mode; its
            settings replace ``settings`` when those are not given. Without
            it the breath of ``settings`` is simulated.

    Raises:
        SolverFailure: the NLP did not converge (e.g. unreachable targets).
    """
    if previous is not None and settings is None:
        settings = previous.settings
    stack = build_control_dop(params, targets, tolerances, bounds, mode, settings)
    breath: BreathModel = stack.meta['breath']
    if previous is not None:
        guess = _control_guess(previous, breath, stack.initial_theta())
    else:
        guess = _simulated_guess(breath, breath.patients, stack.initial_theta())
    solution = _solve_stack(stack, mesh, scheme, solver_options, guess)
    used = energy(solution)
    tidal = [tidal_volume(solution, p) for p in range(breath.n_patients)]
    logger.info("Control (%s): energy %.6g cmH2O*L, tidal volumes %s", mode, used,
                ', '.join(f"{t.value:.4f}" for t in tidal))
    return ControlResult(settings=_settings_from(solution, breath), energy=used, tidal_volumes=tidal,
                         solution=solution)


__all__ = [
    'INHALE', 'EXHALE', 'PHASES', 'PatientParams', 'REFERENCE_PATIENTS', 'GUESS_PATIENT', 'PatientArrays',
    'patient_arrays', 'VentilatorSettings', 'MeasurementSet', 'EstimationConfig', 'combined_resistance',
    'dynamics_residual', 'flow_from_pressure', 'FlowOde', 'dae_to_ode', 'BreathSimulation', 'simulate_breath',
    'measurement_times', 'synthesize_measurements', 'BreathModel', 'build_breath_problem',
    'inhale_phase_problem', 'build_estimation_dop', 'TidalVolume', 'tidal_volume', 'energy', 'solve_breath',
    'EstimationResult', 'estimate_parameters', 'TidalBounds', 'tidal_volume_bounds', 'ControlBounds',
    'CONTROL_GUESS', 'build_control_dop', 'ControlResult', 'solve_control',
]
