"""
Scenario documents: JSON files describing one numerical experiment.

A scenario names a problem (a built-in, a ventilator estimation or a
ventilator control), how to transcribe and solve it, where results go and
the seed of any randomness. Unknown fields are rejected with their path and,
when it can be found, their line in the file.
"""
import copy
import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

from .builtin_problems import BUILTIN_PROBLEMS
from .errors import ConfigurationError, ScenarioError
from .refine import RefineConfig
from .schemes import Scheme
from .solver_interface import SolverOptions
from .ventilator import (FORMS, MODELS, PRESSURE_MODES, REFERENCE_PATIENTS, ControlBounds, EstimationConfig,
                         PatientParams, VentilatorSettings)

SCHEMA_VERSION = 1
KINDS = ('builtin', 'ventilator-estimation', 'ventilator-control')
METHODS = ('collocation', 'integrated-residual', 'residual-minimize', 'runge-kutta')
_MISSING = object()

TOP_FIELDS = ('schema', 'name', 'problem', 'scheme', 'method', 'tableau', 'mesh', 'refine', 'solver', 'compare',
              'output', 'seed')
MESH_FIELDS = ('intervals', 'state_degree')
REFINE_FIELDS = ('eta_tol', 'eta_g', 'cost_tol', 'max_rounds', 'strategy', 'norm', 'max_degree', 'warm_start')
SOLVER_FIELDS = ('tol', 'max_iter', 'mu_init', 'hessian', 'kkt', 'scaling')
COMPARE_FIELDS = ('schemes', 'intervals')
PATIENT_FIELDS = ('compliance', 'r_inhale', 'r_exhale', 'rq_inhale', 'rq_exhale')
SETTINGS_FIELDS = ('pip', 'peep', 'valve_inhale', 'valve_exhale', 't_inhale', 't_exhale', 'r_delta', 'r_delta_q')
ESTIMATION_FIELDS = ('kind', 'patients', 'settings', 'noise', 'noise_bound', 'per_phase', 'volume',
                     'patient_flows', 'patient_volumes', 'model', 'form', 'bounds', 'weights')
WEIGHT_FIELDS = ('noise_weight', 'disturbance_weight', 'disturbance_bound')
CONTROL_FIELDS = ('kind', 'patients', 'targets', 'tolerances', 'mode', 'limits', 'settings')
LIMIT_FIELDS = ('rate', 'ratio', 'pip', 'peep', 'valve')
BUILTIN_FIELDS = ('kind', 'name')


@dataclass(frozen=True)
class MeshSpec:
    intervals: int = 10
    state_degree: Optional[int] = None


@dataclass(frozen=True)
class CompareSpec:
    schemes: Tuple[str, ...] = ('Trapezoidal', 'HermiteSimpson')
    intervals: Tuple[int, ...] = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class BuiltinSpec:
    name: str


@dataclass(frozen=True, eq=False)
class EstimationSpec:
    patients: Tuple[PatientParams, ...]
    settings: VentilatorSettings
    config: EstimationConfig
    noise: float = 0.005
    noise_bound: float = 0.005
    per_phase: int = 3
    volume: bool = True
    patient_flows: Tuple[int, ...] = ()
    patient_volumes: Tuple[int, ...] = ()
    model: str = 'quadratic'
    form: str = 'dae'
    bounds: bool = True


@dataclass(frozen=True, eq=False)
class ControlSpec:
    patients: Tuple[PatientParams, ...]
    targets: Tuple[float, ...]
    tolerances: Tuple[float, ...]
    limits: ControlBounds
    mode: str = 'both'
    settings: Optional[VentilatorSettings] = None


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario with the document it came from."""
    kind: str
    problem: Any
    document: Dict[str, Any]
    name: str = 'scenario'
    scheme: str = 'HermiteSimpson'
    method: str = 'collocation'
    tableau: str = 'rk4'
    mesh: MeshSpec = MeshSpec()
    refine: Optional[RefineConfig] = None
    solver: SolverOptions = SolverOptions()
    compare: CompareSpec = CompareSpec()
    output: str = 'results'
    seed: int = 0
    source: str = '<string>'
    meta: Dict[str, Any] = field(default_factory=dict)


class _Reader:
    """Typed field access with paths and line lookup into the source text."""

    def __init__(self, text: str):
        self.text = text

    def line_of(self, key: Optional[str]) -> Optional[int]:
        if not key or not self.text:
            return None
        match = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count('\n', 0, match.start()) + 1 if match else None

    def fail(self, message: str, path: str) -> ScenarioError:
        return ScenarioError(message, field=path, line=self.line_of(path.rsplit('.', 1)[-1].split('[')[0]))

    def section(self, data: Any, allowed: Tuple[str, ...], path: str) -> Dict[str, Any]:
        if not isinstance(data, dict):
            raise self.fail("Expected an object", path or '<root>')
        for key in data:
            if key not in allowed:
                raise ScenarioError(f"Unknown field '{key}'", field=_join(path, key), line=self.line_of(key))
        return data

    def get(self, data: Dict[str, Any], key: str, kind: str, path: str, default: Any = _MISSING) -> Any:
        where = _join(path, key)
        if key not in data:
            if default is _MISSING:
                raise self.fail("Missing required field", where)
            return default
        value = data[key]
        if value is None and default is None:
            return None
        check: Callable[[Any], bool] = _CHECKS[kind]
        if not check(value):
            raise self.fail(f"Expected {kind}, got {type(value).__name__}", where)
        if kind == 'number':
            return float(value)
        if kind in ('numbers', 'integers', 'strings'):
            return tuple(float(v) if kind == 'numbers' else v for v in value)
        return value

    def build(self, factory: Callable[..., Any], path: str, **kwargs) -> Any:
        try:
            return factory(**kwargs)
        except (ConfigurationError, TypeError, ValueError) as exc:
            raise self.fail(str(exc), path) from exc


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


_CHECKS: Dict[str, Callable[[Any], bool]] = {
    'number': _is_number,
    'integer': _is_int,
    'string': lambda v: isinstance(v, str),
    'boolean': lambda v: isinstance(v, bool),
    'object': lambda v: isinstance(v, dict),
    'numbers': lambda v: isinstance(v, list) and all(_is_number(x) for x in v),
    'integers': lambda v: isinstance(v, list) and all(_is_int(x) for x in v),
    'strings': lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
    'number or numbers': lambda v: _is_number(v) or (isinstance(v, list) and all(_is_number(x) for x in v)),
    'number or matrix': lambda v: _is_number(v) or (isinstance(v, list) and all(
        _is_number(x) or (isinstance(x, list) and all(_is_number(y) for y in x)) for x in v)),
}


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _choice(reader: _Reader, value: str, choices, path: str) -> str:
    if value not in choices:
        raise reader.fail(f"'{value}' is not one of {tuple(choices)}", path)
    return value


def _patients(reader: _Reader, data: Dict[str, Any], path: str) -> Tuple[PatientParams, ...]:
    if 'patients' not in data:
        return REFERENCE_PATIENTS
    raw = data['patients']
    if not isinstance(raw, list) or not raw:
        raise reader.fail("Expected a non-empty list of patients", _join(path, 'patients'))
    out = []
    for p, entry in enumerate(raw):
        where = f"{_join(path, 'patients')}[{p}]"
        entry = reader.section(entry, PATIENT_FIELDS, where)
        values = {key: reader.get(entry, key, 'number', where, 0.0 if key.startswith('rq') else _MISSING)
                  for key in PATIENT_FIELDS}
        out.append(reader.build(PatientParams, where, **values))
    return tuple(out)


def _settings(reader: _Reader, data: Optional[Dict[str, Any]], path: str, n: int) -> VentilatorSettings:
    data = reader.section(data if data is not None else {}, SETTINGS_FIELDS, path)
    defaults = VentilatorSettings(valve_inhale=(0.0,) * n, valve_exhale=(0.0,) * n)
    values = {}
    for key in SETTINGS_FIELDS:
        kind = 'numbers' if key.startswith('valve') else 'number'
        values[key] = reader.get(data, key, kind, path, getattr(defaults, key))
    return reader.build(VentilatorSettings, path, **values)


def _per_patient(reader: _Reader, data, key: str, n: int, default: float, path: str) -> Tuple[float, ...]:
    value = reader.get(data, key, 'number or numbers', path, default)
    values = (float(value),) * n if _is_number(value) else tuple(float(v) for v in value)
    if len(values) != n:
        raise reader.fail(f"Expected one value per patient ({n})", _join(path, key))
    return values


def _estimation(reader: _Reader, data: Dict[str, Any]) -> EstimationSpec:
    path = 'problem'
    data = reader.section(data, ESTIMATION_FIELDS, path)
    patients = _patients(reader, data, path)
    n = len(patients)
    weights = reader.section(reader.get(data, 'weights', 'object', path, {}), WEIGHT_FIELDS, 'problem.weights')
    config = reader.build(
        EstimationConfig, 'problem.weights',
        noise_weight=reader.get(weights, 'noise_weight', 'number or matrix', 'problem.weights', 1.0),
        disturbance_weight=reader.get(weights, 'disturbance_weight', 'number or numbers', 'problem.weights', 1e-3),
        disturbance_bound=reader.get(weights, 'disturbance_bound', 'number', 'problem.weights', 0.005))
    spec = EstimationSpec(
        patients=patients,
        settings=_settings(reader, data.get('settings'), 'problem.settings', n),
        config=config,
        noise=reader.get(data, 'noise', 'number', path, 0.005),
        noise_bound=reader.get(data, 'noise_bound', 'number', path, 0.005),
        per_phase=reader.get(data, 'per_phase', 'integer', path, 3),
        volume=reader.get(data, 'volume', 'boolean', path, True),
        patient_flows=reader.get(data, 'patient_flows', 'integers', path, ()),
        patient_volumes=reader.get(data, 'patient_volumes', 'integers', path, ()),
        model=_choice(reader, reader.get(data, 'model', 'string', path, 'quadratic'), MODELS, 'problem.model'),
        form=_choice(reader, reader.get(data, 'form', 'string', path, 'dae'), FORMS, 'problem.form'),
        bounds=reader.get(data, 'bounds', 'boolean', path, True),
    )
    if spec.noise < 0.0 or spec.noise_bound < 0.0:
        raise reader.fail("Noise values must be nonnegative", 'problem.noise')
    if spec.per_phase < 1:
        raise reader.fail("At least one reading per phase is required", 'problem.per_phase')
    for key in ('patient_flows', 'patient_volumes'):
        if any(not 0 <= p < n for p in getattr(spec, key)):
            raise reader.fail(f"Patient indices must lie in 0..{n - 1}", _join(path, key))
    return spec


def _control(reader: _Reader, data: Dict[str, Any]) -> ControlSpec:
    path = 'problem'
    data = reader.section(data, CONTROL_FIELDS, path)
    patients = _patients(reader, data, path)
    n = len(patients)
    limits = reader.section(reader.get(data, 'limits', 'object', path, {}), LIMIT_FIELDS, 'problem.limits')
    defaults = ControlBounds()
    ranges = {}
    for key in LIMIT_FIELDS:
        value = reader.get(limits, key, 'numbers', 'problem.limits', getattr(defaults, key))
        if len(value) != 2:
            raise reader.fail("Expected [lower, upper]", f"problem.limits.{key}")
        ranges[key] = tuple(value)
    settings = None
    if 'settings' in data:
        settings = _settings(reader, data['settings'], 'problem.settings', n)
    mode = reader.get(data, 'mode', 'string', path, 'both')
    return ControlSpec(
        patients=patients,
        targets=_per_patient(reader, data, 'targets', n, 0.5, path),
        tolerances=_per_patient(reader, data, 'tolerances', n, 0.005, path),
        limits=reader.build(ControlBounds, 'problem.limits', **ranges),
        mode=_choice(reader, mode, PRESSURE_MODES + ('both',), 'problem.mode'),
        settings=settings,
    )


def _builtin(reader: _Reader, data: Dict[str, Any]) -> BuiltinSpec:
    data = reader.section(data, BUILTIN_FIELDS, 'problem')
    name = reader.get(data, 'name', 'string', 'problem')
    return BuiltinSpec(name=_choice(reader, name, sorted(BUILTIN_PROBLEMS), 'problem.name'))


_PROBLEMS = {'builtin': _builtin, 'ventilator-estimation': _estimation, 'ventilator-control': _control}


def parse_document(document: Dict[str, Any], text: str = '', source: str = '<string>') -> Scenario:
    """Validate a decoded scenario document."""
    reader = _Reader(text)
    doc = reader.section(document, TOP_FIELDS, '')
    schema = reader.get(doc, 'schema', 'integer', '')
    if schema != SCHEMA_VERSION:
        raise reader.fail(f"Unsupported schema {schema}, expected {SCHEMA_VERSION}", 'schema')
    problem = reader.get(doc, 'problem', 'object', '')
    kind = _choice(reader, reader.get(problem, 'kind', 'string', 'problem'), KINDS, 'problem.kind')
    spec = _PROBLEMS[kind](reader, problem)

    scheme = reader.get(doc, 'scheme', 'string', '', 'HermiteSimpson')
    try:
        Scheme.parse(scheme)
    except ConfigurationError as exc:
        raise reader.fail(str(exc), 'scheme') from exc
    method = _choice(reader, reader.get(doc, 'method', 'string', '', 'collocation'), METHODS, 'method')

    mesh_doc = reader.section(reader.get(doc, 'mesh', 'object', '', {}), MESH_FIELDS, 'mesh')
    mesh = MeshSpec(intervals=reader.get(mesh_doc, 'intervals', 'integer', 'mesh', 10),
                    state_degree=reader.get(mesh_doc, 'state_degree', 'integer', 'mesh', None))
    if mesh.intervals < 1:
        raise reader.fail("A mesh needs at least one interval", 'mesh.intervals')

    refine = None
    if 'refine' in doc:
        refine_doc = reader.section(doc['refine'], REFINE_FIELDS, 'refine')
        kinds = {'max_rounds': 'integer', 'max_degree': 'integer', 'strategy': 'string', 'norm': 'string',
                 'warm_start': 'boolean'}
        values = {key: reader.get(refine_doc, key, kinds.get(key, 'number'), 'refine')
                  for key in REFINE_FIELDS if key in refine_doc}
        refine = reader.build(RefineConfig, 'refine', **values)

    solver_doc = reader.section(reader.get(doc, 'solver', 'object', '', {}), SOLVER_FIELDS, 'solver')
    kinds = {'max_iter': 'integer', 'hessian': 'string', 'kkt': 'string', 'scaling': 'boolean'}
    solver = reader.build(SolverOptions, 'solver', **{key: reader.get(solver_doc, key, kinds.get(key, 'number'),
                                                                      'solver')
                                                       for key in SOLVER_FIELDS if key in solver_doc})

    compare_doc = reader.section(reader.get(doc, 'compare', 'object', '', {}), COMPARE_FIELDS, 'compare')
    compare = CompareSpec(
        schemes=reader.get(compare_doc, 'schemes', 'strings', 'compare', CompareSpec.schemes),
        intervals=reader.get(compare_doc, 'intervals', 'integers', 'compare', CompareSpec.intervals))
    for text_scheme in compare.schemes:
        try:
            Scheme.parse(text_scheme)
        except ConfigurationError as exc:
            raise reader.fail(str(exc), 'compare.schemes') from exc
    if not compare.schemes or not compare.intervals or min(compare.intervals) < 1:
        raise reader.fail("Comparison needs schemes and positive interval counts", 'compare')

    seed = reader.get(doc, 'seed', 'integer', '', 0)
    return Scenario(kind=kind, problem=spec, document=copy.deepcopy(doc),
                    name=reader.get(doc, 'name', 'string', '', 'scenario'), scheme=scheme, method=method,
                    tableau=reader.get(doc, 'tableau', 'string', '', 'rk4'), mesh=mesh, refine=refine,
                    solver=solver, compare=compare, output=reader.get(doc, 'output', 'string', '', 'results'),
                    seed=seed, source=source)


def parse_scenario(text: str, source: str = '<string>') -> Scenario:
    """Decode and validate scenario text."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"Invalid JSON in {source}: {exc.msg}", line=exc.lineno) from exc
    return parse_document(document, text, source)


def read_document(path: str) -> Tuple[Dict[str, Any], str]:
    """Raw document and text of a scenario file."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioError(f"Cannot read scenario file {path}: {exc}") from exc
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"Invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc


def _subsection(doc: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = doc.setdefault(key, {})
    # a malformed section is reported by validation, not overwritten here
    return value if isinstance(value, dict) else {}


def apply_overrides(document: Dict[str, Any], tol: Optional[float] = None, max_rounds: Optional[int] = None,
                    seed: Optional[int] = None, scheme: Optional[str] = None,
                    output: Optional[str] = None) -> Dict[str, Any]:
    """Copy of the document with command-line values written in."""
    doc = copy.deepcopy(document)
    if not isinstance(doc, dict):
        return doc
    if tol is not None:
        _subsection(doc, 'solver')['tol'] = tol
        if 'refine' in doc:
            _subsection(doc, 'refine')['eta_tol'] = tol
    if max_rounds is not None:
        _subsection(doc, 'refine')['max_rounds'] = max_rounds
    if seed is not None:
        doc['seed'] = seed
    if scheme is not None:
        doc['scheme'] = scheme
    if output is not None:
        doc['output'] = output
    return doc


def load_scenario(path: str, **overrides) -> Scenario:
    """Read, override and validate a scenario file."""
    document, text = read_document(path)
    return parse_document(apply_overrides(document, **overrides), text, source=path)


__all__ = ['SCHEMA_VERSION', 'KINDS', 'MeshSpec', 'CompareSpec', 'BuiltinSpec', 'EstimationSpec', 'ControlSpec',
           'Scenario', 'parse_document', 'parse_scenario', 'read_document', 'apply_overrides', 'load_scenario']
