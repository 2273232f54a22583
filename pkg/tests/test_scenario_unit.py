import glob
import json
import os

import pytest

from dynopt.errors import ScenarioError
from dynopt.scenario import (SCHEMA_VERSION, ControlSpec, EstimationSpec, apply_overrides, load_scenario,
                             parse_document, parse_scenario)
from dynopt.ventilator import REFERENCE_PATIENTS

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), '..', 'scenarios')


def _doc(**fields):
    doc = {'schema': SCHEMA_VERSION, 'problem': {'kind': 'builtin', 'name': 'exponential-growth'}}
    doc.update(fields)
    return doc


class TestScenarioParsingUnit:
    """Unit tests for scenario validation."""

    @pytest.mark.unit
    def test_minimal_builtin(self):
        """UT901: Smallest valid document - Should fill every default."""
        scenario = parse_document(_doc())
        assert scenario.kind == 'builtin'
        assert scenario.problem.name == 'exponential-growth'
        assert scenario.scheme == 'HermiteSimpson'
        assert scenario.method == 'collocation'
        assert scenario.mesh.intervals == 10
        assert scenario.refine is None
        assert scenario.seed == 0

    @pytest.mark.unit
    @pytest.mark.parametrize('path', sorted(glob.glob(os.path.join(SCENARIO_DIR, '*.json'))))
    def test_bundled_scenarios(self, path):
        """UT902: Bundled scenario files - Should all validate."""
        scenario = load_scenario(path)
        assert scenario.source == path
        assert scenario.output.startswith('results')

    @pytest.mark.unit
    def test_unknown_field_with_line(self):
        """UT903: Misspelled top-level field - Should name the field and its line."""
        text = '{\n  "schema": 1,\n  "problem": {"kind": "builtin", "name": "double-integrator"},\n  "sheme": "TR"\n}'
        with pytest.raises(ScenarioError) as info:
            parse_scenario(text)
        assert info.value.field == 'sheme'
        assert info.value.line == 4

    @pytest.mark.unit
    def test_unknown_nested_field(self):
        """UT904: Unknown solver option - Should report the dotted path."""
        with pytest.raises(ScenarioError) as info:
            parse_document(_doc(solver={'tolerance': 1e-8}))
        assert info.value.field == 'solver.tolerance'

    @pytest.mark.unit
    def test_invalid_json(self):
        """UT905: Broken JSON - Should raise ScenarioError with the line of the problem."""
        with pytest.raises(ScenarioError) as info:
            parse_scenario('{\n  "schema": 1,\n  oops\n}')
        assert info.value.line == 3

    @pytest.mark.unit
    @pytest.mark.parametrize('fields, where', [
        ({'schema': 2}, 'schema'),
        ({'scheme': 'leapfrog'}, 'scheme'),
        ({'method': 'shooting'}, 'method'),
        ({'mesh': {'intervals': 0}}, 'mesh.intervals'),
        ({'mesh': {'intervals': 2.5}}, 'mesh.intervals'),
        ({'refine': {'strategy': 'Trisect'}}, 'refine'),
        ({'seed': True}, 'seed'),
        ({'problem': {'kind': 'builtin', 'name': 'pendulum'}}, 'problem.name'),
        ({'problem': {'kind': 'rocket'}}, 'problem.kind'),
    ])
    def test_invalid_values(self, fields, where):
        """UT906: Invalid values - Should raise ScenarioError naming the field."""
        with pytest.raises(ScenarioError) as info:
            parse_document(_doc(**fields))
        assert info.value.field == where

    @pytest.mark.unit
    def test_missing_problem(self):
        """UT907: Document without a problem - Should report the missing field."""
        with pytest.raises(ScenarioError) as info:
            parse_document({'schema': SCHEMA_VERSION})
        assert info.value.field == 'problem'

    @pytest.mark.unit
    def test_refine_and_solver_sections(self):
        """UT908: Refinement and solver sections - Should build their option objects."""
        scenario = parse_document(_doc(refine={'eta_tol': 1e-5, 'max_rounds': 4, 'strategy': 'Hybrid'},
                                       solver={'tol': 1e-9, 'max_iter': 300}))
        assert scenario.refine.eta_tol == 1e-5 and scenario.refine.strategy == 'Hybrid'
        assert scenario.solver.tol == 1e-9 and scenario.solver.max_iter == 300


class TestVentilatorScenarioUnit:
    """Unit tests for ventilator problem sections."""

    @pytest.mark.unit
    def test_estimation_defaults(self):
        """UT909: Estimation without patients - Should use the reference patients."""
        scenario = parse_document(_doc(problem={'kind': 'ventilator-estimation', 'patient_flows': [0]}))
        spec = scenario.problem
        assert isinstance(spec, EstimationSpec)
        assert spec.patients == REFERENCE_PATIENTS
        assert spec.settings.n_patients == 2
        assert spec.patient_flows == (0,)
        assert spec.config.disturbance_bound == 0.005

    @pytest.mark.unit
    def test_estimation_bad_patient_index(self):
        """UT910: Branch reading for a missing patient - Should raise ScenarioError."""
        with pytest.raises(ScenarioError) as info:
            parse_document(_doc(problem={'kind': 'ventilator-estimation', 'patient_flows': [2]}))
        assert info.value.field == 'problem.patient_flows'

    @pytest.mark.unit
    def test_patient_entry_validation(self):
        """UT911: Patient with zero compliance - Should report the patient path."""
        problem = {'kind': 'ventilator-estimation',
                   'patients': [{'compliance': 0.0, 'r_inhale': 10.0, 'r_exhale': 10.0}]}
        with pytest.raises(ScenarioError) as info:
            parse_document(_doc(problem=problem))
        assert info.value.field == 'problem.patients[0]'

    @pytest.mark.unit
    def test_control_targets(self):
        """UT912: Scalar targets - Should broadcast to every patient."""
        scenario = parse_document(_doc(problem={'kind': 'ventilator-control', 'targets': 0.45, 'mode': 'constant'}))
        spec = scenario.problem
        assert isinstance(spec, ControlSpec)
        assert spec.targets == (0.45, 0.45)
        assert spec.tolerances == (0.005, 0.005)
        assert spec.limits.pip == (15.0, 35.0)

    @pytest.mark.unit
    def test_control_target_count(self):
        """UT913: Three targets for two patients - Should raise ScenarioError."""
        with pytest.raises(ScenarioError):
            parse_document(_doc(problem={'kind': 'ventilator-control', 'targets': [0.5, 0.5, 0.5]}))

    @pytest.mark.unit
    def test_control_limits(self):
        """UT914: Reversed pressure limits - Should raise ScenarioError."""
        problem = {'kind': 'ventilator-control', 'limits': {'pip': [35.0, 15.0]}}
        with pytest.raises(ScenarioError) as info:
            parse_document(_doc(problem=problem))
        assert info.value.field == 'problem.limits'


class TestOverridesUnit:
    """Unit tests for command-line overrides."""

    @pytest.mark.unit
    def test_overrides_written(self):
        """UT915: Tolerance, rounds, seed and scheme - Should land in their sections."""
        original = _doc(refine={'eta_tol': 1e-6})
        doc = apply_overrides(original, tol=1e-4, max_rounds=3, seed=9, scheme='LGR(4)', output='out')
        assert doc['solver']['tol'] == 1e-4
        assert doc['refine'] == {'eta_tol': 1e-4, 'max_rounds': 3}
        assert doc['seed'] == 9 and doc['scheme'] == 'LGR(4)' and doc['output'] == 'out'
        assert 'solver' not in original

    @pytest.mark.unit
    def test_tolerance_without_refine(self):
        """UT916: Tolerance override without a refine section - Should only touch the solver."""
        doc = apply_overrides(_doc(), tol=1e-7)
        assert 'refine' not in doc
        assert parse_document(doc).solver.tol == 1e-7

    @pytest.mark.unit
    def test_load_with_overrides(self, tmp_path):
        """UT917: Scenario file with a seed override - Should validate the overridden document."""
        path = tmp_path / 'case.json'
        path.write_text(json.dumps(_doc(seed=1)), encoding='utf-8')
        scenario = load_scenario(str(path), seed=5)
        assert scenario.seed == 5
        assert scenario.document['seed'] == 5

    @pytest.mark.unit
    def test_missing_file(self, tmp_path):
        """UT918: Scenario path that does not exist - Should raise ScenarioError."""
        with pytest.raises(ScenarioError):
            load_scenario(str(tmp_path / 'absent.json'))
