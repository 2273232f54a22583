import json
import os

import pandas as pd
import pytest

from dynopt.cli import EXIT_INPUT, EXIT_SOLVER, VERSION, CommandRunner, ScenarioRunner, main
from dynopt.errors import ConfigurationError, SolverFailure
from dynopt.refine import HISTORY_COLUMNS
from dynopt.results_handler import read_scenario_document, read_summary


def _write_scenario(tmp_path, name='case.json', **fields):
    doc = {'schema': 1, 'name': 'double-integrator',
           'problem': {'kind': 'builtin', 'name': 'double-integrator'},
           'scheme': 'LGR(3)', 'mesh': {'intervals': 4}}
    doc.update(fields)
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2), encoding='utf-8')
    return str(path)


class TestCliUnit:
    """Unit tests for argument handling and exit codes."""

    @pytest.mark.unit
    def test_version(self, capsys):
        """UT1101: --version - Should print the version and exit 0."""
        with pytest.raises(SystemExit) as info:
            main(['--version'])
        assert info.value.code == 0
        assert VERSION in capsys.readouterr().out

    @pytest.mark.unit
    def test_no_command(self, capsys):
        """UT1102: No command - Should print help and exit with the input code."""
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == EXIT_INPUT
        assert 'solve' in capsys.readouterr().out

    @pytest.mark.unit
    def test_unknown_command(self):
        """UT1103: CommandRunner with an unknown command - Should raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            CommandRunner('plot', 'x.json')

    @pytest.mark.unit
    def test_invalid_scenario(self, tmp_path):
        """UT1104: Scenario with an unknown field - Should exit 2 and write nothing."""
        path = _write_scenario(tmp_path, sheme='TR')
        out = tmp_path / 'out'
        with pytest.raises(SystemExit) as info:
            main(['solve', path, '--out', str(out)])
        assert info.value.code == EXIT_INPUT
        assert not out.exists()

    @pytest.mark.unit
    def test_missing_scenario(self, tmp_path):
        """UT1105: Scenario path that does not exist - Should exit 2."""
        with pytest.raises(SystemExit) as info:
            main(['solve', str(tmp_path / 'absent.json')])
        assert info.value.code == EXIT_INPUT

    @pytest.mark.unit
    def test_solver_failure(self, tmp_path, mocker):
        """UT1106: Solver failure during the run - Should exit 3 and leave no partial artifacts."""
        mocker.patch.object(ScenarioRunner, 'solve_builtin', side_effect=SolverFailure('did not converge'))
        path = _write_scenario(tmp_path)
        out = tmp_path / 'out'
        with pytest.raises(SystemExit) as info:
            main(['solve', path, '--out', str(out)])
        assert info.value.code == EXIT_SOLVER
        assert not out.exists()
        assert sorted(os.listdir(tmp_path)) == ['case.json']

    @pytest.mark.unit
    def test_wrong_problem_kind(self, tmp_path):
        """UT1107: estimate on a built-in problem - Should exit 2."""
        path = _write_scenario(tmp_path)
        with pytest.raises(SystemExit) as info:
            main(['estimate', path, '--out', str(tmp_path / 'out')])
        assert info.value.code == EXIT_INPUT

    @pytest.mark.unit
    def test_runner_reports_exit_code(self, tmp_path):
        """UT1108: CommandRunner on a broken file - Should return failure and keep the exit code."""
        path = tmp_path / 'broken.json'
        path.write_text('{"schema": 1,', encoding='utf-8')
        runner = CommandRunner('solve', str(path))
        success, message = runner.run()
        assert not success
        assert runner.exit_code == EXIT_INPUT
        assert 'Invalid JSON' in message


class TestCliE2E:
    """End-to-end tests running whole commands."""

    @pytest.mark.e2e
    def test_solve_and_errors(self, tmp_path):
        """E2E001: solve then errors on the double integrator - Should write every artifact."""
        path = _write_scenario(tmp_path)
        out = tmp_path / 'out'
        main(['solve', path, '--out', str(out), '--tol', '1e-10'])
        assert sorted(os.listdir(out)) == ['history.csv', 'scenario.json', 'solution.csv', 'solution.npz',
                                           'summary.json']
        summary = read_summary(str(out))
        assert summary['status'] == 'Optimal'
        assert summary['cost'] == pytest.approx(12.0, rel=1e-6)
        assert summary['rounds'] == 1
        assert summary['scheme'] == 'LGR(3)'
        assert read_scenario_document(str(out))['solver']['tol'] == 1e-10
        history = pd.read_csv(out / 'history.csv')
        assert list(history.columns) == HISTORY_COLUMNS
        solution = pd.read_csv(out / 'solution.csv')
        assert {'position', 'velocity', 'force'} <= set(solution.columns)

        main(['errors', str(out)])
        errors = pd.read_csv(out / 'errors.csv')
        assert len(errors) == 4
        assert (errors['zeta'] >= 0.0).all()

    @pytest.mark.e2e
    def test_solve_with_refinement(self, tmp_path):
        """E2E002: Growth problem with a refine section - Should record one history row per round."""
        path = _write_scenario(tmp_path, problem={'kind': 'builtin', 'name': 'exponential-growth'},
                               scheme='Trapezoidal', mesh={'intervals': 2},
                               refine={'eta_tol': 1e-3, 'max_rounds': 8})
        out = tmp_path / 'out'
        main(['solve', path, '--out', str(out)])
        summary = read_summary(str(out))
        history = pd.read_csv(out / 'history.csv')
        assert len(history) == summary['rounds'] > 1
        assert summary['max_zeta'] <= 1e-3

    @pytest.mark.e2e
    def test_compare(self, tmp_path):
        """E2E003: compare with two schemes - Should write the table and fitted orders."""
        path = _write_scenario(tmp_path, problem={'kind': 'builtin', 'name': 'exponential-growth'},
                               compare={'schemes': ['TR', 'HS'], 'intervals': [4, 8, 16]})
        out = tmp_path / 'out'
        main(['compare', path, '--out', str(out)])
        table = pd.read_csv(out / 'table.csv')
        assert len(table) == 6
        summary = read_summary(str(out))
        assert set(summary['orders']) == {'Trapezoidal', 'HermiteSimpson'}
        assert summary['orders']['HermiteSimpson'] > summary['orders']['Trapezoidal']


SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'scenarios')


class TestCliScenarios:
    """End-to-end runs of the bundled ventilator scenarios."""

    @pytest.mark.e2e
    @pytest.mark.slow
    def test_same_seed_same_summary(self, tmp_path):
        """E2E004: Noisy estimate run twice with one seed - Should write byte-identical summaries."""
        with open(os.path.join(SCENARIOS, 'ventilator_estimation.json'), encoding='utf-8') as f:
            doc = json.load(f)
        doc['problem'].update(noise=0.002, noise_bound=0.005)
        path = tmp_path / 'noisy.json'
        path.write_text(json.dumps(doc, indent=2), encoding='utf-8')
        outputs = []
        for name in ('first', 'second'):
            out = tmp_path / name
            main(['estimate', str(path), '--out', str(out), '--seed', '5'])
            outputs.append((out / 'summary.json').read_bytes())
        assert outputs[0] == outputs[1]
        assert json.loads(outputs[0])['seed'] == 5

    @pytest.mark.e2e
    @pytest.mark.slow
    def test_bundled_estimation(self, tmp_path):
        """E2E005: Bundled noiseless estimation scenario - Should recover C1 near 0.54 and C2 near 0.49."""
        out = tmp_path / 'out'
        main(['estimate', os.path.join(SCENARIOS, 'ventilator_estimation.json'), '--out', str(out)])
        summary = read_summary(str(out))
        assert summary['status'] == 'Optimal'
        compliances = [p['compliance'] for p in summary['patients']]
        assert compliances == pytest.approx([0.54, 0.49], rel=0.05)
        assert summary['tidal_bounds'] == []

    @pytest.mark.e2e
    @pytest.mark.slow
    def test_bundled_constant_control(self, tmp_path):
        """E2E006: Bundled constant-pressure control scenario - Should hit the 0.5 L target at PEEP 20."""
        out = tmp_path / 'out'
        main(['control', os.path.join(SCENARIOS, 'ventilator_control_constant.json'), '--out', str(out)])
        summary = read_summary(str(out))
        constant = summary['constant']
        assert summary['saved_mode'] == 'constant'
        assert constant['status'] == 'Optimal'
        assert constant['settings']['peep'] == pytest.approx(20.0, abs=0.2)
        for volume in constant['tidal_volumes']:
            assert volume == pytest.approx(0.5, abs=0.005 + 1e-6)
        assert summary['energy'] == pytest.approx(constant['energy'])
