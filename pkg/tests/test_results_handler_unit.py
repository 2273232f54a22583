import os

import numpy as np
import pandas as pd
import pytest

from dynopt.poly import NodeKind, legendre_nodes
from dynopt.refine import ErrorReport
from dynopt.results_handler import (ERROR_COLUMNS, ResultsHandler, error_frame, load_solution, plain,
                                    read_scenario_document, read_summary, trajectory_frame)
from dynopt.trajectory import PiecewiseTrajectory, Solution, StackSolution


def _solution(phase=0, t0=0.0, tf=1.0):
    nodes = np.linspace(t0, tf, 3)
    lobatto = [legendre_nodes(NodeKind.LGL, 3).points] * 2
    state = PiecewiseTrajectory.from_samples(nodes, lobatto, lambda t: np.vstack([t * t, 1.0 - t]),
                                             terminal=np.array([tf * tf, 1.0 - tf]))
    inputs = PiecewiseTrajectory.constant(nodes, [4.0])
    return Solution(state=state, inputs=inputs, theta=np.array([0.25]), t0=t0, tf=tf, cost=1.5, status='Optimal',
                    iterations=7, phase=phase)


class TestPlainUnit:
    """Unit tests for JSON conversion."""

    @pytest.mark.unit
    def test_plain(self):
        """UT1001: numpy values and NaN - Should become plain Python values and None."""
        value = plain({'a': np.float64(1.5), 'b': np.arange(3), 'c': (np.int64(2), float('nan')), 4: np.inf})
        assert value == {'a': 1.5, 'b': [0, 1, 2], 'c': [2, None], '4': None}
        assert isinstance(value['a'], float)


class TestFramesUnit:
    """Unit tests for the CSV frames."""

    @pytest.mark.unit
    def test_trajectory_frame(self):
        """UT1002: One phase with named states - Should sample states and inputs on a uniform grid."""
        frame = trajectory_frame(_solution(), state_names=('position', 'speed'), samples=5)
        assert list(frame.columns) == ['phase', 't', 'position', 'speed', 'u0']
        np.testing.assert_allclose(frame['position'], frame['t'] ** 2, atol=1e-14)
        assert (frame['u0'] == 4.0).all()

    @pytest.mark.unit
    def test_stack_frame(self):
        """UT1003: Two phases - Should stack their rows with the phase index."""
        stack = StackSolution(phases=[_solution(0, 0.0, 1.0), _solution(1, 1.0, 2.0)], theta=np.zeros(1),
                              cost=3.0, status='Optimal', iterations=7)
        frame = trajectory_frame(stack, samples=4)
        assert len(frame) == 8
        assert frame['phase'].tolist() == [0] * 4 + [1] * 4

    @pytest.mark.unit
    def test_error_frame(self):
        """UT1004: Solution with an error report - Should give one row per interval."""
        solution = _solution()
        zeta = np.array([1e-3, 2e-3])
        solution.errors = ErrorReport(zeta=zeta, componentwise=zeta[:, None], zeta_max=2.0 * zeta, relative=zeta,
                                      violations=np.zeros(2))
        frame = error_frame(solution)
        assert list(frame.columns) == ERROR_COLUMNS
        assert frame['t_end'].tolist() == [0.5, 1.0]
        assert frame['zeta_max'].tolist() == [2e-3, 4e-3]

    @pytest.mark.unit
    def test_error_frame_without_reports(self):
        """UT1005: Solution without errors - Should give an empty frame with the columns."""
        frame = error_frame(_solution())
        assert frame.empty and list(frame.columns) == ERROR_COLUMNS


class TestResultsHandlerUnit:
    """Unit tests for ResultsHandler writes."""

    @pytest.mark.unit
    def test_staged_success(self, tmp_path):
        """UT1006: Completed run - Should move every artifact into the output directory."""
        target = tmp_path / 'run'
        with ResultsHandler.staged(str(target)) as handler:
            handler.write_summary({'cost': np.float64(2.0), 'missing': float('nan')})
            handler.write_history(pd.DataFrame({'round': [1], 'max_zeta': [1.0 / 3.0]}))
        assert sorted(os.listdir(target)) == ['history.csv', 'summary.json']
        assert read_summary(str(target)) == {'cost': 2.0, 'missing': None}
        history = pd.read_csv(target / 'history.csv', float_precision='round_trip')
        assert history['max_zeta'][0] == 1.0 / 3.0
        assert [name for name in os.listdir(tmp_path) if name.startswith('.dynopt-')] == []

    @pytest.mark.unit
    def test_staged_failure(self, tmp_path):
        """UT1007: Run failing midway - Should leave neither the output nor the staging directory."""
        target = tmp_path / 'run'
        with pytest.raises(RuntimeError):
            with ResultsHandler.staged(str(target)) as handler:
                handler.write_summary({'cost': 1.0})
                raise RuntimeError('solver blew up')
        assert not target.exists()
        assert os.listdir(tmp_path) == []

    @pytest.mark.unit
    def test_staged_replaces_previous(self, tmp_path):
        """UT1008: Existing output directory - Should be replaced as a whole."""
        target = tmp_path / 'run'
        target.mkdir()
        (target / 'stale.csv').write_text('old', encoding='utf-8')
        with ResultsHandler.staged(str(target)) as handler:
            handler.write_scenario({'schema': 1})
        assert os.listdir(target) == ['scenario.json']
        assert read_scenario_document(str(target)) == {'schema': 1}

    @pytest.mark.unit
    def test_saved_solution_restores(self, tmp_path):
        """UT1009: Saved stack solution - Should restore trajectories, spans and status."""
        stack = StackSolution(phases=[_solution(0, 0.0, 1.0), _solution(1, 1.0, 2.0)], theta=np.array([0.25]),
                              cost=3.0, status='Optimal', iterations=7)
        handler = ResultsHandler(str(tmp_path))
        handler.save_solution(stack)
        restored = load_solution(str(tmp_path))
        assert isinstance(restored, StackSolution) and len(restored) == 2
        assert restored.cost == 3.0 and restored.status == 'Optimal' and restored.iterations == 7
        times = np.array([1.1, 1.5, 1.9])
        np.testing.assert_allclose(restored[1].state.evaluate(times), stack[1].state.evaluate(times), atol=1e-14)
        np.testing.assert_allclose(restored[1].state.final_value(), [4.0, -1.0])
        assert restored[1].t0 == 1.0 and restored[1].tf == 2.0

    @pytest.mark.unit
    def test_saved_single_phase(self, tmp_path):
        """UT1010: Saved single-phase solution - Should come back as a Solution."""
        handler = ResultsHandler(str(tmp_path))
        handler.save_solution(_solution())
        restored = load_solution(str(tmp_path))
        assert isinstance(restored, Solution)
        np.testing.assert_allclose(restored.inputs.evaluate([0.3]), [[4.0]])
        assert handler.written == ['solution.npz']
