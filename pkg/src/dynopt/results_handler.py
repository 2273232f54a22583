"""
This module provides the ResultsHandler class that writes and reads run artifacts.

Every CSV is built as a pandas DataFrame and written with 17 significant
digits. A run writes into a staging directory that is moved into place
only when the run completes.
"""
import json
import math
import os
import shutil
import tempfile
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .logger import logger
from .poly import barycentric_build
from .trajectory import PiecewiseTrajectory, Solution, StackSolution
from .ventilator import PHASES, BreathModel

FLOAT_FORMAT = '%.17g'
SAMPLES_PER_PHASE = 201
SOLUTION_CSV = 'solution.csv'
SUMMARY_JSON = 'summary.json'
HISTORY_CSV = 'history.csv'
TABLE_CSV = 'table.csv'
ERRORS_CSV = 'errors.csv'
SOLUTION_NPZ = 'solution.npz'
SCENARIO_JSON = 'scenario.json'
ERROR_COLUMNS = ['phase', 'interval', 't_start', 't_end', 'zeta', 'zeta_max', 'relative', 'violation']

AnySolution = Union[Solution, StackSolution]


def _phases(solution: AnySolution) -> List[Solution]:
    return solution.phases if isinstance(solution, StackSolution) else [solution]


def plain(value: Any) -> Any:
    """JSON-ready copy: numpy scalars and arrays become Python values, NaN becomes None."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def trajectory_frame(solution: AnySolution, state_names: Sequence[str] = (), input_names: Sequence[str] = (),
                     samples: int = SAMPLES_PER_PHASE) -> pd.DataFrame:
    """Samples of every phase's states and free variables, one row per time."""
    frames = []
    for part in _phases(solution):
        times = np.linspace(part.t0, part.tf, samples)
        columns: Dict[str, Any] = {'phase': part.phase, 't': times}
        x = part.state.evaluate(times)
        for k in range(x.shape[0]):
            columns[state_names[k] if k < len(state_names) else f"x{k}"] = x[k]
        if part.inputs.dimension:
            u = part.inputs.evaluate(times)
            for k in range(u.shape[0]):
                columns[input_names[k] if k < len(input_names) else f"u{k}"] = u[k]
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def breath_frame(solution: StackSolution, breath: BreathModel, samples: int = SAMPLES_PER_PHASE) -> pd.DataFrame:
    """Ventilator trajectories: t, v_p, i_p, w_p, Q_p per patient, then V_I and V_E."""
    n = breath.n_patients
    theta = np.asarray(solution.theta, dtype=float)
    frames = []
    for phase, part in zip(PHASES, solution.phases):
        times = np.linspace(part.t0, part.tf, samples)
        x = part.state.evaluate(times)
        u = part.inputs.evaluate(times) if breath.n_u else np.zeros((0, samples))
        th = np.tile(theta[:, None], (1, samples))
        w = np.broadcast_to(breath.disturbance_of(phase, u, th), (n, samples))
        pressure = np.broadcast_to(breath.pressure_of(phase, u, th, times), (samples,))
        columns: Dict[str, Any] = {'phase': phase, 't': times}
        for label, block in (('v', x[:n]), ('i', breath.flow(x, u)), ('w', w), ('Q', breath.volumes(x))):
            for p in range(n):
                columns[f"{label}_{p + 1}"] = block[p]
        columns['V_I'] = pressure if phase == PHASES[0] else np.nan
        columns['V_E'] = pressure if phase == PHASES[1] else np.nan
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def error_frame(solution: AnySolution) -> pd.DataFrame:
    """Per-interval error measures of every phase."""
    rows = []
    for part in _phases(solution):
        report = part.errors
        if report is None:
            continue
        nodes = part.state.nodes
        for i in range(part.state.n_intervals):
            rows.append({'phase': part.phase, 'interval': i, 't_start': nodes[i], 't_end': nodes[i + 1],
                         'zeta': report.zeta[i], 'zeta_max': report.zeta_max[i], 'relative': report.relative[i],
                         'violation': report.violations[i]})
    return pd.DataFrame(rows, columns=ERROR_COLUMNS)


def _pack_trajectory(prefix: str, traj: PiecewiseTrajectory, arrays: Dict[str, np.ndarray]) -> None:
    arrays[f"{prefix}_reference"] = np.concatenate([basis.nodes for basis in traj.bases])
    arrays[f"{prefix}_counts"] = np.array([basis.count for basis in traj.bases], dtype=int)
    arrays[f"{prefix}_values"] = np.concatenate(traj.coefficients, axis=1)
    if traj.terminal is not None:
        arrays[f"{prefix}_terminal"] = np.asarray(traj.terminal, dtype=float)


def _unpack_trajectory(prefix: str, nodes: np.ndarray, data) -> PiecewiseTrajectory:
    counts = data[f"{prefix}_counts"]
    edges = np.concatenate([[0], np.cumsum(counts)])
    reference, values = data[f"{prefix}_reference"], data[f"{prefix}_values"]
    bases = tuple(barycentric_build(reference[a:b]) for a, b in zip(edges[:-1], edges[1:]))
    coefficients = tuple(values[:, a:b] for a, b in zip(edges[:-1], edges[1:]))
    terminal = data[f"{prefix}_terminal"] if f"{prefix}_terminal" in data.files else None
    return PiecewiseTrajectory(nodes=nodes, bases=bases, coefficients=coefficients, terminal=terminal)


class ResultsHandler:
    """Writes the artifacts of one run into an output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: List[str] = []

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    @classmethod
    @contextmanager
    def staged(cls, out_dir: str) -> Iterator['ResultsHandler']:
        """Handler on a temporary directory, moved onto ``out_dir`` on success."""
        target = os.path.abspath(out_dir)
        parent = os.path.dirname(target)
        os.makedirs(parent, exist_ok=True)
        staging = tempfile.mkdtemp(prefix='.dynopt-', dir=parent)
        try:
            handler = cls(staging)
            yield handler
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        if os.path.isdir(target):
            shutil.rmtree(target)
        os.replace(staging, target)
        handler.out_dir = target
        logger.info("Wrote %s to %s", ', '.join(handler.written), target)

    def _frame(self, frame: pd.DataFrame, name: str) -> str:
        path = self.path(name)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        self.written.append(name)
        return path

    def write_solution(self, frame: pd.DataFrame) -> str:
        return self._frame(frame, SOLUTION_CSV)

    def write_history(self, frame: pd.DataFrame) -> str:
        return self._frame(frame, HISTORY_CSV)

    def write_table(self, frame: pd.DataFrame) -> str:
        return self._frame(frame, TABLE_CSV)

    def write_errors(self, frame: pd.DataFrame) -> str:
        return self._frame(frame, ERRORS_CSV)

    def _json(self, payload: Dict[str, Any], name: str) -> str:
        path = self.path(name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(plain(payload), f, indent=2, sort_keys=True, allow_nan=False)
            f.write('\n')
        self.written.append(name)
        return path

    def write_summary(self, summary: Dict[str, Any]) -> str:
        return self._json(summary, SUMMARY_JSON)

    def write_scenario(self, document: Dict[str, Any]) -> str:
        return self._json(document, SCENARIO_JSON)

    def save_solution(self, solution: AnySolution) -> str:
        """Trajectories, spans and parameters in a form load_solution restores."""
        arrays: Dict[str, np.ndarray] = {}
        parts = _phases(solution)
        arrays['stack'] = np.array(isinstance(solution, StackSolution))
        arrays['theta'] = np.asarray(solution.theta, dtype=float)
        arrays['cost'] = np.array(float(solution.cost))
        arrays['status'] = np.array(str(solution.status))
        arrays['iterations'] = np.array(int(solution.iterations))
        arrays['n_phases'] = np.array(len(parts))
        for j, part in enumerate(parts):
            arrays[f"p{j}_nodes"] = part.state.nodes
            arrays[f"p{j}_span"] = np.array([part.t0, part.tf])
            arrays[f"p{j}_theta"] = np.asarray(part.theta, dtype=float)
            _pack_trajectory(f"p{j}_state", part.state, arrays)
            _pack_trajectory(f"p{j}_inputs", part.inputs, arrays)
        path = self.path(SOLUTION_NPZ)
        np.savez(path, **arrays)
        self.written.append(SOLUTION_NPZ)
        return path


def load_solution(directory: str) -> AnySolution:
    """Solution saved by ResultsHandler.save_solution, without error reports."""
    path = os.path.join(directory, SOLUTION_NPZ)
    with np.load(path, allow_pickle=False) as data:
        status, cost, iterations = str(data['status']), float(data['cost']), int(data['iterations'])
        parts = []
        for j in range(int(data['n_phases'])):
            nodes = data[f"p{j}_nodes"]
            t0, tf = data[f"p{j}_span"]
            parts.append(Solution(state=_unpack_trajectory(f"p{j}_state", nodes, data),
                                  inputs=_unpack_trajectory(f"p{j}_inputs", nodes, data),
                                  theta=data[f"p{j}_theta"], t0=float(t0), tf=float(tf), cost=cost, status=status,
                                  iterations=iterations, phase=j))
        if bool(data['stack']):
            return StackSolution(phases=parts, theta=data['theta'], cost=cost, status=status,
                                 iterations=iterations)
        return parts[0]


def read_scenario_document(directory: str) -> Optional[Dict[str, Any]]:
    path = os.path.join(directory, SCENARIO_JSON)
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def read_summary(directory: str) -> Dict[str, Any]:
    with open(os.path.join(directory, SUMMARY_JSON), 'r', encoding='utf-8') as f:
        return json.load(f)


__all__ = ['ResultsHandler', 'trajectory_frame', 'breath_frame', 'error_frame', 'load_solution',
           'read_scenario_document', 'read_summary', 'plain', 'SAMPLES_PER_PHASE', 'ERROR_COLUMNS']
