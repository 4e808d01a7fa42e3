"""
CSV tables, text summaries and plots of a run
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .locomotion_sim import SAMPLE_COLUMNS, STRIDE_COLUMNS, TrialResult
from .logger import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = '%.9g'
SCHEMA_VERSION = 1


@dataclass
class RunSummary:
    """Headline numbers of one scenario run"""
    scenario: str
    headline: Dict[str, Any] = field(default_factory=dict)
    lines: List[str] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)

    def add(self, line: str = ''):
        self.lines.append(line)

    def render(self) -> str:
        header = [f"Scenario: {self.scenario}", f"CSV schema version: {SCHEMA_VERSION}", '']
        return '\n'.join(header + self.lines) + '\n'


def write_table(frame: pd.DataFrame, path: Path, float_format: str = FLOAT_FORMAT) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator='\n')
    logger.debug(f"Wrote {len(frame)} rows to {path}", extra={'event': 'table_write', 'path': str(path)})
    return path


def write_trial_tables(results: Sequence[TrialResult], out_dir: Path,
                       float_format: str = FLOAT_FORMAT) -> List[Path]:
    """samples.csv and strides.csv for one or more trials, concatenated in order"""
    samples = pd.concat([r.samples_frame() for r in results], ignore_index=True) if results else \
        pd.DataFrame(columns=list(SAMPLE_COLUMNS))
    strides = pd.concat([r.strides_frame() for r in results], ignore_index=True) if results else \
        pd.DataFrame(columns=list(STRIDE_COLUMNS))
    paths = [
        write_table(samples, out_dir / 'samples.csv', float_format),
        write_table(strides, out_dir / 'strides.csv', float_format),
    ]
    for result in results:
        result.csv_path = str(paths[0])
    return paths


def write_summary(summary: RunSummary, out_dir: Path) -> Path:
    path = out_dir / 'summary.txt'
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.render())
    return path


def mean_std(values: Sequence[float]) -> str:
    """'mean ± std' of the finite values, in the units given"""
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return 'n/a'
    if len(finite) == 1:
        return f"{finite[0]:.4g}"
    return f"{np.mean(finite):.4g} ± {np.std(finite, ddof=1):.2g}"


def _finish(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
    return path


def plot_force_traces(samples: pd.DataFrame, path: Path, flipper: str = 'right',
                      models: Optional[Dict[str, pd.Series]] = None, title: str = '') -> Path:
    """Sensed fz and fx of one flipper against time, with modeled curves overlaid"""
    own = samples[samples['flipper'] == flipper]
    fig, (ax_z, ax_x) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax_z.plot(own['t'], own['fz'], lw=0.8, label='sensed')
    ax_x.plot(own['t'], own['fx'], lw=0.8, label='sensed')
    for name, series in (models or {}).items():
        target = ax_z if name.startswith('fz') else ax_x
        target.plot(series.index, series.values, '--', lw=1.2, label=name)
    ax_z.set_ylabel('fz [N]')
    ax_x.set_ylabel('fx [N]')
    ax_x.set_xlabel('Time [s]')
    ax_z.legend(loc='upper right')
    ax_x.legend(loc='upper right')
    if title:
        ax_z.set_title(title)
    return _finish(fig, path)


def plot_estimates(truth: Dict[str, Sequence[float]], estimated: Dict[str, Sequence[float]],
                   path: Path) -> Path:
    """Estimated against oracle coefficients, one panel per coefficient"""
    names = list(truth)
    fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 4))
    for ax, name in zip(np.atleast_1d(axes), names):
        x = np.asarray(truth[name], dtype=float)
        y = np.asarray(estimated[name], dtype=float)
        ax.scatter(x, y, s=18)
        finite = np.concatenate([x[np.isfinite(x)], y[np.isfinite(y)]])
        if finite.size:
            lo, hi = float(finite.min()), float(finite.max())
            ax.plot([lo, hi], [lo, hi], 'k:', lw=1)
        ax.set_xlabel(f"{name} truth")
        ax.set_ylabel(f"{name} estimate")
    return _finish(fig, path)


def plot_strides(strides: pd.DataFrame, path: Path, title: str = '') -> Path:
    """Commanded depth and stride length per stride, in cm"""
    fig, (ax_d, ax_s) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    ax_d.step(strides['stride'], strides['z_cmd'] * 100, where='post')
    ax_s.bar(strides['stride'], strides['stride_len'] * 100, width=0.8)
    ax_d.set_ylabel('z [cm]')
    ax_s.set_ylabel('stride [cm]')
    ax_s.set_xlabel('Stride')
    if title:
        ax_d.set_title(title)
    return _finish(fig, path)


def plot_calibration(rows: pd.DataFrame, path: Path) -> Path:
    """Sensed against applied torque for each calibrated joint"""
    fig, ax = plt.subplots(figsize=(5, 5))
    for joint, own in rows.groupby('joint', sort=False):
        ax.scatter(own['tau_ext'], own['tau_sense'], s=12, label=joint)
    hi = float(rows['tau_ext'].max()) if len(rows) else 1.0
    ax.plot([0, hi], [0, hi], 'k:', lw=1)
    ax.set_xlabel('Applied torque [N*m]')
    ax.set_ylabel('Sensed torque [N*m]')
    ax.legend()
    return _finish(fig, path)
