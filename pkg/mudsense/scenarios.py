"""
Scenario orchestration: calibration, single-flipper sensing, trackway runs and sweeps
"""

import itertools
import math
import re
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from .actuator import run_calibration
from .config import CatalogEntry, ExperimentConfig, to_gait_mode
from .exceptions import ConfigError, MudSenseError
from .kinematics import FlipperGeometry, penetration_integral, shear_integral
from .locomotion_sim import GaitMode, TrialResult, Trackway, run_trial
from .logger import get_logger
from .mud_oracle import LoadCellRig, MudSegment
from .reporting import (
    FLOAT_FORMAT, RunSummary, mean_std, plot_calibration, plot_estimates, plot_force_traces,
    plot_strides, write_summary, write_table, write_trial_tables,
)
from .utils import format_velocity

logger = get_logger(__name__)

COEFFICIENTS = (('k_p', 'kp_hat'), ('k_s', 'ks_hat'), ('k_e', 'ke_hat'))


def slug(label: str) -> str:
    return re.sub(r'[^a-z0-9]+', '_', label.lower()).strip('_')


class ScenarioManager:
    """Runs the scenario an experiment file names and writes its artifacts"""

    def __init__(self, config: ExperimentConfig, out_dir: Path, plots: bool = True,
                 float_format: str = FLOAT_FORMAT):
        self.config = config
        self.out_dir = Path(out_dir)
        self.plots = plots
        self.float_format = float_format

    def run(self) -> RunSummary:
        scenario = self.config.scenario
        if scenario == 'calibrate':
            summary = self._run_calibrate()
        elif scenario == 'single-flipper':
            summary = self._run_single_flipper()
        elif scenario in ('trackway-map', 'adapt'):
            summary = self._run_trackway(scenario)
        elif scenario == 'sweep':
            summary = self.sweep()
        else:
            raise ConfigError(f"Unsupported scenario: {scenario}")
        summary.artifacts.append(str(write_summary(summary, self.out_dir)))
        return summary

    # --- calibrate -------------------------------------------------------

    def _run_calibrate(self) -> RunSummary:
        cfg = self.config
        geom = cfg.flipper_geometry()
        motor = cfg.motor_spec()
        moment_arm = cfg.calibration.moment_arm or geom.l
        summary = RunSummary('calibrate')

        results = [
            run_calibration(cfg.calibration.weights, moment_arm, motor,
                            cfg.calibration.trials, cfg.seed, joint)
            for joint in cfg.calibration.joints
        ]
        rows = pd.DataFrame([row for r in results for row in r.rows()],
                            columns=['joint', 'mass', 'trial', 'tau_ext', 'tau_sense'])
        summary.artifacts.append(str(write_table(rows, self.out_dir / 'calibration.csv', self.float_format)))

        summary.add(f"Moment arm {moment_arm * 100:.1f} cm, {cfg.calibration.trials} trials per weight, "
                    f"noise {motor.noise_rel * 100:.1f}%")
        for result in results:
            summary.add('')
            summary.add(f"{result.joint} joint")
            summary.add(f"  {'mass [g]':>9} {'tau_ext':>10} {'mean':>10} {'std':>10}")
            for ws in result.per_weight:
                summary.add(f"  {ws.mass * 1000:9.0f} {ws.tau_ext:10.4f} {ws.mean:10.4f} {ws.std:10.4f}")
            summary.add(f"  RMSE {result.rmse:.4f} N*m")
            summary.headline[f"rmse_{result.joint}"] = result.rmse

        if self.plots:
            summary.artifacts.append(str(plot_calibration(rows, self.out_dir / 'calibration.svg')))
        return summary

    # --- single flipper --------------------------------------------------

    def _run_single_flipper(self) -> RunSummary:
        cfg = self.config
        geom = cfg.flipper_geometry()
        motor = cfg.motor_spec()
        spec = cfg.robot_spec()
        catalog = cfg.mud_catalog()
        depth = cfg.static.depth
        params = cfg.gait_params().with_depth(depth)
        options = cfg.sim_options(body_locked=True, flippers=('right',), stride_budget=1)
        mixtures = cfg.static.mixtures or [w for w, _ in catalog.entries]
        summary = RunSummary('single-flipper')

        rig = None
        if cfg.static.loadcell:
            plate = FlipperGeometry(l=geom.l, shoulder_height=geom.shoulder_height,
                                    **cfg.static.plate.model_dump())
            rig = LoadCellRig(plate, motor.sample_rate, depth=depth)

        results: List[TrialResult] = []
        truth: Dict[str, List[float]] = {name: [] for name, _ in COEFFICIENTS}
        estimated: Dict[str, List[float]] = {name: [] for name, _ in COEFFICIENTS}
        summary.add(f"Static rig at z = {depth * 100:.1f} cm, {cfg.trials} trial(s) per mixture")
        summary.add(f"{'w [%]':>6} {'coef':>4} {'truth':>11} {'proprioceptive':>22} {'load cell':>11}")

        for w in mixtures:
            coeffs = catalog.lookup(w)
            segment = MudSegment(f"w{w * 100:.1f}", 0.0, 1.0, w, coeffs)
            trackway = Trackway((segment,))
            per_trial = []
            for trial in range(cfg.trials):
                result = run_trial(trackway, GaitMode(adaptive=False, z=depth), params, spec,
                                   cfg.seed + trial, geom, motor, options)
                results.append(result)
                per_trial.append(result.strides[0].estimates)
            fitted = rig.measure(coeffs).fitted if rig is not None else None

            for name, column in COEFFICIENTS:
                values = [e.get(column, math.nan) for e in per_trial]
                true_value = getattr(coeffs, name)
                truth[name].append(true_value)
                estimated[name].append(float(np.nanmean(values)) if np.isfinite(values).any() else math.nan)
                loadcell = f"{getattr(fitted, name):.4g}" if fitted is not None else 'n/a'
                summary.add(f"{w * 100:6.1f} {name:>4} {true_value:11.4g} {mean_std(values):>22} {loadcell:>11}")

        for name, _ in COEFFICIENTS:
            errors = [abs(e / t - 1.0) for e, t in zip(estimated[name], truth[name]) if math.isfinite(e)]
            summary.headline[f"max_rel_error_{name}"] = max(errors) if errors else math.nan
            summary.headline[f"decreasing_{name}"] = bool(np.all(np.diff(estimated[name]) < 0))
        summary.add('')
        for key, value in summary.headline.items():
            summary.add(f"{key}: {value}")

        summary.artifacts.extend(str(p) for p in write_trial_tables(results, self.out_dir, self.float_format))
        if self.plots and results:
            samples = results[0].samples_frame()
            summary.artifacts.append(str(plot_force_traces(
                samples, self.out_dir / 'traces.svg',
                models=self._model_overlays(samples, geom, results[0].strides[0].estimates),
                title=f"Static flipper, {results[0].strides[0].segment}",
            )))
            summary.artifacts.append(str(plot_estimates(truth, estimated, self.out_dir / 'estimates.svg')))
        return summary

    @staticmethod
    def _model_overlays(samples: pd.DataFrame, geom: FlipperGeometry,
                        estimates: Dict[str, float]) -> Dict[str, pd.Series]:
        """Modeled insertion fz and stance fx from the fitted coefficients"""
        own = samples[samples['flipper'] == 'right']
        overlays = {}
        insertion = own[(own['phase'] == 'insertion') & (own['depth'] > 0)]
        if len(insertion) and math.isfinite(estimates.get('kp_hat', math.nan)):
            overlays['fz model'] = pd.Series(
                [estimates['kp_hat'] * penetration_integral(b, d, geom)
                 for b, d in zip(insertion['beta'], insertion['depth'])],
                index=insertion['t'].to_numpy())
        stance = own[own['phase'] == 'stance']
        if len(stance) and math.isfinite(estimates.get('ks_hat', math.nan)):
            overlays['fx yield model'] = pd.Series(
                [estimates['ks_hat'] * shear_integral(d, geom) for d in stance['depth']],
                index=stance['t'].to_numpy())
        return overlays

    # --- trackway runs ---------------------------------------------------

    def _run_modes(self, modes: List[GaitMode], config: ExperimentConfig,
                   out_dir: Path) -> Dict[str, List[TrialResult]]:
        geom = config.flipper_geometry()
        motor = config.motor_spec()
        spec = config.robot_spec()
        params = config.gait_params()
        trackway = config.build_trackway()
        options = config.sim_options()

        by_mode: Dict[str, List[TrialResult]] = {}
        for mode in modes:
            trials = [
                run_trial(trackway, mode, params, spec, config.seed + k, geom, motor, options)
                for k in range(config.trials)
            ]
            by_mode[mode.label] = trials
            mode_dir = out_dir if len(modes) == 1 else out_dir / slug(mode.label)
            write_trial_tables(trials, mode_dir, self.float_format)
            if self.plots:
                plot_strides(trials[0].strides_frame(), mode_dir / 'strides.svg', title=mode.label)
                plot_force_traces(trials[0].samples_frame(), mode_dir / 'traces.svg', title=mode.label)
        return by_mode

    def _run_trackway(self, scenario: str) -> RunSummary:
        cfg = self.config
        modes = cfg.gait_modes()
        by_mode = self._run_modes(modes, cfg, self.out_dir)
        segments = [s.id for s in cfg.trackway]
        summary = RunSummary(scenario)

        summary.add(f"Average forward velocity [cm/s] over {cfg.trials} trial(s)")
        summary.add(f"{'mode':<22}" + ''.join(f"{s:>16}" for s in segments))
        table = []
        for label, trials in by_mode.items():
            cells = []
            row: Dict[str, Any] = {'mode': label}
            for segment in segments:
                values = [t.segment_velocity_cm_s.get(segment, math.nan) for t in trials]
                cells.append(mean_std(values))
                finite = [v for v in values if math.isfinite(v)]
                row[f"v_{segment}"] = float(np.mean(finite)) / 100.0 if finite else math.nan
            summary.add(f"{label:<22}" + ''.join(f"{c:>16}" for c in cells))
            row['stuck'] = sum(t.stuck_events for t in trials)
            table.append(row)
            summary.headline[label] = row

        summary.add('')
        summary.add('Failures per segment (Slip / Extraction), summed over trials')
        for label, trials in by_mode.items():
            totals = {s: [0, 0] for s in segments}
            for trial in trials:
                for segment, counts in trial.failure_counts().items():
                    totals[segment][0] += counts['Slip']
                    totals[segment][1] += counts['Extraction']
            cells = ''.join(f"{f'{a} / {b}':>16}" for a, b in totals.values())
            summary.add(f"{label:<22}{cells}")
            for segment, (slips, extractions) in totals.items():
                summary.headline[label][f"slip_{segment}"] = slips
                summary.headline[label][f"extraction_{segment}"] = extractions

        summary.add('')
        for label, trials in by_mode.items():
            summary.add(f"{label}: {sum(len(t.strides) for t in trials)} strides, "
                        f"final x {mean_std([t.final_x for t in trials])} m, "
                        f"stuck events {sum(t.stuck_events for t in trials)}")

        velocity_table = pd.DataFrame(table)
        summary.artifacts.append(str(write_table(velocity_table, self.out_dir / 'velocities.csv', self.float_format)))
        return summary

    # --- sweep -----------------------------------------------------------

    def sweep(self) -> RunSummary:
        """One trackway trial per grid cell; failing cells are flagged and skipped"""
        cfg = self.config
        if cfg.sweep is None:
            raise ConfigError("Experiment file has no sweep block")
        if not cfg.trackway:
            raise ConfigError("Sweep needs a trackway")
        segments = [s.id for s in cfg.trackway]
        columns = (['cell', 'mode', 'catalog_scale', 'noise_rel', 'status']
                   + [f"v_{s}" for s in segments] + ['slip', 'extraction', 'stuck', 'strides', 'final_x'])
        summary = RunSummary('sweep')

        rows = []
        grid = itertools.product(cfg.sweep.modes, cfg.sweep.catalog_scale, cfg.sweep.noise_rel)
        for index, (mode_cfg, scale, noise) in enumerate(grid):
            mode = to_gait_mode(mode_cfg)
            row: Dict[str, Any] = {'cell': index, 'mode': mode.label, 'catalog_scale': scale, 'noise_rel': noise}
            try:
                cell = self._cell_config(scale, noise)
                trials = self._run_modes([mode], cell, self.out_dir / f"cell_{index:03d}")
                trial = trials[mode.label][0]
                row['status'] = 'ok'
                for segment in segments:
                    row[f"v_{segment}"] = trial.segment_velocity.get(segment, math.nan)
                kinds = [e.kind.value for e in trial.failures]
                row.update(slip=kinds.count('Slip'), extraction=kinds.count('Extraction'),
                           stuck=trial.stuck_events, strides=len(trial.strides), final_x=trial.final_x)
            except (MudSenseError, ValueError, RuntimeError) as e:
                logger.error(f"Sweep cell {index} failed: {e}",
                             extra={'event': 'sweep_cell_error', 'cell': index})
                row['status'] = f"error: {e}"
            rows.append(row)

        table = pd.DataFrame(rows, columns=columns)
        summary.artifacts.append(str(write_table(table, self.out_dir / 'sweep.csv', self.float_format)))
        summary.headline['cells'] = len(rows)
        summary.headline['failed_cells'] = sum(1 for r in rows if r['status'] != 'ok')
        summary.add(f"{len(rows)} cell(s), {summary.headline['failed_cells']} failed")
        for row in rows:
            velocities = ', '.join(f"{s} {format_velocity(row.get(f'v_{s}', math.nan))}" for s in segments)
            summary.add(f"cell {row['cell']:3d} {row['mode']:<18} scale {row['catalog_scale']:g} "
                        f"noise {row['noise_rel']:g}: {row['status']}; {velocities}")
        return summary

    def _cell_config(self, scale: float, noise: float) -> ExperimentConfig:
        cfg = self.config
        motor = cfg.motor.model_copy(update={'noise_rel': noise})
        catalog = [
            CatalogEntry(w=w, k_p=c.k_p, k_s=c.k_s, k_e=c.k_e)
            for w, c in cfg.mud_catalog(scale).entries
        ]
        return cfg.model_copy(update={'motor': motor, 'catalog': catalog, 'trials': 1})
