"""
Closed-loop trial execution of the flipper robot on a linear rail

A trial walks the robot across a trackway of mud segments one stride at a
time. Every sample runs oracle forces through the inverse force map and
the motor model, so the estimator only ever sees what the motors and
encoders would report.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .actuator import MotorSpec, SampleRecord, sense_torque, torque_to_current
from .estimator import StepEstimates, StepLog, estimate_step, CONTACT_THRESHOLD, STEADY_FRACTION
from .exceptions import ConfigError, Stuck
from .gait_controller import (
    BOOTSTRAP_DEPTH, DEPTH_FLOOR, SAFETY_MARGIN, DepthDecision, GaitController, GaitParams,
    MudBelief, Phase, RobotSpec, adapt_depth,
)
from .kinematics import (
    FlipperGeometry, ForceVector, JointPose, JointTorques, forces_to_torques,
    torques_to_forces,
)
from .logger import get_logger, trial_logger
from .mud_oracle import (
    MudCatalog, MudSegment, ShearState, extraction_force, penetration_force, shear_force,
)
from .utils import stream_rng

logger = get_logger(__name__)

SAMPLE_COLUMNS = ('t', 'phase', 'flipper', 'alpha', 'beta', 'I1', 'I2', 'tau1', 'tau2',
                  'fx', 'fz', 'depth', 'body_x', 'body_v', 'segment')
STRIDE_COLUMNS = ('stride', 'segment', 'kp_hat', 'ks_hat', 'ks_compensated', 'ke_hat',
                  'z_cmd', 'stride_len', 'failures')
FLIPPER_SIDES = {'left': 1, 'right': -1}


class FailureKind(str, Enum):
    SLIP = 'Slip'
    EXTRACTION = 'Extraction'


@dataclass(frozen=True)
class Trackway:
    segments: Tuple[MudSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("Trackway needs at least one segment")
        if abs(self.segments[0].x_start) > 1e-12:
            raise ValueError(f"Trackway must start at x=0, first segment starts at {self.segments[0].x_start}")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.x_end - b.x_start) > 1e-12:
                raise ValueError(f"Segments {a.id} and {b.id} are not contiguous")
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise ValueError(f"Segment ids must be unique: {ids}")

    @property
    def length(self) -> float:
        return self.segments[-1].x_end

    def segment_at(self, x: float) -> MudSegment:
        for segment in self.segments:
            if x < segment.x_end:
                return segment
        return self.segments[-1]

    @classmethod
    def from_layout(cls, layout: Sequence[Tuple[str, float, float]], catalog: MudCatalog) -> 'Trackway':
        """Build contiguous segments from (id, length, water content) triples"""
        segments = []
        x = 0.0
        for segment_id, length, w in layout:
            segments.append(MudSegment(segment_id, x, x + length, w, catalog.lookup(w)))
            x += length
        return cls(tuple(segments))


@dataclass(frozen=True)
class GaitMode:
    adaptive: bool = False
    z: float = 0.03

    @property
    def label(self) -> str:
        return 'adaptive' if self.adaptive else f"fixed z={self.z * 100:g} cm"


@dataclass(frozen=True)
class SimOptions:
    stride_budget: int = 200
    n_retry: int = 3
    redescend_fraction: float = 0.2
    remold_factor: float = 0.8
    retry_dwell: float = 0.5
    recovery_time: float = 2.0
    slip_fraction: float = 0.1
    contact_threshold: float = CONTACT_THRESHOLD
    steady_fraction: float = STEADY_FRACTION
    margin: float = SAFETY_MARGIN
    z_min: float = DEPTH_FLOOR
    bootstrap_depth: float = BOOTSTRAP_DEPTH
    body_locked: bool = False
    flippers: Tuple[str, ...] = ('left', 'right')

    def __post_init__(self):
        if self.stride_budget < 1:
            raise ValueError(f"Invalid stride budget {self.stride_budget}: must be at least 1")
        if self.n_retry < 0:
            raise ValueError(f"Invalid retry count {self.n_retry}")
        unknown = set(self.flippers) - set(FLIPPER_SIDES)
        if unknown or not self.flippers:
            raise ValueError(f"Invalid flippers {self.flippers}: choose from {tuple(FLIPPER_SIDES)}")


@dataclass
class FlipperState:
    pose: JointPose
    depth: float
    shear: ShearState = field(default_factory=ShearState)


@dataclass
class RobotState:
    x: float = 0.0
    v: float = 0.0
    flippers: Dict[str, FlipperState] = field(default_factory=dict)
    phase: Phase = Phase.INSERTION


@dataclass(frozen=True)
class FailureEvent:
    kind: FailureKind
    stride: int
    segment: str


@dataclass
class StrideRecord:
    index: int
    segment: str
    z_cmd: float
    stride_length: float
    duration: float
    commanded_arc: float
    retries: int = 0
    solidified: bool = False
    stuck: bool = False
    recovery: bool = False
    estimates: Dict[str, float] = field(default_factory=dict)
    decision: Optional[DepthDecision] = None
    failures: Tuple[str, ...] = ()


@dataclass
class TrialResult:
    mode: str
    seed: int
    strides: List[StrideRecord]
    segment_velocity: Dict[str, float]
    final_x: float
    failures: List[FailureEvent]
    rows: List[tuple] = field(default_factory=list, repr=False)
    csv_path: Optional[str] = None

    @property
    def segment_velocity_cm_s(self) -> Dict[str, float]:
        return {k: v * 100.0 for k, v in self.segment_velocity.items()}

    @property
    def stuck_events(self) -> int:
        return sum(1 for s in self.strides if s.stuck)

    def failure_counts(self) -> Dict[str, Dict[str, int]]:
        counts: Dict[str, Dict[str, int]] = {}
        for event in self.failures:
            per_segment = counts.setdefault(event.segment, {k.value: 0 for k in FailureKind})
            per_segment[event.kind.value] += 1
        return counts

    def samples_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(SAMPLE_COLUMNS))

    def strides_frame(self) -> pd.DataFrame:
        records = [
            {
                'stride': s.index,
                'segment': s.segment,
                'kp_hat': s.estimates.get('kp_hat', math.nan),
                'ks_hat': s.estimates.get('ks_hat', math.nan),
                'ks_compensated': s.estimates.get('ks_compensated', math.nan),
                'ke_hat': s.estimates.get('ke_hat', math.nan),
                'z_cmd': s.z_cmd,
                'stride_len': s.stride_length,
                'failures': ';'.join(s.failures),
            }
            for s in self.strides
        ]
        return pd.DataFrame(records, columns=list(STRIDE_COLUMNS))


def step_dynamics(state: RobotState, fx: Dict[str, float], demand: float, ds: float, dt: float,
                  body_locked: bool = False) -> RobotState:
    """
    Quasi-static body update for one stance sample

    The body follows the anchored flippers when their combined reaction
    meets the demand (drag plus inertia); otherwise it holds still and the
    plates slip through the mud by the commanded displacement.
    """
    if not body_locked and sum(fx.values()) >= demand - 1e-12:
        return replace(state, x=state.x + ds, v=ds / dt, phase=Phase.STANCE)
    for flipper in state.flippers.values():
        flipper.shear.advance(ds)
    return replace(state, v=0.0, phase=Phase.STANCE)


def detect_failures(log: Sequence[StrideRecord], slip_fraction: float = 0.1) -> List[FailureEvent]:
    """Slip and extraction failures of a completed stride log"""
    events = []
    for stride in log:
        if stride.stride_length < slip_fraction * stride.commanded_arc and not stride.solidified:
            events.append(FailureEvent(FailureKind.SLIP, stride.index, stride.segment))
        if stride.retries > 0 or stride.stuck or stride.recovery:
            events.append(FailureEvent(FailureKind.EXTRACTION, stride.index, stride.segment))
    return events


def segment_velocities(strides: Sequence[StrideRecord], trackway: Trackway) -> Dict[str, float]:
    """Mean forward velocity per visited segment, m/s"""
    velocities = {}
    for segment in trackway.segments:
        own = [s for s in strides if s.segment == segment.id]
        duration = sum(s.duration for s in own)
        if own and duration > 0.0:
            velocities[segment.id] = max(sum(s.stride_length for s in own), 0.0) / duration
    return velocities


class TrialRunner:
    """Sequential closed loop of one trial; owns the motor noise streams"""

    def __init__(self, trackway: Trackway, mode: GaitMode, params: GaitParams, spec: RobotSpec,
                 seed: int, geom: FlipperGeometry, motor: MotorSpec, options: SimOptions):
        if not options.body_locked and len(options.flippers) != 2:
            raise ConfigError("A moving body needs both flippers; lock the body for a single flipper")
        if options.body_locked and mode.adaptive:
            raise ConfigError("Adaptive depth needs a moving body")
        self.trackway = trackway
        self.mode = mode
        self.params = params
        self.spec = spec
        self.seed = seed
        self.geom = geom
        self.motor = motor
        self.options = options
        self.dt = motor.dt
        self.rngs = {
            (name, joint): stream_rng(seed, f"motor/{name}/{joint}")
            for name in options.flippers for joint in (1, 2)
        }
        self.k = 0
        self.rows: List[tuple] = []
        self.records: Dict[str, List[SampleRecord]] = {}
        self.body_v: List[float] = []
        self.body_x: List[float] = []
        self.state = RobotState()
        self.belief = MudBelief()

    # --- sample emission -------------------------------------------------

    def _within_limits(self, pose: JointPose, fx: float, fz: float) -> bool:
        torques = forces_to_torques(ForceVector(fx, fz), pose, self.geom)
        return max(abs(torques.tau1), abs(torques.tau2)) <= self.motor.tau_max

    def _emit(self, phase: Phase, pose: JointPose, depth: float, fx: float, fz: float,
              segment: str, saturate: bool = False):
        self.k += 1
        t = self.k * self.dt
        torques = forces_to_torques(ForceVector(fx, fz), pose, self.geom)
        if saturate:
            limits = np.clip([torques.tau1, torques.tau2], -self.motor.tau_max, self.motor.tau_max)
            torques = JointTorques(float(limits[0]), float(limits[1]))

        for name in self.options.flippers:
            i1 = torque_to_current(torques.tau1, self.motor, self.rngs[(name, 1)])
            i2 = torque_to_current(torques.tau2, self.motor, self.rngs[(name, 2)])
            tau1, tau2 = sense_torque(i1, self.motor), sense_torque(i2, self.motor)
            sensed = torques_to_forces(JointTorques(tau1, tau2), pose, self.geom)
            self.records.setdefault(name, []).append(
                SampleRecord(t, pose.alpha, pose.beta, i1, i2, tau1, tau2, phase.value, name)
            )
            self.rows.append((t, phase.value, name, pose.alpha, pose.beta, i1, i2, tau1, tau2,
                              sensed.fx, sensed.fz, depth, self.state.x, self.state.v, segment))

        self.body_x.append(self.state.x)
        self.body_v.append(self.state.v)
        for flipper in self.state.flippers.values():
            flipper.pose, flipper.depth = pose, depth

    def _hold(self, count: int, phase: Phase, pose: JointPose, depth: float,
              fx: float, fz: float, segment: str, saturate: bool = False):
        self.state = replace(self.state, v=0.0)
        for _ in range(count):
            self._emit(phase, pose, depth, fx, fz, segment, saturate)

    # --- gait phases -----------------------------------------------------

    def _insertion(self, ctrl: GaitController, segment: MudSegment) -> Tuple[JointPose, float]:
        pose, fz = None, 0.0
        for cmd in ctrl.trajectory(Phase.INSERTION, self.motor.sample_rate):
            pose = cmd.pose
            fz = penetration_force(max(cmd.depth, 0.0), pose, self.geom, segment.coeffs.k_p)
            self._emit(Phase.INSERTION, pose, cmd.depth, 0.0, fz, segment.id)
        self._hold(ctrl.pause_samples(self.motor.sample_rate), Phase.INSERTION, pose,
                   ctrl.params.z_c, 0.0, fz, segment.id)
        return pose, fz

    def _stance(self, ctrl: GaitController, segment: MudSegment, demand: float) -> Tuple[JointPose, bool]:
        """Sweep the flippers; returns the final pose and whether the mud ever held"""
        z_c = ctrl.params.z_c
        radius = self.geom.l * math.cos(ctrl.beta_stance)
        alpha_prev = ctrl.params.sweep_range[0]
        per_flipper = demand / len(self.options.flippers)
        anchored = False
        pose, fx, fz = None, 0.0, 0.0
        for flipper in self.state.flippers.values():
            flipper.shear.reset()

        for cmd in ctrl.trajectory(Phase.STANCE, self.motor.sample_rate):
            pose = cmd.pose
            ds = radius * (pose.alpha - alpha_prev)
            alpha_prev = pose.alpha
            forces = {
                name: shear_force(flipper.shear, z_c, self.geom, segment.coeffs.k_s, per_flipper)
                for name, flipper in self.state.flippers.items()
            }
            fx = forces[self.options.flippers[0]]
            fz = penetration_force(z_c, pose, self.geom, segment.coeffs.k_p)
            self.state = step_dynamics(self.state, forces, demand, ds, self.dt, self.options.body_locked)
            anchored = anchored or self.state.v > 0.0
            self._emit(Phase.STANCE, pose, z_c, fx, fz, segment.id)
        self._hold(ctrl.pause_samples(self.motor.sample_rate), Phase.STANCE, pose, z_c, fx, fz, segment.id)
        return pose, anchored

    def _extraction(self, ctrl: GaitController, segment: MudSegment, pose_i: JointPose,
                    stride: int) -> int:
        """
        Pull the flippers out, retrying after every halt

        Returns:
            Number of retries used

        Raises:
            Stuck: when the retry budget is exhausted
        """
        p = ctrl.params
        opts = self.options
        z_i = p.z_c
        alpha = p.sweep_range[1]
        k_eff = segment.coeffs.k_e
        depth = z_i
        retries = 0
        step_up = p.v_extract * self.dt
        step_down = p.v_insert * self.dt

        while depth > -p.clearance + 1e-12:
            target = max(depth - step_up, -p.clearance)
            pose = ctrl.depth_pose(alpha, target)
            fz = extraction_force(min(max(target, 0.0), z_i), z_i, self.geom, k_eff, pose_i)
            if -fz <= self.spec.f_m and self._within_limits(pose, 0.0, fz):
                depth = target
                self._emit(Phase.EXTRACTION, pose, depth, 0.0, fz, segment.id)
                continue

            retries += 1
            hold_pose = ctrl.depth_pose(alpha, depth)
            self._emit(Phase.EXTRACTION, hold_pose, depth, 0.0, fz, segment.id, saturate=True)
            if retries > opts.n_retry:
                raise Stuck(opts.n_retry, depth)
            trial_logger.extraction_retry(stride, retries, depth, segment=segment.id)

            self._hold(int(round(opts.retry_dwell / self.dt)), Phase.EXTRACTION, hold_pose,
                       depth, 0.0, 0.0, segment.id)
            bottom = min(z_i, depth + opts.redescend_fraction * z_i)
            while depth < bottom - 1e-12:
                depth = min(depth + step_down, bottom)
                self._emit(Phase.EXTRACTION, ctrl.depth_pose(alpha, depth), depth, 0.0, 0.0, segment.id)
            k_eff *= opts.remold_factor

        self._hold(ctrl.pause_samples(self.motor.sample_rate), Phase.EXTRACTION,
                   ctrl.depth_pose(alpha, depth), depth, 0.0, 0.0, segment.id)
        return retries

    def _swing(self, ctrl: GaitController, segment: MudSegment):
        cmd = None
        self.state = replace(self.state, v=0.0)
        for cmd in ctrl.trajectory(Phase.SWING, self.motor.sample_rate):
            self._emit(Phase.SWING, cmd.pose, cmd.depth, 0.0, 0.0, segment.id)
        self._hold(ctrl.pause_samples(self.motor.sample_rate), Phase.SWING, cmd.pose,
                   cmd.depth, 0.0, 0.0, segment.id)

    def _recover(self, ctrl: GaitController, segment: MudSegment, depth: float):
        """Strain at the torque limit until the remolded mud lets go, then lift out"""
        p = ctrl.params
        alpha = p.sweep_range[1]
        pose = ctrl.depth_pose(alpha, depth)
        lift = -self.motor.tau_max * math.cos(alpha) * math.cos(pose.beta) / self.geom.l
        self._hold(int(round(self.options.recovery_time / self.dt)), Phase.EXTRACTION, pose,
                   depth, 0.0, lift, segment.id, saturate=True)
        while depth > -p.clearance + 1e-12:
            depth = max(depth - p.v_extract * self.dt, -p.clearance)
            self._emit(Phase.EXTRACTION, ctrl.depth_pose(alpha, depth), depth, 0.0, 0.0, segment.id)

    # --- estimation ------------------------------------------------------

    def _estimate(self, start: int, surface_known: bool) -> StepEstimates:
        """Average the per-flipper estimates of the stride that began at sample ``start``"""
        drag = self.spec.drag(self.belief.k_s) if self.belief.k_s else self.spec.f_r
        per_flipper = []
        for name in self.options.flippers:
            step = StepLog(
                self.records[name][start:], self.geom,
                body_x=self.body_x[start:], body_v=self.body_v[start:],
                surface_height=0.0 if surface_known else None,
            )
            per_flipper.append(estimate_step(step, self.geom, drag, self.options.contact_threshold,
                                             self.options.steady_fraction))
        result = per_flipper[0]
        if len(per_flipper) > 1:
            for key in ('k_p', 'k_s', 'k_s_compensated', 'k_e'):
                estimates = [getattr(r, key) for r in per_flipper]
                if all(e is not None for e in estimates):
                    value = float(np.mean([e.value for e in estimates]))
                    setattr(result, key, replace(estimates[0], value=value))
        return result

    # --- strides ---------------------------------------------------------

    def _stride(self, index: int, z_c: float) -> List[StrideRecord]:
        segment = self.trackway.segment_at(self.state.x)
        ctrl = GaitController(self.params.with_depth(z_c), self.geom)
        demand = (math.inf if self.options.body_locked else
                  self.spec.drag(segment.coeffs.k_s)
                  + self.spec.accel_force(self.params.v_stance, ctrl.cycle_time))
        x0, k0, start = self.state.x, self.k, len(self.body_v)
        if not self.state.flippers:
            self.state.flippers = {name: FlipperState(JointPose(0.0, 0.0), 0.0) for name in self.options.flippers}

        self._insertion(ctrl, segment)
        pose_i, solidified = self._stance(ctrl, segment, demand)
        records = []
        try:
            retries = self._extraction(ctrl, segment, pose_i, index)
            stuck_depth = None
        except Stuck as e:
            retries, stuck_depth = e.retries, e.depth

        estimates = self._estimate(start, self.options.body_locked)
        for coefficient, reason in estimates.errors.items():
            trial_logger.estimate_skipped(index, coefficient, reason, segment=segment.id)
        if not self.options.body_locked:
            k_s = estimates.k_s.value if estimates.k_s is not None else None
            self.belief.update(
                estimates.k_p.value if estimates.k_p is not None else None,
                k_s,
                estimates.k_e.value if estimates.k_e is not None else None,
                anchored=estimates.advancing,
            )

        if stuck_depth is None:
            self._swing(ctrl, segment)
        stride = StrideRecord(
            index=index, segment=segment.id, z_cmd=z_c,
            stride_length=self.state.x - x0, duration=(self.k - k0) * self.dt,
            commanded_arc=ctrl.stance_arc, retries=retries, solidified=solidified,
            stuck=stuck_depth is not None, estimates=estimates.values,
        )
        records.append(stride)

        if stuck_depth is not None:
            k1 = self.k
            self._recover(ctrl, segment, stuck_depth)
            self._swing(ctrl, segment)
            records.append(StrideRecord(
                index=index + 1, segment=segment.id, z_cmd=z_c, stride_length=0.0,
                duration=(self.k - k1) * self.dt, commanded_arc=ctrl.stance_arc,
                solidified=True, recovery=True,
            ))
        return records

    def _next_depth(self, stride: int, z_c: float) -> Tuple[float, Optional[DepthDecision]]:
        if not self.mode.adaptive or not self.belief.ready:
            return z_c, None
        decision = adapt_depth(self.belief.coefficients(), self.spec, self.geom,
                               self.params.with_depth(z_c), self.options.margin, self.options.z_min)
        trial_logger.depth_adapted(stride, decision.z, decision.binding, decision.feasible)
        return decision.z, decision

    def run(self) -> TrialResult:
        opts = self.options
        trial_logger.trial_started(self.mode.label, self.seed, self.trackway.length)
        z_c = opts.bootstrap_depth if self.mode.adaptive else self.mode.z
        decision = None
        strides: List[StrideRecord] = []

        while len(strides) < opts.stride_budget:
            if not opts.body_locked and self.state.x >= self.trackway.length:
                break
            new = self._stride(len(strides), z_c)
            new[0].decision = decision
            events = detect_failures(new, opts.slip_fraction)
            for record in new:
                record.failures = tuple(e.kind.value for e in events if e.stride == record.index)
                trial_logger.stride_completed(record.index, record.segment, record.stride_length,
                                              record.z_cmd, failures=list(record.failures))
            for event in events:
                trial_logger.failure_detected(event.stride, event.segment, event.kind.value)
            strides.extend(new)
            z_c, decision = self._next_depth(len(strides), z_c)

        velocities = segment_velocities(strides, self.trackway)
        result = TrialResult(
            mode=self.mode.label, seed=self.seed, strides=strides,
            segment_velocity=velocities, final_x=self.state.x,
            failures=detect_failures(strides, opts.slip_fraction), rows=self.rows,
        )
        trial_logger.trial_completed(len(strides), self.state.x, result.segment_velocity_cm_s)
        return result


def run_trial(trackway: Trackway, mode: GaitMode, params: GaitParams, spec: RobotSpec, seed: int,
              geom: Optional[FlipperGeometry] = None, motor: Optional[MotorSpec] = None,
              options: Optional[SimOptions] = None) -> TrialResult:
    """
    Run one trial across ``trackway``

    Args:
        trackway: Mud segments along the rail
        mode: Fixed insertion depth or adaptive depth selection
        params: Gait speeds, sweep and pauses; ``z_c`` is overridden by the mode
        spec: Robot drag, inertia and lifting capacity
        seed: Base seed of every noise stream in the trial
        geom: Flipper geometry
        motor: Motor specification, including sample rate and noise
        options: Retry policy, stride budget and estimator settings

    Returns:
        TrialResult with per-stride records and the full sample log
    """
    geom = geom or FlipperGeometry()
    motor = motor or MotorSpec()
    options = options or SimOptions()
    try:
        if not mode.adaptive:
            params.with_depth(mode.z).validate(geom)
    except ValueError as e:
        raise ConfigError(f"Invalid gait mode {mode.label}: {e}") from e
    return TrialRunner(trackway, mode, params, spec, seed, geom, motor, options).run()
