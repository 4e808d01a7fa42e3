"""
Crunching-gait state machine, flipper trajectories and adaptive depth selection
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterator, Optional, Tuple

from .exceptions import WorkspaceExceeded
from .kinematics import (
    FlipperGeometry, JointPose, SINGULAR_EPS, arc_length, normalized_determinant,
    penetration_integral, solve_adduction,
)
from .logger import get_logger
from .mud_oracle import MudCoefficients
from .utils import validate_positive, validate_non_negative

logger = get_logger(__name__)

SAFETY_MARGIN = 1.2
BOOTSTRAP_DEPTH = 0.04
DEPTH_FLOOR = 0.02
MIXTURE_JUMP = 0.15  # relative k_p or k_e step that signals a new mixture
DRAG_MODELS = ('constant', 'shear_proportional')


class Phase(str, Enum):
    INSERTION = 'insertion'
    STANCE = 'stance'
    EXTRACTION = 'extraction'
    SWING = 'swing'

    @property
    def next(self) -> 'Phase':
        order = list(Phase)
        return order[(order.index(self) + 1) % len(order)]


@dataclass(frozen=True)
class GaitParams:
    z_c: float = 0.03
    v_insert: float = 0.1
    v_stance: float = 0.1
    v_extract: float = 0.1
    v_swing: float = 0.1
    sweep_range: Tuple[float, float] = (-math.pi / 6, math.pi / 6)
    inter_phase_pause: float = 0.0
    clearance: float = 0.01  # tip height above the mud during swing

    def __post_init__(self):
        validate_positive('z_c', self.z_c)
        for name in ('v_insert', 'v_stance', 'v_extract', 'v_swing'):
            validate_positive(name, getattr(self, name))
        validate_non_negative('inter_phase_pause', self.inter_phase_pause)
        validate_non_negative('clearance', self.clearance)
        lo, hi = self.sweep_range
        if not lo < hi:
            raise ValueError(f"Invalid sweep range {self.sweep_range}: start must be below end")

    def validate(self, geom: FlipperGeometry):
        if self.z_c > geom.h:
            raise ValueError(f"Insertion depth {self.z_c} exceeds flipper height {geom.h}")

    def with_depth(self, z_c: float) -> 'GaitParams':
        return replace(self, z_c=z_c)


@dataclass(frozen=True)
class RobotSpec:
    f_m: float = 12.0 / 0.115
    body_mass: float = 1.5
    drag_model: str = 'constant'
    f_r: float = 2.5
    drag_per_strength: float = 1.2e-5  # N of drag per unit k_s (shear_proportional)
    f_a: Optional[float] = 0.1

    def __post_init__(self):
        validate_positive('f_m', self.f_m)
        validate_positive('body_mass', self.body_mass)
        validate_non_negative('f_r', self.f_r)
        validate_non_negative('drag_per_strength', self.drag_per_strength)
        if self.f_a is not None:
            validate_non_negative('f_a', self.f_a)
        if self.drag_model not in DRAG_MODELS:
            raise ValueError(f"Invalid drag model '{self.drag_model}'. Must be one of {DRAG_MODELS}")

    @classmethod
    def from_motor(cls, tau_max: float, geom: FlipperGeometry, **kwargs) -> 'RobotSpec':
        return cls(f_m=tau_max / geom.l, **kwargs)

    def drag(self, k_s: float) -> float:
        """Body drag on the rail for mud of shear strength k_s"""
        if self.drag_model == 'constant':
            return self.f_r
        return self.drag_per_strength * k_s

    def accel_force(self, v_stance: float, cycle_time: float) -> float:
        """Inertial share of the demand; body mass times mean stride acceleration when unset"""
        if self.f_a is not None:
            return self.f_a
        return self.body_mass * v_stance / cycle_time


@dataclass(frozen=True)
class DepthDecision:
    z: float
    feasible: bool
    binding: str
    z_slip: float
    z_extract: float


@dataclass(frozen=True)
class PhaseCommand:
    phase: Phase
    pose: JointPose
    depth: float
    tip_velocity: Tuple[float, float]  # (tangential, downward) m/s
    moving: bool = True


class GaitController:
    """
    Commanded trajectories of one gait cycle at a fixed insertion depth

    Both flippers follow the same commands in mirrored synchrony.
    """

    def __init__(self, params: GaitParams, geom: FlipperGeometry):
        params.validate(geom)
        self.params = params
        self.geom = geom
        self.beta_stance = solve_adduction(params.z_c, geom)
        self.beta_swing = solve_adduction(-params.clearance, geom)
        for alpha in params.sweep_range:
            for beta in (self.beta_stance, self.beta_swing):
                if abs(normalized_determinant(JointPose(alpha, beta))) < SINGULAR_EPS:
                    raise WorkspaceExceeded(
                        f"Sweep limit {math.degrees(alpha):.1f} deg reaches a singular pose"
                    )

        travel = params.z_c + params.clearance
        self.durations: Dict[Phase, float] = {
            Phase.INSERTION: travel / params.v_insert,
            Phase.STANCE: self.stance_arc / params.v_stance,
            Phase.EXTRACTION: travel / params.v_extract,
            Phase.SWING: arc_length(params.sweep_range, self.beta_swing, geom) / params.v_swing,
        }

    @property
    def stance_arc(self) -> float:
        return arc_length(self.params.sweep_range, self.beta_stance, self.geom)

    @property
    def cycle_time(self) -> float:
        return sum(self.durations.values()) + len(Phase) * self.params.inter_phase_pause

    def depth_pose(self, alpha: float, depth: float) -> JointPose:
        """Pose that holds the tip at ``depth``, solved fresh every call"""
        return JointPose(alpha, solve_adduction(depth, self.geom))

    def command(self, phase: Phase, tau: float) -> PhaseCommand:
        """Commanded state ``tau`` seconds into ``phase``"""
        p = self.params
        tau = min(max(tau, 0.0), self.durations[phase])
        lo, hi = p.sweep_range
        if phase is Phase.INSERTION:
            depth = min(-p.clearance + p.v_insert * tau, p.z_c)
            return PhaseCommand(phase, self.depth_pose(lo, depth), depth, (0.0, p.v_insert))
        if phase is Phase.STANCE:
            radius = self.geom.l * math.cos(self.beta_stance)
            alpha = min(lo + p.v_stance * tau / radius, hi)
            return PhaseCommand(phase, self.depth_pose(alpha, p.z_c), p.z_c, (p.v_stance, 0.0))
        if phase is Phase.EXTRACTION:
            depth = max(p.z_c - p.v_extract * tau, -p.clearance)
            return PhaseCommand(phase, self.depth_pose(hi, depth), depth, (0.0, -p.v_extract))
        radius = self.geom.l * math.cos(self.beta_swing)
        alpha = max(hi - p.v_swing * tau / radius, lo)
        return PhaseCommand(phase, JointPose(alpha, self.beta_swing), -p.clearance, (-p.v_swing, 0.0))

    def phase_step(self, clock: float) -> PhaseCommand:
        """Command at absolute time ``clock``; the cycle repeats indefinitely"""
        t = clock % self.cycle_time
        for phase in Phase:
            duration = self.durations[phase]
            if t < duration:
                return self.command(phase, t)
            t -= duration
            if t < self.params.inter_phase_pause:
                hold = self.command(phase, duration)
                return replace(hold, tip_velocity=(0.0, 0.0), moving=False)
            t -= self.params.inter_phase_pause
        # Floating-point remainder at the very end of the cycle
        return self.command(Phase.SWING, self.durations[Phase.SWING])

    def sample_count(self, phase: Phase, sample_rate: float) -> int:
        return max(1, math.ceil(self.durations[phase] * sample_rate - 1e-9))

    def trajectory(self, phase: Phase, sample_rate: float) -> Iterator[PhaseCommand]:
        """Commands at consecutive sample instants, ending exactly at phase completion"""
        n = self.sample_count(phase, sample_rate)
        for k in range(1, n + 1):
            yield self.command(phase, k / sample_rate)

    def pause_samples(self, sample_rate: float) -> int:
        return int(round(self.params.inter_phase_pause * sample_rate))


def phase_step(clock: float, params: GaitParams, geom: FlipperGeometry) -> PhaseCommand:
    return GaitController(params, geom).phase_step(clock)


def max_depth(geom: FlipperGeometry) -> float:
    """Deepest admissible insertion: plate height or arm reach, whichever is smaller"""
    return min(geom.h, geom.reach - geom.shoulder_height)


def peak_suction(z: float, k_e: float, geom: FlipperGeometry) -> float:
    """Extraction peak for an insertion to ``z`` held by inverse kinematics"""
    if z <= 0.0:
        return 0.0
    return k_e * penetration_integral(solve_adduction(z, geom), z, geom)


def extraction_bound(k_e: float, capacity: float, geom: FlipperGeometry, tol: float = 1e-7) -> float:
    """Largest depth whose extraction peak stays within ``capacity``"""
    z_hi = max_depth(geom)
    if peak_suction(z_hi, k_e, geom) <= capacity:
        return z_hi
    lo, hi = 0.0, z_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if peak_suction(mid, k_e, geom) <= capacity:
            lo = mid
        else:
            hi = mid
    return lo


def adapt_depth(estimates: MudCoefficients, spec: RobotSpec, geom: FlipperGeometry, params: GaitParams,
                margin: float = SAFETY_MARGIN, z_min: float = DEPTH_FLOOR) -> DepthDecision:
    """
    Choose the next insertion depth from the latest coefficient estimates

    The slip constraint asks both flippers together to out-yield drag plus
    inertia; the extraction constraint keeps the suction peak under the
    lifting capacity. Both carry ``margin``. The shallowest slip-safe depth
    is taken when it also extracts; otherwise the deepest extractable depth
    is returned and flagged infeasible.

    Args:
        estimates: MudCoefficients from the most recent stride
        spec: Robot drag, inertia and lift capacity
        geom: Flipper geometry
        params: Current gait parameters
        margin: Safety factor on both constraints
        z_min: Shallowest depth the gait will command

    Returns:
        DepthDecision
    """
    k_s, k_e = estimates.k_s, estimates.k_e
    z_hi = max_depth(geom)
    cycle = GaitController(params.with_depth(min(params.z_c, z_hi)), geom).cycle_time
    demand = spec.drag(k_s) + spec.accel_force(params.v_stance, cycle)
    capacity = spec.f_m / margin

    z_slip = math.sqrt(margin * demand / (k_s * geom.b))
    z_extract = extraction_bound(k_e, capacity, geom)
    if z_slip <= z_extract:
        z, feasible, binding = z_slip, True, 'slip'
    else:
        z, feasible, binding = z_extract, False, 'extraction'

    clamped = min(max(z, z_min), z_hi)
    if clamped != z:
        z, binding = clamped, 'clamp'
        slip_ok = k_s * geom.b * z * z >= margin * demand * (1.0 - 1e-9)
        extract_ok = peak_suction(z, k_e, geom) <= capacity * (1.0 + 1e-9)
        feasible = slip_ok and extract_ok

    if not feasible:
        logger.warning(
            f"No insertion depth satisfies both constraints: slip needs {z_slip * 100:.2f} cm, "
            f"extraction allows {z_extract * 100:.2f} cm; using {z * 100:.2f} cm",
            extra={'event': 'depth_infeasible', 'z_slip': z_slip, 'z_extract': z_extract, 'z': z}
        )
    return DepthDecision(z=z, feasible=feasible, binding=binding, z_slip=z_slip, z_extract=z_extract)


class MudBelief:
    """
    Coefficients the adaptive gait plans with, refreshed once per stride

    A slipping stance measures the yield force directly. A solidified stance
    only shows that the yield force exceeded the demand, so it can raise the
    belief but never lower it. A jump in k_p or k_e beyond ``jump`` marks a
    new mixture; the shear belief then restarts from the current stride.
    """

    def __init__(self, jump: float = MIXTURE_JUMP):
        self.k_p: Optional[float] = None
        self.k_s: Optional[float] = None
        self.k_e: Optional[float] = None
        self.jump = validate_positive('jump', jump)

    @property
    def ready(self) -> bool:
        return None not in (self.k_p, self.k_s, self.k_e)

    @staticmethod
    def _usable(value: Optional[float]) -> bool:
        return value is not None and math.isfinite(value) and value > 0

    def _moved(self, old: Optional[float], new: Optional[float]) -> bool:
        return old is not None and self._usable(new) and abs(new - old) > self.jump * old

    def mixture_changed(self, k_p: Optional[float], k_e: Optional[float]) -> bool:
        return self._moved(self.k_p, k_p) or self._moved(self.k_e, k_e)

    def update(self, k_p: Optional[float], k_s: Optional[float], k_e: Optional[float], anchored: bool):
        changed = self.mixture_changed(k_p, k_e)
        if changed:
            logger.info(f"Mixture change: k_p {self.k_p} -> {k_p}, k_e {self.k_e} -> {k_e}",
                        extra={'event': 'mixture_change', 'k_p': k_p, 'k_e': k_e})
        if self._usable(k_p):
            self.k_p = k_p
        if self._usable(k_e):
            self.k_e = k_e
        if self._usable(k_s):
            if anchored and self.k_s is not None and not changed:
                self.k_s = max(self.k_s, k_s)
            else:
                self.k_s = k_s
        elif changed:
            self.k_s = None

    def coefficients(self) -> MudCoefficients:
        return MudCoefficients(self.k_p, self.k_s, self.k_e)
