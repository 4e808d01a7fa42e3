"""
Proprioceptive estimation of mud coefficients

Everything here works from logged joint angles and motor currents only,
plus the body-advancement flag. Each coefficient enters its force model
linearly, so every fit is a closed-form scalar least squares over a
selected window of one gait cycle.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .actuator import SampleRecord
from .exceptions import DegenerateWindow, NoContact, NoPeak
from .gait_controller import Phase
from .kinematics import (
    FlipperGeometry, JointPose, JointTorques, penetration_integral, shear_integral,
    tip_height, torques_to_forces,
)
from .logger import get_logger
from .mud_oracle import RAMP_FRACTION, extraction_profile
from .utils import fit_scalar, longest_run, moving_average

logger = get_logger(__name__)

CONTACT_THRESHOLD = 0.5
PEAK_THRESHOLD = 0.5
MIN_FIT_SAMPLES = 10
MIN_STEADY_SAMPLES = 20
STEADY_FRACTION = 0.1
STEADY_RATE_FLOOR = 1e-9
SMOOTH_WIDTH = 9
ADVANCE_SPEED = 0.005
ADVANCE_SAMPLES = 10
ENERGY_EPS = 1e-24


@dataclass(frozen=True)
class ContactEvent:
    t_contact: float
    surface_height: float
    index: int


@dataclass(frozen=True)
class CoefficientEstimate:
    value: float
    residual_rmse: float
    window: Tuple[float, float]
    compensated: bool = False
    n_samples: int = 0

    def __post_init__(self):
        if self.residual_rmse < 0.0:
            raise ValueError(f"Invalid residual {self.residual_rmse}: must be non-negative")


class StepLog:
    """
    Samples of one flipper over one gait cycle, with derived task forces

    ``surface_height`` is the known mud level of a fixed rig; when it is
    None the surface is detected from the insertion forces.
    """

    def __init__(self, samples: Sequence[SampleRecord], geom: FlipperGeometry,
                 body_x: Optional[Sequence[float]] = None,
                 body_v: Optional[Sequence[float]] = None,
                 surface_height: Optional[float] = None):
        if not samples:
            raise ValueError("Step log needs at least one sample")
        self.samples = list(samples)
        self.geom = geom
        self.surface_height = surface_height

        order = [list(Phase).index(Phase(s.phase)) for s in self.samples]
        if any(b < a for a, b in zip(order, order[1:])):
            raise ValueError("Phase labels must follow insertion, stance, extraction, swing")

        self.t = np.array([s.t for s in self.samples])
        self.beta = np.array([s.beta for s in self.samples])
        self.phase = np.array([s.phase for s in self.samples])
        forces = [
            torques_to_forces(JointTorques(s.tau1_sense, s.tau2_sense), JointPose(s.alpha, s.beta), geom)
            for s in self.samples
        ]
        self.fx = np.array([f.fx for f in forces])
        self.fz = np.array([f.fz for f in forces])
        self.tip_height = np.array([tip_height(b, geom) for b in self.beta])
        self.body_x = None if body_x is None else np.asarray(body_x, dtype=float)
        self.body_v = None if body_v is None else np.asarray(body_v, dtype=float)

    def __len__(self):
        return len(self.samples)

    def indices(self, phase: Phase) -> np.ndarray:
        return np.flatnonzero(self.phase == phase.value)

    def depth(self, surface: float) -> np.ndarray:
        """Insertion depth of every sample below the given surface height"""
        return surface - self.tip_height


def detect_surface(step: StepLog, threshold: float = CONTACT_THRESHOLD) -> ContactEvent:
    """
    First insertion sample whose vertical force reaches ``threshold``

    Raises:
        NoContact: if the insertion never crosses the threshold
    """
    insertion = step.indices(Phase.INSERTION)
    if insertion.size == 0:
        raise NoContact("Step has no insertion phase")
    hits = insertion[step.fz[insertion] >= threshold]
    if hits.size == 0:
        raise NoContact(f"Insertion force never reached {threshold} N")
    i = int(hits[0])
    return ContactEvent(t_contact=float(step.t[i]), surface_height=float(step.tip_height[i]), index=i)


def _reference(step: StepLog, threshold: float) -> Tuple[float, int]:
    """Surface height and first usable insertion index"""
    if step.surface_height is not None:
        insertion = step.indices(Phase.INSERTION)
        return step.surface_height, int(insertion[0]) if insertion.size else 0
    contact = detect_surface(step, threshold)
    return contact.surface_height, contact.index


def estimate_kp(step: StepLog, geom: FlipperGeometry,
                threshold: float = CONTACT_THRESHOLD) -> CoefficientEstimate:
    """Penetration resistance from the insertion below the surface"""
    surface, start = _reference(step, threshold)
    insertion = step.indices(Phase.INSERTION)
    depth = step.depth(surface)
    idx = insertion[(insertion >= start) & (depth[insertion] > 0.0)]
    if idx.size < MIN_FIT_SAMPLES:
        raise DegenerateWindow(f"Only {idx.size} insertion samples below the surface")

    g = np.array([penetration_integral(step.beta[i], depth[i], geom) for i in idx])
    if float(np.dot(g, g)) < ENERGY_EPS:
        raise DegenerateWindow("No submerged travel during insertion")
    k_p, rmse = fit_scalar(g, step.fz[idx])
    if not k_p > 0.0:
        raise DegenerateWindow(f"Non-positive penetration fit {k_p}")
    return CoefficientEstimate(k_p, rmse, (float(step.t[idx[0]]), float(step.t[idx[-1]])), n_samples=int(idx.size))


def steady_window(step: StepLog, fraction: float = STEADY_FRACTION,
                  smooth: int = SMOOTH_WIDTH) -> Tuple[int, int]:
    """
    Steady-state stretch at the end of stance, as inclusive sample indices

    The smoothed force derivative must stay below ``fraction`` of its peak
    over the whole suffix; short suffixes fall back to the final half.
    """
    stance = step.indices(Phase.STANCE)
    if stance.size == 0:
        raise DegenerateWindow("Step has no stance phase")
    n = stance.size
    fallback = (int(stance[n // 2]), int(stance[-1]))
    if n < MIN_STEADY_SAMPLES:
        return fallback

    fx = moving_average(step.fx[stance], smooth)
    rate = np.abs(np.gradient(fx, step.t[stance]))
    peak = float(rate.max())
    duration = max(float(step.t[stance[-1]] - step.t[stance[0]]), 1e-12)
    # rounding noise of a flat force is not a rise
    if peak <= STEADY_RATE_FLOOR * max(1.0, float(np.abs(fx).max())) / duration:
        return int(stance[0]), int(stance[-1])
    above = np.flatnonzero(rate >= fraction * peak)
    first = int(above[-1]) + 1
    if n - first < MIN_STEADY_SAMPLES:
        return fallback
    return int(stance[first]), int(stance[-1])


def estimate_ks(step: StepLog, geom: FlipperGeometry, body_drag: float, advancing: bool,
                threshold: float = CONTACT_THRESHOLD,
                fraction: float = STEADY_FRACTION) -> CoefficientEstimate:
    """
    Shear strength from the steady stance force

    When the body advanced the mud had solidified and the flipper force
    only matched the demand; the body drag is then added back per flipper.
    """
    surface, _ = _reference(step, threshold)
    i0, i1 = steady_window(step, fraction)
    idx = np.arange(i0, i1 + 1)
    depth = np.clip(step.depth(surface)[idx], 0.0, None)

    s = np.array([shear_integral(d, geom) for d in depth])
    if float(np.dot(s, s)) < ENERGY_EPS:
        raise DegenerateWindow("Stance window has no submerged depth")
    fx = step.fx[idx]
    if advancing:
        fx = (2.0 * fx + body_drag) / 2.0
    k_s, rmse = fit_scalar(s, fx)
    if not k_s > 0.0:
        raise DegenerateWindow(f"Non-positive shear fit {k_s}")
    return CoefficientEstimate(k_s, rmse, (float(step.t[i0]), float(step.t[i1])),
                               compensated=advancing, n_samples=int(idx.size))


def _first_pull(extraction: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Leading run of extraction samples with strictly decreasing depth"""
    pull = []
    previous = extraction[0] - 1 if extraction[0] > 0 else None
    for i in extraction:
        if previous is not None and not depth[i] < depth[previous]:
            break
        pull.append(i)
        previous = i
    return np.array(pull, dtype=int)


def estimate_ke(step: StepLog, geom: FlipperGeometry, threshold: float = CONTACT_THRESHOLD,
                peak_threshold: float = PEAK_THRESHOLD,
                ramp_fraction: float = RAMP_FRACTION) -> CoefficientEstimate:
    """
    Extraction resistance from the suction peak of the first pull

    The fit window spans the samples around the peak whose suction is at
    least half of it.

    Raises:
        NoPeak: if suction never reaches ``peak_threshold``; the exception
            carries a zero estimate
    """
    extraction = step.indices(Phase.EXTRACTION)
    if extraction.size == 0:
        raise DegenerateWindow("Step has no extraction phase")
    suction = -step.fz
    if float(suction[extraction].max()) < peak_threshold:
        window = (float(step.t[extraction[0]]), float(step.t[extraction[-1]]))
        raise NoPeak(f"Extraction suction stayed below {peak_threshold} N",
                     estimate=CoefficientEstimate(0.0, 0.0, window))

    surface, _ = _reference(step, threshold)
    depth = step.depth(surface)
    ref = extraction[0] - 1 if extraction[0] > 0 else extraction[0]
    z_i = float(depth[ref])
    pull = _first_pull(extraction, depth)
    if pull.size == 0 or z_i <= 0.0:
        raise DegenerateWindow("Extraction never moved from the inserted depth")

    peak = float(suction[pull].max())
    strong = pull[suction[pull] >= 0.5 * peak]
    idx = pull[(pull >= strong[0]) & (pull <= strong[-1])]

    g_peak = penetration_integral(step.beta[ref], z_i, geom)
    phi = np.array([g_peak * extraction_profile(depth[i], z_i, ramp_fraction) for i in idx])
    if float(np.dot(phi, phi)) < ENERGY_EPS:
        raise DegenerateWindow("Suction window carries no model energy")
    k_e, rmse = fit_scalar(phi, suction[idx])
    if not k_e > 0.0:
        raise DegenerateWindow(f"Non-positive extraction fit {k_e}")
    return CoefficientEstimate(k_e, rmse, (float(step.t[idx[0]]), float(step.t[idx[-1]])), n_samples=int(idx.size))


def detect_advancing(step: StepLog, speed: float = ADVANCE_SPEED, samples: int = ADVANCE_SAMPLES) -> bool:
    """True when the body moved during stance for long enough to count"""
    if step.body_v is None:
        return False
    stance = step.indices(Phase.STANCE)
    return longest_run(step.body_v[stance] > speed) >= samples


@dataclass
class StepEstimates:
    """All coefficient estimates of one gait cycle"""
    k_p: Optional[CoefficientEstimate] = None
    k_s: Optional[CoefficientEstimate] = None
    k_s_compensated: Optional[CoefficientEstimate] = None
    k_e: Optional[CoefficientEstimate] = None
    advancing: bool = False
    errors: Dict[str, str] = field(default_factory=dict)

    @staticmethod
    def _value(estimate: Optional[CoefficientEstimate]) -> float:
        return estimate.value if estimate is not None else math.nan

    @property
    def values(self) -> Dict[str, float]:
        return {
            'kp_hat': self._value(self.k_p),
            'ks_hat': self._value(self.k_s),
            'ks_compensated': self._value(self.k_s_compensated),
            'ke_hat': self._value(self.k_e),
        }


def estimate_step(step: StepLog, geom: FlipperGeometry, body_drag: float,
                  threshold: float = CONTACT_THRESHOLD,
                  fraction: float = STEADY_FRACTION) -> StepEstimates:
    """
    Run every fit on one gait cycle, collecting failures instead of raising

    ``k_s`` is always the uncompensated fit; ``k_s_compensated`` adds the
    body drag back when the body advanced and equals ``k_s`` otherwise.
    """
    result = StepEstimates(advancing=detect_advancing(step))
    try:
        result.k_p = estimate_kp(step, geom, threshold)
    except (NoContact, DegenerateWindow) as e:
        result.errors['k_p'] = str(e)
    try:
        result.k_s = estimate_ks(step, geom, body_drag, False, threshold, fraction)
        result.k_s_compensated = (
            estimate_ks(step, geom, body_drag, True, threshold, fraction)
            if result.advancing else result.k_s
        )
    except (NoContact, DegenerateWindow) as e:
        result.errors['k_s'] = str(e)
    try:
        result.k_e = estimate_ke(step, geom, threshold)
    except NoPeak as e:
        result.k_e = e.estimate
        result.errors['k_e'] = str(e)
    except (NoContact, DegenerateWindow) as e:
        result.errors['k_e'] = str(e)
    return result
