"""
Direct-drive motor model and the single-actuator calibration experiment
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import TorqueLimit
from .logger import get_logger, trial_logger
from .utils import validate_positive, validate_non_negative, stream_rng

logger = get_logger(__name__)

GRAVITY = 9.81
CALIBRATION_WEIGHTS = (0.010, 0.020, 0.050, 0.100, 0.200, 0.400, 0.600, 0.800)


@dataclass(frozen=True)
class MotorSpec:
    k_t: float = 0.083
    tau_max: float = 12.0
    noise_rel: float = 0.032
    sample_rate: float = 380.0

    def __post_init__(self):
        validate_positive('k_t', self.k_t)
        validate_positive('tau_max', self.tau_max)
        validate_non_negative('noise_rel', self.noise_rel)
        validate_positive('sample_rate', self.sample_rate)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


@dataclass(frozen=True)
class SampleRecord:
    """One logged sample of a flipper's two motors"""
    t: float
    alpha: float
    beta: float
    I1: float
    I2: float
    tau1_sense: float
    tau2_sense: float
    phase: str
    flipper: str = 'right'


def torque_to_current(tau: float, spec: MotorSpec, rng: Optional[np.random.Generator] = None) -> float:
    """
    Motor current that delivers ``tau``, with multiplicative sensing noise

    Args:
        tau: Commanded joint torque, N*m
        spec: Motor specification
        rng: Noise stream of this motor; no noise when None

    Raises:
        TorqueLimit: if |tau| exceeds the motor limit
    """
    if abs(tau) > spec.tau_max:
        raise TorqueLimit(tau, spec.tau_max)
    current = tau / spec.k_t
    if rng is not None and spec.noise_rel > 0.0:
        current += rng.normal(0.0, spec.noise_rel * abs(current))
    return current


def sense_torque(current: float, spec: MotorSpec) -> float:
    return spec.k_t * current


@dataclass
class WeightStats:
    mass: float
    tau_ext: float
    mean: float
    std: float
    readings: List[float] = field(default_factory=list)


@dataclass
class CalibrationResult:
    joint: str
    moment_arm: float
    per_weight: List[WeightStats]
    rmse: float

    def rows(self) -> List[Dict[str, float]]:
        """Flat per-reading rows for the calibration table"""
        return [
            {'joint': self.joint, 'mass': ws.mass, 'trial': trial,
             'tau_ext': ws.tau_ext, 'tau_sense': reading}
            for ws in self.per_weight
            for trial, reading in enumerate(ws.readings)
        ]


def run_calibration(weights: Sequence[float], moment_arm: float, spec: MotorSpec,
                    trials: int = 5, seed: int = 0, joint: str = 'adduction') -> CalibrationResult:
    """
    Hang known weights on the arm and compare sensed to applied torque

    Args:
        weights: Suspended masses in kg
        moment_arm: Arm length the weights hang from, m
        spec: Motor specification; ``noise_rel == 0`` gives exact readings
        trials: Repetitions per weight
        seed: Base seed; each joint draws from its own stream
        joint: Joint label, also names the noise stream

    Returns:
        CalibrationResult with per-weight statistics and overall RMSE
    """
    validate_positive('moment_arm', moment_arm)
    if trials < 1:
        raise ValueError(f"Invalid trials: {trials}. Must be at least 1")
    rng = stream_rng(seed, f"calibration/{joint}")

    per_weight = []
    errors = []
    for mass in weights:
        validate_positive('weight', mass)
        tau_ext = mass * GRAVITY * moment_arm
        readings = [sense_torque(torque_to_current(tau_ext, spec, rng), spec) for _ in range(trials)]
        errors.extend(r - tau_ext for r in readings)
        per_weight.append(WeightStats(
            mass=mass,
            tau_ext=tau_ext,
            mean=float(np.mean(readings)),
            std=float(np.std(readings, ddof=1)) if trials > 1 else 0.0,
            readings=readings,
        ))

    rmse = float(np.sqrt(np.mean(np.square(errors)))) if errors else 0.0
    trial_logger.calibration_completed(joint, rmse, len(per_weight), noise_rel=spec.noise_rel)
    return CalibrationResult(joint=joint, moment_arm=moment_arm, per_weight=per_weight, rmse=rmse)
