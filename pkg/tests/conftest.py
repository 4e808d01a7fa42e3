"""
Shared fixtures for the simulator tests
"""

import math

import pytest

from mudsense.actuator import MotorSpec
from mudsense.gait_controller import GaitParams, RobotSpec
from mudsense.kinematics import FlipperGeometry
from mudsense.locomotion_sim import GaitMode, SimOptions, Trackway, run_trial
from mudsense.mud_oracle import DEFAULT_CATALOG, MudCoefficients, MudSegment


@pytest.fixture
def geom():
    return FlipperGeometry()


@pytest.fixture
def quiet_motor():
    return MotorSpec(noise_rel=0.0)


@pytest.fixture
def motor():
    return MotorSpec()


@pytest.fixture
def params():
    return GaitParams()


@pytest.fixture
def fast_params():
    """Slow insertion for sensing, quick everything else"""
    return GaitParams(v_insert=0.1, v_stance=0.5, v_extract=0.5, v_swing=0.5)


@pytest.fixture
def spec(geom):
    return RobotSpec.from_motor(12.0, geom)


@pytest.fixture
def catalog():
    return DEFAULT_CATALOG


def uniform_trackway(coeffs: MudCoefficients, length: float = 1.0, w: float = 0.5) -> Trackway:
    return Trackway((MudSegment('mud', 0.0, length, w, coeffs),))


def static_trial(coeffs: MudCoefficients, motor: MotorSpec, seed: int = 0, depth: float = 0.03,
                 geom: FlipperGeometry = None, params: GaitParams = None):
    """One body-locked gait cycle of the right flipper"""
    geom = geom or FlipperGeometry()
    params = (params or GaitParams()).with_depth(depth)
    options = SimOptions(body_locked=True, flippers=('right',), stride_budget=1)
    return run_trial(uniform_trackway(coeffs), GaitMode(adaptive=False, z=depth), params,
                     RobotSpec.from_motor(motor.tau_max, geom), seed, geom, motor, options)


def rel_error(estimate: float, truth: float) -> float:
    return abs(estimate / truth - 1.0) if math.isfinite(estimate) else math.inf


def static_step(coeffs: MudCoefficients, motor: MotorSpec, seed: int = 0, depth: float = 0.03,
                params: GaitParams = None, geom: FlipperGeometry = None, surface_known: bool = True):
    """StepLog of one body-locked cycle, built from the logged records only"""
    from mudsense.estimator import StepLog
    from mudsense.locomotion_sim import TrialRunner

    geom = geom or FlipperGeometry()
    params = (params or GaitParams()).with_depth(depth)
    options = SimOptions(body_locked=True, flippers=('right',), stride_budget=1)
    runner = TrialRunner(uniform_trackway(coeffs), GaitMode(adaptive=False, z=depth), params,
                         RobotSpec.from_motor(motor.tau_max, geom), seed, geom, motor, options)
    runner.run()
    return StepLog(runner.records['right'], geom, body_x=runner.body_x, body_v=runner.body_v,
                   surface_height=0.0 if surface_known else None)
