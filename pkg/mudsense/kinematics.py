"""
Flipper geometry, joint-to-task mapping and proprioceptive force propagation

Frame conventions: z is insertion depth (positive below the nominal mud
level), x is fore-aft with positive fx the propulsive reaction on the
flipper. The sweeping joint alpha turns about the vertical; positive
alpha points the arm rearward. The adduction joint beta lifts the arm,
positive beta lowers the flipper tip.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .exceptions import SingularPose, WorkspaceExceeded
from .logger import get_logger
from .utils import validate_positive, validate_non_negative

logger = get_logger(__name__)

SINGULAR_EPS = 1e-9
QUAD_STEP = 0.0005
COS_FLOOR = 1e-9

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class FlipperGeometry:
    """Rigid rectangular flipper plate on a two-joint arm"""
    l: float = 0.115
    b: float = 0.025
    h: float = 0.07
    t: float = 0.005
    shoulder_height: float = 0.03  # shoulder axis above the nominal mud level

    def __post_init__(self):
        for name in ('l', 'b', 'h', 't'):
            validate_positive(name, getattr(self, name))
        validate_non_negative('shoulder_height', self.shoulder_height)

    @property
    def reach(self) -> float:
        """Distance from the shoulder axis to the plate tip"""
        return math.hypot(self.l, self.h)


@dataclass(frozen=True)
class JointPose:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"Invalid pose ({self.alpha}, {self.beta}): angles must be finite")


@dataclass(frozen=True)
class JointTorques:
    tau1: float
    tau2: float


@dataclass(frozen=True)
class ForceVector:
    """Task-space force; fy is None when it is not sensed"""
    fx: float
    fz: float
    fy: Optional[float] = None


@dataclass(frozen=True)
class SubmergedGeometry:
    """Submerged part of the plate at a given pose and insertion depth"""
    z: float
    a_vert: float
    beta: float
    geom: FlipperGeometry

    def width_profile(self, z_prime: ArrayLike) -> ArrayLike:
        """Projected width available for shear at depth z_prime"""
        inside = (np.asarray(z_prime) >= 0.0) & (np.asarray(z_prime) <= self.z)
        width = np.where(inside, self.geom.b, 0.0)
        return float(width) if width.ndim == 0 else width

    @property
    def penetration_integral(self) -> float:
        return penetration_integral(self.beta, self.z, self.geom)

    @property
    def shear_integral(self) -> float:
        return shear_integral(self.z, self.geom)


def force_map_matrix(pose: JointPose, geom: FlipperGeometry) -> np.ndarray:
    """Matrix M with [fx, fz] = M @ [tau1, tau2]"""
    ca, sa = math.cos(pose.alpha), math.sin(pose.alpha)
    cb, sb = math.cos(pose.beta), math.sin(pose.beta)
    return np.array([
        [ca / geom.l, 0.0],
        [-sb * sa / geom.l, cb * ca / geom.l],
    ])


def normalized_determinant(pose: JointPose) -> float:
    """det(M) scaled by l**2, i.e. cos(alpha)**2 * cos(beta)"""
    return math.cos(pose.alpha) ** 2 * math.cos(pose.beta)


def torques_to_forces(tau: JointTorques, pose: JointPose, geom: FlipperGeometry) -> ForceVector:
    ca, sa = math.cos(pose.alpha), math.sin(pose.alpha)
    cb, sb = math.cos(pose.beta), math.sin(pose.beta)
    fx = ca * tau.tau1 / geom.l
    fz = (-sb * sa * tau.tau1 + cb * ca * tau.tau2) / geom.l
    return ForceVector(fx=fx, fz=fz)


def forces_to_torques(f: ForceVector, pose: JointPose, geom: FlipperGeometry,
                      eps: float = SINGULAR_EPS) -> JointTorques:
    """
    Joint torques that produce the task-space force ``f``

    Raises:
        SingularPose: if the normalized determinant is below ``eps``
    """
    det = normalized_determinant(pose)
    if abs(det) < eps:
        raise SingularPose(
            f"Force map singular at alpha={math.degrees(pose.alpha):.4f} deg, "
            f"beta={math.degrees(pose.beta):.4f} deg (|det| l^2 = {abs(det):.3e})"
        )
    ca, sa = math.cos(pose.alpha), math.sin(pose.alpha)
    cb, sb = math.cos(pose.beta), math.sin(pose.beta)
    tau1 = geom.l * f.fx / ca
    tau2 = (geom.l * f.fz + sb * sa * tau1) / (cb * ca)
    return JointTorques(tau1=tau1, tau2=tau2)


def tip_depth(beta: float, geom: FlipperGeometry) -> float:
    """Plate tip depth below the nominal mud level for adduction angle beta"""
    return geom.l * math.sin(beta) + geom.h * math.cos(beta) - geom.shoulder_height


def tip_height(beta: float, geom: FlipperGeometry) -> float:
    """Plate tip height above the nominal mud level, from encoder angles"""
    return -tip_depth(beta, geom)


def solve_adduction(depth: float, geom: FlipperGeometry) -> float:
    """
    Adduction angle that places the plate tip at ``depth``

    Args:
        depth: Target tip depth below the nominal mud level, meters
        geom: Flipper geometry

    Returns:
        beta in radians

    Raises:
        WorkspaceExceeded: if no adduction angle reaches the depth
    """
    ratio = (depth + geom.shoulder_height) / geom.reach
    if not -1.0 <= ratio <= 1.0:
        raise WorkspaceExceeded(
            f"Tip depth {depth * 100:.2f} cm is outside the reach of a "
            f"{geom.reach * 100:.2f} cm arm mounted {geom.shoulder_height * 100:.2f} cm above the mud"
        )
    return math.asin(ratio) - math.atan2(geom.h, geom.l)


def arc_length(sweep: Tuple[float, float], beta: float, geom: FlipperGeometry) -> float:
    """Arc traced by the arm end when alpha crosses ``sweep`` at fixed beta"""
    return geom.l * math.cos(beta) * abs(sweep[1] - sweep[0])


def vertical_area(beta: float, depth: ArrayLike, geom: FlipperGeometry) -> ArrayLike:
    """Area of the submerged plate projected on the horizontal plane"""
    c = abs(math.cos(beta))
    s = abs(math.sin(beta))
    submerged = np.minimum(np.asarray(depth, dtype=float) / max(c, COS_FLOOR), geom.h)
    area = geom.b * (geom.t * c + submerged * s)
    return float(area) if area.ndim == 0 else area


def _depth_grid(depth: float) -> np.ndarray:
    cells = max(1, math.ceil(depth / QUAD_STEP - 1e-9))
    return np.linspace(0.0, depth, cells + 1)


def penetration_integral(beta: float, depth: float, geom: FlipperGeometry) -> float:
    """Integral of the projected area over insertion depth (trapezoid rule)"""
    if depth <= 0.0:
        return 0.0
    zs = _depth_grid(depth)
    return float(np.trapezoid(vertical_area(beta, zs, geom), zs))


def shear_integral(depth: float, geom: FlipperGeometry) -> float:
    """Depth-weighted projected width integral of the shear model"""
    if depth <= 0.0:
        return 0.0
    zs = _depth_grid(depth)
    return float(np.trapezoid(geom.b * zs, zs))


def submerged_geometry(pose: JointPose, geom: FlipperGeometry, depth: float) -> SubmergedGeometry:
    """
    Submerged extent of the plate at a given tip depth

    A tip at the surface has nothing below the mud line, so its
    projected area is reported as zero.
    """
    if depth < 0.0:
        raise ValueError(f"Invalid tip depth: {depth}. Must be non-negative")
    a_vert = vertical_area(pose.beta, depth, geom) if depth > 0.0 else 0.0
    return SubmergedGeometry(z=depth, a_vert=a_vert, beta=pose.beta, geom=geom)
