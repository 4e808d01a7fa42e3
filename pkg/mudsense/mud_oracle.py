"""
Ground-truth mud reaction forces on a submerged flipper

Plays the part of the physical mud and of the load cell: it turns the
intrinsic coefficients of a mixture into penetration, shear and
extraction forces, including yield-stress solidification under low demand.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import OutOfRange
from .kinematics import FlipperGeometry, JointPose, penetration_integral, shear_integral
from .logger import get_logger
from .utils import validate_positive, fit_scalar

logger = get_logger(__name__)

SHEAR_RISE = 0.01       # characteristic shear displacement, m
RAMP_FRACTION = 0.15    # share of upward travel spent reaching the suction peak
W_MIN, W_MAX = 0.40, 0.60


@dataclass(frozen=True)
class MudCoefficients:
    k_p: float
    k_s: float
    k_e: float

    def __post_init__(self):
        for name in ('k_p', 'k_s', 'k_e'):
            validate_positive(name, getattr(self, name))

    def scaled(self, factor: float) -> 'MudCoefficients':
        return MudCoefficients(self.k_p * factor, self.k_s * factor, self.k_e * factor)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.k_p, self.k_s, self.k_e)


@dataclass(frozen=True)
class MudCatalog:
    """Measured mixtures ordered by water content"""
    entries: Tuple[Tuple[float, MudCoefficients], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("Mud catalog must have at least one entry")
        ws = [w for w, _ in self.entries]
        for w in ws:
            if not W_MIN < w < W_MAX:
                raise ValueError(f"Invalid water content {w}: must lie in ({W_MIN}, {W_MAX})")
        if any(b <= a for a, b in zip(ws, ws[1:])):
            raise ValueError(f"Catalog water contents must be strictly increasing: {ws}")
        for (w1, c1), (w2, c2) in zip(self.entries, self.entries[1:]):
            for name in ('k_p', 'k_s', 'k_e'):
                if getattr(c2, name) > getattr(c1, name):
                    raise ValueError(
                        f"Catalog {name} increases from w={w1} to w={w2}; "
                        f"coefficients must be non-increasing in water content"
                    )

    @property
    def span(self) -> Tuple[float, float]:
        return self.entries[0][0], self.entries[-1][0]

    def scaled(self, factor: float) -> 'MudCatalog':
        return MudCatalog(tuple((w, c.scaled(factor)) for w, c in self.entries))

    def lookup(self, w: float) -> MudCoefficients:
        return catalog_lookup(self, w)


DEFAULT_CATALOG = MudCatalog((
    (0.476, MudCoefficients(7.8e6, 2.6e5, 9.0e6)),
    (0.486, MudCoefficients(7.0e6, 2.1e5, 7.6e6)),
    (0.495, MudCoefficients(6.3e6, 1.7e5, 6.4e6)),
    (0.503, MudCoefficients(5.6e6, 1.3e5, 5.4e6)),
    (0.512, MudCoefficients(5.0e6, 8.2e4, 4.5e6)),
))


@dataclass(frozen=True)
class MudSegment:
    id: str
    x_start: float
    x_end: float
    w: float
    coeffs: MudCoefficients

    def __post_init__(self):
        if not self.x_start < self.x_end:
            raise ValueError(f"Segment {self.id}: x_start {self.x_start} must be below x_end {self.x_end}")


@dataclass
class ShearState:
    """Shear history of one flipper within one stance"""
    shear_displacement: float = 0.0
    solidified: bool = False

    def reset(self):
        self.shear_displacement = 0.0
        self.solidified = False

    def advance(self, ds: float):
        """Accrue slip of the plate through yielding mud"""
        if ds < 0.0:
            raise ValueError(f"Invalid shear increment: {ds}. Must be non-negative")
        self.shear_displacement += ds


def catalog_lookup(catalog: MudCatalog, w: float) -> MudCoefficients:
    """Piecewise-linear interpolation of the coefficients at water content ``w``"""
    lo, hi = catalog.span
    if not lo <= w <= hi:
        raise OutOfRange(f"Water content {w:.4f} outside catalog span [{lo:.4f}, {hi:.4f}]")
    ws = np.array([entry[0] for entry in catalog.entries])
    for knot, coeffs in catalog.entries:
        if w == knot:
            return coeffs
    values = np.array([entry[1].as_tuple() for entry in catalog.entries])
    k_p, k_s, k_e = (float(np.interp(w, ws, values[:, i])) for i in range(3))
    return MudCoefficients(k_p, k_s, k_e)


def penetration_force(depth: float, pose: JointPose, geom: FlipperGeometry, k_p: float) -> float:
    """Upward resistance on a plate inserted to ``depth``"""
    if depth < 0.0:
        raise ValueError(f"Invalid depth: {depth}. Must be non-negative")
    return k_p * penetration_integral(pose.beta, depth, geom)


def yield_force(depth: float, geom: FlipperGeometry, k_s: float) -> float:
    """Largest horizontal force the mud sustains before flowing"""
    return k_s * shear_integral(depth, geom)


def shear_force(state: ShearState, depth: float, geom: FlipperGeometry, k_s: float,
                demand: float, delta: float = SHEAR_RISE) -> float:
    """
    Horizontal reaction on the plate for the current shear history

    Updates ``state.solidified``: the mud solidifies once it can carry the
    demanded force and flows again when the demand exceeds its yield force.

    Args:
        state: Shear history of this flipper's stance
        depth: Insertion depth, m
        geom: Flipper geometry
        k_s: Shear strength coefficient
        demand: Reaction force the body needs from this flipper, N; use
            ``math.inf`` for a locked body

    Returns:
        fx in newtons
    """
    if depth < 0.0 or demand < 0.0:
        raise ValueError(f"Invalid shear query: depth={depth}, demand={demand}")
    if depth == 0.0:
        return 0.0
    f_yield = yield_force(depth, geom, k_s)
    if state.solidified:
        if demand <= f_yield:
            return demand
        state.solidified = False
        logger.debug(f"Mud re-fluidized: demand {demand:.3f} N above yield {f_yield:.3f} N")
    f_raw = f_yield * (1.0 - math.exp(-state.shear_displacement / delta))
    if demand < f_raw:
        state.solidified = True
        return demand
    return f_raw


def extraction_profile(current_depth: float, z_i: float, ramp_fraction: float = RAMP_FRACTION) -> float:
    """Normalized suction shape: linear ramp to 1 then linear decay to the surface"""
    if z_i <= 0.0:
        return 0.0
    d = min(max(current_depth, 0.0), z_i)
    travel = z_i - d
    ramp = ramp_fraction * z_i
    if travel <= ramp:
        return travel / ramp
    return d / (z_i - ramp)


def extraction_force(current_depth: float, z_i: float, geom: FlipperGeometry, k_e: float,
                     pose: Optional[JointPose] = None,
                     ramp_fraction: float = RAMP_FRACTION) -> float:
    """
    Suction on a plate pulled out from a maximum insertion ``z_i``

    The peak magnitude is ``k_e`` times the projected-area integral at the
    pose held at maximum insertion (``pose``; vertical plate if omitted).
    Returns a non-positive fz.
    """
    if z_i <= 0.0 or k_e <= 0.0:
        return 0.0
    if not 0.0 <= current_depth <= z_i + 1e-12:
        raise ValueError(f"Invalid extraction depth {current_depth} for insertion {z_i}")
    beta = pose.beta if pose is not None else 0.0
    f_e = k_e * penetration_integral(beta, z_i, geom)
    return -f_e * extraction_profile(current_depth, z_i, ramp_fraction)


def lateral_force(fz: float, pose: JointPose, side: int) -> float:
    """Lateral push of a tilted plate; mirrored flippers carry opposite signs"""
    return side * fz * math.sin(pose.beta)


@dataclass
class LoadCellTrace:
    t: np.ndarray
    depth: np.ndarray
    force: np.ndarray


@dataclass
class LoadCellResult:
    """Direct force measurements on a rigid plate and the coefficients fitted to them"""
    drag: LoadCellTrace
    vertical: LoadCellTrace
    fitted: MudCoefficients
    rmse: Tuple[float, float, float]


class LoadCellRig:
    """
    Rigid vertical plate driven through the mud on a load cell

    Reproduces the ground-truth protocol: a horizontal drag at fixed depth
    and a vertical insertion, hold and extraction, all at constant speed.
    """

    def __init__(self, plate: FlipperGeometry, sample_rate: float = 380.0,
                 speed: float = 0.1, depth: float = 0.03,
                 drag_distance: float = 0.20, hold: float = 3.0):
        if depth > plate.h:
            raise ValueError(f"Load-cell depth {depth} exceeds plate height {plate.h}")
        self.plate = plate
        self.dt = 1.0 / sample_rate
        self.speed = speed
        self.depth = depth
        self.drag_distance = drag_distance
        self.hold = hold
        self.pose = JointPose(0.0, 0.0)

    def drag_trace(self, coeffs: MudCoefficients) -> LoadCellTrace:
        n = int(round(self.drag_distance / (self.speed * self.dt)))
        state = ShearState()
        ts, fx = [], []
        for k in range(1, n + 1):
            state.advance(self.speed * self.dt)
            ts.append(k * self.dt)
            fx.append(shear_force(state, self.depth, self.plate, coeffs.k_s, math.inf))
        return LoadCellTrace(np.array(ts), np.full(n, self.depth), np.array(fx))

    def vertical_trace(self, coeffs: MudCoefficients) -> LoadCellTrace:
        step = self.speed * self.dt
        n_move = int(math.ceil(self.depth / step))
        n_hold = int(round(self.hold / self.dt))
        depths = [min(k * step, self.depth) for k in range(1, n_move + 1)]
        forces = [penetration_force(d, self.pose, self.plate, coeffs.k_p) for d in depths]
        hold_force = penetration_force(self.depth, self.pose, self.plate, coeffs.k_p)
        depths += [self.depth] * n_hold
        forces += [hold_force] * n_hold
        for k in range(1, n_move + 1):
            d = max(self.depth - k * step, 0.0)
            depths.append(d)
            forces.append(extraction_force(d, self.depth, self.plate, coeffs.k_e, self.pose))
        ts = np.arange(1, len(depths) + 1) * self.dt
        return LoadCellTrace(ts, np.array(depths), np.array(forces))

    def measure(self, coeffs: MudCoefficients) -> LoadCellResult:
        """Run both protocols and fit k_p, k_s, k_e to the direct forces"""
        drag = self.drag_trace(coeffs)
        vertical = self.vertical_trace(coeffs)

        tail = drag.t >= drag.t[-1] / 2.0
        s = np.array([shear_integral(d, self.plate) for d in drag.depth[tail]])
        k_s, rmse_s = fit_scalar(s, drag.force[tail])

        down = vertical.force > 0.0
        g = np.array([penetration_integral(0.0, d, self.plate) for d in vertical.depth[down]])
        k_p, rmse_p = fit_scalar(g, vertical.force[down])

        up = vertical.force < 0.0
        g_peak = penetration_integral(0.0, self.depth, self.plate)
        shape = np.array([extraction_profile(d, self.depth) for d in vertical.depth[up]])
        k_e, rmse_e = fit_scalar(g_peak * shape, -vertical.force[up])

        logger.info(
            f"Load-cell fit: k_p={k_p:.4g}, k_s={k_s:.4g}, k_e={k_e:.4g}",
            extra={'event': 'loadcell_fit', 'k_p': k_p, 'k_s': k_s, 'k_e': k_e}
        )
        return LoadCellResult(drag, vertical, MudCoefficients(k_p, k_s, k_e), (rmse_p, rmse_s, rmse_e))
