"""
Utility functions shared by the simulator and the estimator
"""

import math
import zlib
from typing import Tuple, Sequence

import numpy as np

from .logger import get_logger

logger = get_logger(__name__)

SEED_MASK = 0xFFFFFFFF


def validate_positive(name: str, value: float) -> float:
    """
    Validate a strictly positive finite quantity

    Args:
        name: Field name used in the error message
        value: Value to check

    Returns:
        The value as float

    Raises:
        ValueError: if the value is not finite or not strictly positive
    """
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"Invalid {name}: {value}. Must be finite and strictly positive")
    return value


def validate_non_negative(name: str, value: float) -> float:
    """Same as validate_positive but admits zero"""
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"Invalid {name}: {value}. Must be finite and non-negative")
    return value


def derive_seed(base_seed: int, tag: str) -> int:
    """
    Derive an independent sub-seed from a base seed and a stream tag

    Args:
        base_seed: Trial seed
        tag: Stream name, e.g. ``"motor/right/1"``

    Returns:
        32-bit seed, stable across processes and platforms
    """
    return (zlib.crc32(tag.encode('utf-8')) ^ (int(base_seed) & SEED_MASK)) & SEED_MASK


def stream_rng(base_seed: int, tag: str) -> np.random.Generator:
    """Generator for one named noise stream of a trial"""
    return np.random.default_rng([derive_seed(base_seed, tag), int(base_seed) & SEED_MASK])


def fit_scalar(regressor: Sequence[float], measured: Sequence[float]) -> Tuple[float, float]:
    """
    Closed-form least squares for a model linear in one coefficient

    Minimizes the RMSE of ``k * regressor`` against ``measured``.

    Args:
        regressor: Model values per unit coefficient
        measured: Measured values

    Returns:
        Tuple of (coefficient, residual_rmse); coefficient is NaN when the
        regressor carries no energy
    """
    phi = np.asarray(regressor, dtype=float)
    y = np.asarray(measured, dtype=float)
    energy = float(np.dot(phi, phi))
    if phi.size == 0 or energy <= 0.0:
        return math.nan, math.nan
    k = float(np.dot(phi, y)) / energy
    residual = y - k * phi
    return k, float(np.sqrt(np.mean(residual ** 2)))


def moving_average(values: Sequence[float], width: int) -> np.ndarray:
    """Centered moving average, edges padded with the boundary value"""
    x = np.asarray(values, dtype=float)
    if width <= 1 or x.size == 0:
        return x.copy()
    half = width // 2
    padded = np.pad(x, (half, width - 1 - half), mode='edge')
    return np.convolve(padded, np.ones(width) / width, mode='valid')


def longest_run(mask: Sequence[bool]) -> int:
    """Length of the longest run of True values"""
    best = run = 0
    for flag in mask:
        run = run + 1 if flag else 0
        best = max(best, run)
    return best


def format_velocity(v_m_s: float) -> str:
    """Render a velocity in cm/s the way the summary tables show it"""
    if v_m_s is None or not math.isfinite(v_m_s):
        return "n/a"
    return f"{v_m_s * 100:.1f} cm/s"
