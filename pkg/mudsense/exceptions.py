"""
Error types raised across the simulator
"""

from typing import Any, Optional


class MudSenseError(Exception):
    """Base class for every domain error"""


class ConfigError(MudSenseError, ValueError):
    """Experiment configuration is invalid or inconsistent"""


class SingularPose(MudSenseError):
    """Force map is numerically singular at the requested pose"""


class WorkspaceExceeded(MudSenseError):
    """Commanded tip position is unreachable by the flipper"""


class OutOfRange(MudSenseError, ValueError):
    """Water content lies outside the mud catalog span"""


class TorqueLimit(MudSenseError):
    """Commanded joint torque exceeds the motor limit"""

    def __init__(self, tau: float, tau_max: float):
        super().__init__(f"Torque {tau:.4f} N*m exceeds limit {tau_max:.4f} N*m")
        self.tau = tau
        self.tau_max = tau_max


class NoContact(MudSenseError):
    """Insertion never crossed the surface-contact force threshold"""


class DegenerateWindow(MudSenseError):
    """Fit window has no usable regressor energy"""


class NoPeak(MudSenseError):
    """Extraction shows no suction peak; carries the flagged zero estimate"""

    def __init__(self, message: str, estimate: Optional[Any] = None):
        super().__init__(message)
        self.estimate = estimate


class Stuck(MudSenseError):
    """Flipper could not be extracted within the retry budget"""

    def __init__(self, retries: int, depth: float):
        super().__init__(f"Flipper stuck at {depth * 100:.2f} cm after {retries} retries")
        self.retries = retries
        self.depth = depth
