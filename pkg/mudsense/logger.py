"""
Logging configuration for the mud sensing simulator
"""

import logging
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Dict, Any

# Attributes every LogRecord carries; anything else arrived through ``extra=``
_RECORD_ATTRS = frozenset(vars(logging.LogRecord('', 0, '', 0, '', (), None))) | {'message', 'asctime'}


class JSONFormatter(logging.Formatter):
    """One compact JSON object per record, extra fields included"""

    def format(self, record):
        log_entry = {
            'timestamp': datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z'),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'source_file': record.pathname,
            'source_line': record.lineno,
            'function': record.funcName
        }

        for key, value in vars(record).items():
            if key not in _RECORD_ATTRS and key not in log_entry:
                log_entry[key] = value

        return json.dumps(log_entry, separators=(',', ':'), default=str)


def setup_logging(log_file: Optional[str] = './logs/mudsense.log',
                  log_level: str = 'INFO',
                  enable_console: bool = True):
    """Setup logging configuration"""

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))

    # Close handlers from a previous run in the same process
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    if log_file:
        try:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path)
            file_handler.setLevel(getattr(logging, log_level.upper(), logging.INFO))
            file_handler.setFormatter(JSONFormatter())
            root_logger.addHandler(file_handler)
        except OSError as e:
            print(f"Warning: Could not setup file logging to {log_file}: {e}")

    if enable_console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)

        console_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        console_handler.setFormatter(console_formatter)
        root_logger.addHandler(console_handler)

    logging.getLogger('matplotlib').setLevel(logging.WARNING)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    """Get logger instance"""
    return logging.getLogger(name)


class TrialLogger:
    """Event vocabulary for calibration runs and locomotion trials"""

    def __init__(self, logger_name: str = 'mudsense.trial'):
        self.logger = get_logger(logger_name)

    def trial_started(self, mode: str, seed: int, length: float, **kwargs):
        self.logger.info(
            f"Trial started: mode={mode}, seed={seed}, trackway length {length:.3f} m",
            extra={
                'event': 'trial_start',
                'mode': mode,
                'seed': seed,
                'trackway_length': length,
                **kwargs
            }
        )

    def stride_completed(self, stride: int, segment: str, stride_length: float,
                         z_cmd: float, **kwargs):
        self.logger.debug(
            f"Stride {stride} in {segment}: {stride_length * 100:.2f} cm at z={z_cmd * 100:.2f} cm",
            extra={
                'event': 'stride_complete',
                'stride': stride,
                'segment': segment,
                'stride_length': stride_length,
                'z_cmd': z_cmd,
                **kwargs
            }
        )

    def failure_detected(self, stride: int, segment: str, kind: str, **kwargs):
        self.logger.info(
            f"{kind} failure at stride {stride} in segment {segment}",
            extra={
                'event': 'failure',
                'stride': stride,
                'segment': segment,
                'kind': kind,
                **kwargs
            }
        )

    def extraction_retry(self, stride: int, attempt: int, depth: float, **kwargs):
        self.logger.info(
            f"Extraction halted at stride {stride}, retry {attempt} from {depth * 100:.2f} cm",
            extra={
                'event': 'extraction_retry',
                'stride': stride,
                'attempt': attempt,
                'depth': depth,
                **kwargs
            }
        )

    def depth_adapted(self, stride: int, z: float, binding: str, feasible: bool, **kwargs):
        level = logging.INFO if feasible else logging.WARNING
        self.logger.log(
            level,
            f"Insertion depth for stride {stride}: {z * 100:.2f} cm ({binding}-bound, feasible={feasible})",
            extra={
                'event': 'depth_adapt',
                'stride': stride,
                'z': z,
                'binding': binding,
                'feasible': feasible,
                **kwargs
            }
        )

    def estimate_skipped(self, stride: int, coefficient: str, reason: str, **kwargs):
        self.logger.warning(
            f"Skipped {coefficient} estimate at stride {stride}: {reason}",
            extra={
                'event': 'estimate_skip',
                'stride': stride,
                'coefficient': coefficient,
                'reason': reason,
                **kwargs
            }
        )

    def trial_completed(self, strides: int, final_x: float,
                        velocities: Dict[str, float], **kwargs):
        self.logger.info(
            f"Trial completed: {strides} strides, x={final_x:.3f} m",
            extra={
                'event': 'trial_complete',
                'strides': strides,
                'final_x': final_x,
                'segment_velocity_cm_s': velocities,
                **kwargs
            }
        )

    def calibration_completed(self, joint: str, rmse: float, weights: int, **kwargs):
        self.logger.info(
            f"Calibration of {joint} joint over {weights} weights: RMSE {rmse:.4f} N*m",
            extra={
                'event': 'calibration_complete',
                'joint': joint,
                'rmse': rmse,
                'weights': weights,
                **kwargs
            }
        )


# Global trial logger instance
trial_logger = TrialLogger()
