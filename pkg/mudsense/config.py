"""
Configuration management for experiments and the application
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .actuator import CALIBRATION_WEIGHTS, MotorSpec
from .estimator import STEADY_FRACTION
from .exceptions import ConfigError, OutOfRange
from .gait_controller import BOOTSTRAP_DEPTH, DEPTH_FLOOR, SAFETY_MARGIN, GaitParams, RobotSpec
from .kinematics import FlipperGeometry
from .locomotion_sim import GaitMode, SimOptions, Trackway
from .logger import get_logger
from .mud_oracle import DEFAULT_CATALOG, MudCatalog, MudCoefficients

logger = get_logger(__name__)

DEFAULT_APP_CONFIG = {
    'log_level': 'INFO',
    'log_file': 'mudsense.log',
    'enable_console': True,
    'output_dir': './runs',
    'plots': True,
    'float_format': '%.9g',
}

SCENARIOS = ('calibrate', 'single-flipper', 'trackway-map', 'adapt', 'sweep')


def load_app_config(config_path: str = './config/app_config.yaml') -> Dict[str, Any]:
    """Load application configuration"""
    config_file = Path(config_path)

    try:
        if config_file.exists():
            with open(config_file, 'r') as f:
                config = yaml.safe_load(f) or {}

            merged_config = DEFAULT_APP_CONFIG.copy()
            merged_config.update(config)

            logger.info(f"Loaded configuration from {config_path}")
            return merged_config
        else:
            logger.info("No configuration file found, using defaults")
            return DEFAULT_APP_CONFIG.copy()

    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Failed to load configuration: {e}")
        logger.info("Using default configuration")
        return DEFAULT_APP_CONFIG.copy()


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class GeometryConfig(StrictModel):
    l: float = Field(0.115, gt=0, description="Arm length, m")
    b: float = Field(0.025, gt=0, description="Flipper width, m")
    h: float = Field(0.07, gt=0, description="Flipper height, m")
    t: float = Field(0.005, gt=0, description="Flipper thickness, m")
    shoulder_height: float = Field(0.03, ge=0, description="Shoulder axis above the mud, m")


class MotorConfig(StrictModel):
    k_t: float = Field(0.083, gt=0, description="Torque constant, N*m/A")
    tau_max: float = Field(12.0, gt=0, description="Torque limit, N*m")
    noise_rel: float = Field(0.032, ge=0, description="Relative current noise")
    sample_rate: float = Field(380.0, gt=0, description="Logging rate, Hz")


class RobotConfig(StrictModel):
    body_mass: float = Field(1.5, gt=0)
    f_m: Optional[float] = Field(None, gt=0, description="Max lift, N; tau_max / l when unset")
    drag_model: Literal['constant', 'shear_proportional'] = 'constant'
    f_r: float = Field(2.5, ge=0, description="Constant body drag, N")
    drag_per_strength: float = Field(1.2e-5, ge=0)
    f_a: Optional[float] = Field(0.1, ge=0, description="Inertial force, N; computed when unset")


class GaitConfig(StrictModel):
    z_c: float = Field(0.03, gt=0)
    v_insert: float = Field(0.1, gt=0)
    v_stance: float = Field(0.1, gt=0)
    v_extract: float = Field(0.1, gt=0)
    v_swing: float = Field(0.1, gt=0)
    sweep_range_deg: Tuple[float, float] = (-30.0, 30.0)
    inter_phase_pause: float = Field(0.0, ge=0)
    clearance: float = Field(0.01, ge=0)

    @field_validator('sweep_range_deg')
    @classmethod
    def validate_sweep(cls, v):
        if not -90.0 < v[0] < v[1] < 90.0:
            raise ValueError(f"sweep range {v} must be increasing and inside (-90, 90) degrees")
        return v


class EstimatorConfig(StrictModel):
    contact_threshold: float = Field(0.5, ge=0)
    steady_fraction: float = Field(STEADY_FRACTION, gt=0, lt=1)


class SimulationConfig(StrictModel):
    stride_budget: int = Field(200, ge=1)
    n_retry: int = Field(3, ge=0)
    redescend_fraction: float = Field(0.2, gt=0, le=1)
    remold_factor: float = Field(0.8, gt=0, le=1)
    retry_dwell: float = Field(0.5, ge=0)
    recovery_time: float = Field(2.0, ge=0)
    margin: float = Field(SAFETY_MARGIN, ge=1)
    z_min: float = Field(DEPTH_FLOOR, gt=0)
    bootstrap_depth: float = Field(BOOTSTRAP_DEPTH, gt=0)


class CatalogEntry(StrictModel):
    w: float = Field(..., gt=0.40, lt=0.60, description="Water mass fraction")
    k_p: float = Field(..., gt=0)
    k_s: float = Field(..., gt=0)
    k_e: float = Field(..., gt=0)


class SegmentConfig(StrictModel):
    id: str
    length: float = Field(..., gt=0)
    w: float


class ModeConfig(StrictModel):
    adaptive: bool = False
    z: Optional[float] = Field(None, gt=0)

    @model_validator(mode='after')
    def check_depth(self):
        if not self.adaptive and self.z is None:
            raise ValueError("fixed-depth mode needs z")
        return self


class CalibrationConfig(StrictModel):
    weights: List[float] = Field(default_factory=lambda: list(CALIBRATION_WEIGHTS))
    trials: int = Field(5, ge=1)
    moment_arm: Optional[float] = Field(None, gt=0, description="Defaults to the arm length")
    joints: List[Literal['adduction', 'sweeping']] = Field(default_factory=lambda: ['adduction', 'sweeping'])

    @field_validator('weights')
    @classmethod
    def validate_weights(cls, v):
        if any(not m > 0 for m in v):
            raise ValueError("weights must be positive")
        return v


class PlateConfig(StrictModel):
    b: float = Field(0.03, gt=0)
    h: float = Field(0.035, gt=0)
    t: float = Field(0.005, gt=0)


class StaticConfig(StrictModel):
    depth: float = Field(0.03, gt=0)
    mixtures: Optional[List[float]] = Field(None, description="Water contents; catalog knots when unset")
    loadcell: bool = True
    plate: PlateConfig = Field(default_factory=PlateConfig)


class SweepConfig(StrictModel):
    modes: List[ModeConfig] = Field(default_factory=list)
    catalog_scale: List[float] = Field(default_factory=lambda: [1.0])
    noise_rel: List[float] = Field(default_factory=lambda: [0.032])

    @field_validator('catalog_scale')
    @classmethod
    def validate_scale(cls, v):
        if any(not s > 0 for s in v):
            raise ValueError("catalog scales must be positive")
        return v

    @field_validator('noise_rel')
    @classmethod
    def validate_noise(cls, v):
        if any(n < 0 for n in v):
            raise ValueError("noise levels must be non-negative")
        return v


class ExperimentConfig(StrictModel):
    """One experiment file; every block falls back to defaults"""
    scenario: Literal['calibrate', 'single-flipper', 'trackway-map', 'adapt', 'sweep']
    seed: int = 0
    trials: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    motor: MotorConfig = Field(default_factory=MotorConfig)
    robot: RobotConfig = Field(default_factory=RobotConfig)
    gait: GaitConfig = Field(default_factory=GaitConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    catalog: Optional[List[CatalogEntry]] = None
    trackway: List[SegmentConfig] = Field(default_factory=list)
    modes: List[ModeConfig] = Field(default_factory=list)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    static: StaticConfig = Field(default_factory=StaticConfig)
    sweep: Optional[SweepConfig] = None

    @model_validator(mode='after')
    def check_scenario(self):
        if self.scenario in ('trackway-map', 'adapt', 'sweep') and not self.trackway:
            raise ValueError(f"scenario '{self.scenario}' needs a trackway")
        if self.scenario == 'sweep' and self.sweep is None:
            raise ValueError("scenario 'sweep' needs a sweep block")
        return self

    # --- domain objects --------------------------------------------------

    def flipper_geometry(self) -> FlipperGeometry:
        return FlipperGeometry(**self.geometry.model_dump())

    def motor_spec(self, noise_rel: Optional[float] = None) -> MotorSpec:
        values = self.motor.model_dump()
        if noise_rel is not None:
            values['noise_rel'] = noise_rel
        return MotorSpec(**values)

    def robot_spec(self) -> RobotSpec:
        values = self.robot.model_dump()
        if values.pop('f_m') is None:
            return RobotSpec.from_motor(self.motor.tau_max, self.flipper_geometry(), **values)
        return RobotSpec(f_m=self.robot.f_m, **values)

    def gait_params(self) -> GaitParams:
        values = self.gait.model_dump()
        lo, hi = values.pop('sweep_range_deg')
        return GaitParams(sweep_range=(math.radians(lo), math.radians(hi)), **values)

    def sim_options(self, **overrides) -> SimOptions:
        values = self.simulation.model_dump()
        values.update(contact_threshold=self.estimator.contact_threshold,
                      steady_fraction=self.estimator.steady_fraction)
        values.update(overrides)
        return SimOptions(**values)

    def mud_catalog(self, scale: float = 1.0) -> MudCatalog:
        if self.catalog is None:
            catalog = DEFAULT_CATALOG
        else:
            catalog = MudCatalog(tuple(
                (e.w, MudCoefficients(e.k_p, e.k_s, e.k_e)) for e in self.catalog
            ))
        return catalog.scaled(scale) if scale != 1.0 else catalog

    def build_trackway(self, catalog: Optional[MudCatalog] = None) -> Trackway:
        catalog = catalog or self.mud_catalog()
        return Trackway.from_layout([(s.id, s.length, s.w) for s in self.trackway], catalog)

    def gait_modes(self) -> List[GaitMode]:
        if not self.modes:
            return [GaitMode(adaptive=False, z=self.gait.z_c)]
        return [to_gait_mode(m) for m in self.modes]


def to_gait_mode(mode: ModeConfig) -> GaitMode:
    return GaitMode(adaptive=True) if mode.adaptive else GaitMode(adaptive=False, z=mode.z)


def _describe(error: ValidationError) -> str:
    return '; '.join(
        f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()
    )


def load_experiment_config(config_path: str) -> ExperimentConfig:
    """
    Load and validate an experiment file

    Args:
        config_path: Path to the YAML experiment file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: if the file is missing, unparsable, fails the schema, or
            describes objects that cannot be built
    """
    config_file = Path(config_path)
    if not config_file.exists():
        raise ConfigError(f"Experiment file not found: {config_path}")

    try:
        with open(config_file, 'r') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {config_path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path} must contain a mapping at the top level")

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment file {config_path}: {_describe(e)}") from e

    # Build every domain object once so inconsistencies surface before a run
    try:
        geom = config.flipper_geometry()
        config.motor_spec()
        config.robot_spec()
        config.gait_params().validate(geom)
        catalog = config.mud_catalog()
        if config.trackway:
            config.build_trackway(catalog)
        config.sim_options()
        config.gait_modes()
    except (ValueError, OutOfRange) as e:
        raise ConfigError(f"Inconsistent experiment file {config_path}: {e}") from e

    logger.info(f"Loaded experiment '{config.scenario}' from {config_path}",
                extra={'event': 'config_load', 'scenario': config.scenario, 'seed': config.seed})
    return config
