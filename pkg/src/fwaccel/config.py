"""
Scenario configuration: YAML files validated against a pydantic schema.

Angles are in degrees in config files and converted to radians here.
Built-in presets live in ``fwaccel/presets`` and can be referenced by name
(``flight1``, ``flight2``, ``flight3``, ...).
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .energy_model import config_digest
from .guidance import PnParams, TargetSpec
from .identification import CalibrationPlan
from .outer_loop import OuterLoopGains, OuterLoopOptions, PriorityMode
from .vehicle import NoiseSettings, VehicleParams, tune_vehicle_params

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VehicleSection(_Strict):
    """Overrides applied on top of the tuned default airframe."""

    mass: float = 11.3
    ref_area: float = 0.75
    rho: float = 1.225
    tau_rate: float = 0.1
    tau_thrust: float = 0.05
    stall_speed: float = 12.0
    lift_slope: float = 5.0
    max_load_factor: float = 3.0
    target_drag_slope: float = -0.0032
    trim_speed: float = 20.0
    trim_throttle: float = 0.4
    drag_coeff: Optional[float] = None     # set both to bypass tuning
    max_thrust: Optional[float] = None

    def build(self) -> VehicleParams:
        fixed = dict(mass=self.mass, ref_area=self.ref_area, rho=self.rho,
                     tau_rate=self.tau_rate, tau_thrust=self.tau_thrust,
                     stall_speed=self.stall_speed, lift_slope=self.lift_slope,
                     max_load_factor=self.max_load_factor)
        if self.drag_coeff is not None and self.max_thrust is not None:
            return VehicleParams(drag_coeff=self.drag_coeff, max_thrust=self.max_thrust, **fixed)
        return tune_vehicle_params(self.target_drag_slope, self.trim_speed,
                                   self.trim_throttle, **fixed)


class InitialSection(_Strict):
    speed: float = Field(20.0, gt=0)
    heading_deg: float = 0.0
    pitch_deg: float = 0.0
    altitude: float = 100.0
    north: float = 0.0
    east: float = 0.0
    thrust_throttle: Optional[float] = Field(None, ge=0, le=1)   # default: trim


class GainsSection(_Strict):
    k_phi: float = Field(2.0, gt=0)
    k_theta: float = Field(1.5, gt=0)
    k_v: float = Field(0.5, gt=0)

    def build(self) -> OuterLoopGains:
        return OuterLoopGains(self.k_phi, self.k_theta, self.k_v)


class OuterLoopSection(_Strict):
    priority: Literal["normal", "tangential"] = "normal"
    max_bank_deg: Optional[float] = Field(40.0, gt=0, lt=90)
    max_pitch_deg: float = Field(30.0, gt=0, lt=85)
    min_speed: float = Field(5.0, gt=0)
    literal_lift: bool = False
    literal_pitch_bounds: bool = False
    integral: bool = False
    ki_normal: float = Field(0.5, ge=0)
    ki_tangential: float = Field(0.2, ge=0)

    def build(self) -> OuterLoopOptions:
        return OuterLoopOptions(
            min_speed=self.min_speed,
            max_bank=None if self.max_bank_deg is None else math.radians(self.max_bank_deg),
            max_pitch=math.radians(self.max_pitch_deg),
            literal_lift=self.literal_lift,
            literal_pitch_bounds=self.literal_pitch_bounds,
            integral=self.integral,
            ki_normal=self.ki_normal,
            ki_tangential=self.ki_tangential,
        )

    @property
    def mode(self) -> PriorityMode:
        return PriorityMode(self.priority)


class NoiseSection(_Strict):
    enabled: bool = False
    attitude_deg: float = Field(0.0, ge=0)
    rates_deg_s: float = Field(0.0, ge=0)
    velocity: float = Field(0.0, ge=0)
    airspeed: float = Field(0.0, ge=0)
    accel: float = Field(0.0, ge=0)
    altitude: float = Field(0.0, ge=0)
    position: float = Field(0.0, ge=0)

    def build(self) -> NoiseSettings:
        if not self.enabled:
            return NoiseSettings()
        return NoiseSettings(
            attitude=math.radians(self.attitude_deg), rates=math.radians(self.rates_deg_s),
            velocity=self.velocity, airspeed=self.airspeed, accel=self.accel,
            altitude=self.altitude, position=self.position,
        )


class TimingSection(_Strict):
    control_rate: float = Field(50.0, gt=0)
    sim_dt: float = Field(0.005, gt=0, le=0.05)

    @model_validator(mode="after")
    def _commensurate(self):
        n = (1.0 / self.control_rate) / self.sim_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("control period must be an integer multiple of sim_dt")
        return self

    @property
    def substeps(self) -> int:
        return int(round((1.0 / self.control_rate) / self.sim_dt))


class CalibrationSection(_Strict):
    levels: list[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 9)])
    dwell: float = 2.0
    order: Literal["alternating", "increasing"] = "alternating"
    transient_trim: float = 0.5
    pass_pitch_deg: list[float] = Field(default_factory=lambda: [0.0, -3.0, 3.0])
    cutoff_hz: float = Field(2.0, gt=0)
    robust: bool = False
    query_airspeed: float = Field(20.0, gt=0)

    def build(self) -> CalibrationPlan:
        return CalibrationPlan(
            levels=tuple(self.levels), dwell=self.dwell, order=self.order,
            transient_trim=self.transient_trim,
            pass_pitch=tuple(math.radians(p) for p in self.pass_pitch_deg),
        )


class EnergyModelSection(_Strict):
    source: Literal["calibrate", "truth", "file"] = "calibrate"
    path: Optional[str] = None
    airspeed: float = Field(20.0, gt=0)

    @model_validator(mode="after")
    def _path_for_file(self):
        if self.source == "file" and not self.path:
            raise ValueError("energy_model.path is required when source is 'file'")
        return self


class StepSegment(_Strict):
    start: float = Field(ge=0)
    duration: float = Field(gt=0)
    accel: tuple[float, float] = (0.0, 0.0)     # path frame: (right, down), m/s^2
    speed_setpoint: Optional[float] = Field(None, gt=0)


class StepsSection(_Strict):
    duration: float = Field(gt=0)
    speed_setpoint: float = Field(20.0, gt=0)
    segments: list[StepSegment]

    @model_validator(mode="after")
    def _ordered(self):
        end = 0.0
        for s in self.segments:
            if s.start < end - 1e-9:
                raise ValueError("step segments must be time-ordered and non-overlapping")
            end = s.start + s.duration
        return self


class PnSection(_Strict):
    nav_constant: float = Field(3.0, gt=0)
    speed_setpoint: float = Field(20.0, gt=0)
    intercept_radius: float = Field(1.0, gt=0)
    horizontal: float = 600.0       # m from the start point
    vertical: float = 30.0          # m above the start point
    bearing_deg: float = 20.0       # relative to initial heading
    target: Optional[tuple[float, float, float]] = None    # absolute NED, overrides the above
    max_time: float = Field(90.0, gt=0)
    los_rate: Literal["analytic", "finite_difference"] = "analytic"

    def target_spec(self, initial: InitialSection) -> TargetSpec:
        if self.target is not None:
            return TargetSpec(self.target)
        b = math.radians(initial.heading_deg + self.bearing_deg)
        return TargetSpec([initial.north + self.horizontal * math.cos(b),
                           initial.east + self.horizontal * math.sin(b),
                           -(initial.altitude + self.vertical)])


class OutputSection(_Strict):
    dir: str = "runs/default"
    plot_data: bool = True


class ScenarioConfig(_Strict):
    schema_version: Literal[1] = 1
    name: str = "scenario"
    kind: Literal["calibration", "accel_steps", "pn_intercept"]
    seed: Optional[int] = None
    vehicle: VehicleSection = VehicleSection()
    initial: InitialSection = InitialSection()
    gains: GainsSection = GainsSection()
    outer_loop: OuterLoopSection = OuterLoopSection()
    noise: NoiseSection = NoiseSection()
    timing: TimingSection = TimingSection()
    calibration: CalibrationSection = CalibrationSection()
    energy_model: EnergyModelSection = EnergyModelSection()
    steps: Optional[StepsSection] = None
    pn: Optional[PnSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _consistent(self):
        if self.noise.enabled and self.seed is None:
            raise ValueError("seed is mandatory when noise is enabled")
        if self.kind == "accel_steps" and self.steps is None:
            raise ValueError("accel_steps scenarios need a 'steps' section")
        if self.kind == "pn_intercept" and self.pn is None:
            raise ValueError("pn_intercept scenarios need a 'pn' section")
        return self

    def pn_params(self) -> PnParams:
        assert self.pn is not None
        return PnParams(self.pn.nav_constant, self.pn.speed_setpoint, self.gains.k_v,
                        self.pn.intercept_radius)

    def digest(self) -> str:
        return config_digest(self.model_dump(mode="json"))

    def with_overrides(self, **updates: Any) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``{"noise.enabled": True}``; re-validated."""
        data = self.model_dump(mode="json")
        for key, value in updates.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
        return parse_config(data)


def parse_config(data: dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("fwaccel.presets").iterdir()
                  if p.name.endswith(".yaml"))


def load_config(source: str | Path) -> ScenarioConfig:
    """Load a config from a YAML path or a preset name."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        name = str(source)
        res = resources.files("fwaccel.presets").joinpath(f"{name}.yaml")
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {source!r} "
                              f"(presets: {', '.join(preset_names())})")
        text = res.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return parse_config(data)


def schema_help() -> str:
    import json
    return json.dumps(ScenarioConfig.model_json_schema(), indent=2)
