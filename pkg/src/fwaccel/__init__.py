"""Acceleration-command realization for fixed-wing UAVs.

Maps desired normal and tangential accelerations to body-rate and
normalized-thrust commands, identifies the thrust/energy-acceleration map
in flight, and drives a proportional-navigation demo against a kinematic
airframe simulation.
"""

from .energy_model import EnergyModel, LevelFit, load_model, save_model, truth_model
from .frames import EulerAngles, FrameVector, GRAVITY
from .guidance import PnParams, TargetSpec, los_kinematics, pn_accel
from .identification import CalibrationPlan, run_calibration
from .outer_loop import (AccelCommand, OuterLoopController, OuterLoopGains, OuterLoopOptions,
                         PriorityMode, realize)
from .config import ScenarioConfig, load_config
from .runner import RunSummary, run_batch, run_scenario
from .vehicle import DEFAULT_PARAMS, FixedWingSim, NoiseSettings, VehicleParams, VehicleState

__version__ = "0.1.0"

__all__ = [
    "AccelCommand", "CalibrationPlan", "DEFAULT_PARAMS", "EnergyModel", "EulerAngles",
    "FixedWingSim", "FrameVector", "GRAVITY", "LevelFit", "NoiseSettings", "OuterLoopController",
    "OuterLoopGains", "OuterLoopOptions", "PnParams", "PriorityMode", "RunSummary", "ScenarioConfig",
    "TargetSpec", "VehicleParams", "VehicleState", "load_config", "load_model", "los_kinematics",
    "pn_accel", "realize", "run_batch", "run_calibration", "run_scenario", "save_model",
    "truth_model",
]
