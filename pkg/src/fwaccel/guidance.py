"""Acceleration-command generators: proportional navigation and a speed loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import FrameVector
from .outer_loop import project_normal


class InterceptEvent(Exception):
    """Range dropped below the intercept radius. Terminates an engagement."""

    def __init__(self, range_: float):
        super().__init__(f"intercept at range {range_:.3f} m")
        self.range = range_


@dataclass(frozen=True, eq=False)
class TargetSpec:
    position: np.ndarray     # m, NED; static

    def __post_init__(self) -> None:
        p = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("target position must be finite")
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class PnParams:
    nav_constant: float = 3.0
    speed_setpoint: float = 20.0     # m/s
    k_v: float = 0.5                 # 1/s
    intercept_radius: float = 1.0    # m

    def __post_init__(self) -> None:
        if self.nav_constant <= 0:
            raise ValueError("nav_constant must be positive")
        if self.intercept_radius <= 0:
            raise ValueError("intercept_radius must be positive")
        if self.speed_setpoint <= 0 or self.k_v <= 0:
            raise ValueError("speed_setpoint and k_v must be positive")


@dataclass(frozen=True, eq=False)
class LosState:
    unit: np.ndarray         # line-of-sight unit vector, inertial
    rate: np.ndarray         # d(unit)/dt, rad/s
    omega: np.ndarray        # LOS rotation-rate vector, rad/s
    closing_speed: float     # m/s, -d(range)/dt
    range: float             # m


def los_kinematics(vehicle, target: TargetSpec, intercept_radius: float | None = None) -> LosState:
    """Line-of-sight geometry from vehicle position/velocity to a static target.

    ``vehicle`` is anything with ``position`` and ``velocity`` arrays.
    """
    r = target.position - np.asarray(vehicle.position, dtype=float)
    v = -np.asarray(vehicle.velocity, dtype=float)
    rng = float(np.linalg.norm(r))
    if rng == 0.0:
        raise InterceptEvent(0.0)
    if intercept_radius is not None and rng < intercept_radius:
        raise InterceptEvent(rng)
    unit = r / rng
    omega = np.cross(r, v) / (rng * rng)
    rate = np.cross(omega, unit)
    return LosState(unit, rate, omega, -float(r @ v) / rng, rng)


class FiniteDifferenceLos:
    """LOS rate from backward differences of the LOS unit vector.

    Mirrors an implementation that only sees successive relative positions.
    The first call has no history and falls back to the analytic rate.
    """

    def __init__(self) -> None:
        self._prev: tuple[float, np.ndarray, float] | None = None

    def __call__(self, vehicle, target: TargetSpec, t: float,
                 intercept_radius: float | None = None) -> LosState:
        exact = los_kinematics(vehicle, target, intercept_radius)
        prev = self._prev
        self._prev = (t, exact.unit, exact.range)
        if prev is None or t <= prev[0]:
            return exact
        dt = t - prev[0]
        rate = (exact.unit - prev[1]) / dt
        rate = rate - (rate @ exact.unit) * exact.unit
        omega = np.cross(exact.unit, rate)
        closing = -(exact.range - prev[2]) / dt
        return LosState(exact.unit, rate, omega, closing, exact.range)


def pn_accel(los: LosState, params: PnParams, velocity: np.ndarray | None = None) -> FrameVector:
    """``N * V_cl * dλ/dt``, optionally projected normal to ``velocity``."""
    a = params.nav_constant * los.closing_speed * los.rate
    if velocity is not None:
        a = project_normal(a, velocity)
    return FrameVector(a, "inertial")


def speed_loop_accel(speed: float, params: PnParams) -> float:
    return params.k_v * (params.speed_setpoint - speed)


def closest_approach(rel0: np.ndarray, rel1: np.ndarray) -> float:
    """Minimum distance to the origin along the segment ``rel0 -> rel1``."""
    d = rel1 - rel0
    dd = float(d @ d)
    s = 0.0 if dd == 0.0 else min(1.0, max(0.0, -float(rel0 @ d) / dd))
    return float(np.linalg.norm(rel0 + s * d))


def path_axes(velocity: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unrolled axes attached to the flight path: along-track, right, and down-normal."""
    v = np.asarray(velocity, dtype=float)
    x = v / np.linalg.norm(v)
    chi = math.atan2(x[1], x[0])
    y = np.array([-math.sin(chi), math.cos(chi), 0.0])
    z = np.cross(x, y)
    return x, y, z
