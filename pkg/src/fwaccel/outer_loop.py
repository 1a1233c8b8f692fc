"""
Acceleration-level outer loop.

Maps a commanded acceleration, split into a normal vector and a tangential
scalar, onto body-rate and normalized-thrust commands ``(p_c, q_c, T_c)``:

* normal channel: the lift vector must supply ``a_n - g``; roll points it,
  pitch rate bends the flight path, ``q_c = -(a_n)_z / V`` in body axes;
* tangential channel: the energy acceleration ``a_t - g * V_z / V`` is
  turned into a thrust command through an identified ``EnergyModel``;
* priority handling decides which channel gives way when thrust saturates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .energy_model import EnergyModel, ModelError
from .frames import (GRAVITY, FrameVector, gravity_vector, rot_inertial_to_body,
                     rot_inertial_to_v2)
from .vehicle import RateThrustCommand

DEFAULT_MIN_SPEED = 5.0


class ControlError(ValueError):
    """Invalid input to one of the outer-loop maps."""


class DegenerateLiftError(ControlError):
    """Required lift is too small for its direction to be meaningful."""


class LowSpeedError(ControlError):
    pass


class InfeasibleConstraintError(ControlError):
    pass


class PriorityMode(str, enum.Enum):
    NORMAL = "normal"
    TANGENTIAL = "tangential"


@dataclass(frozen=True)
class OuterLoopGains:
    k_phi: float = 2.0      # 1/s
    k_theta: float = 1.5    # 1/s
    k_v: float = 0.5        # 1/s

    def __post_init__(self) -> None:
        for name in ("k_phi", "k_theta", "k_v"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True, eq=False)
class AccelCommand:
    normal: FrameVector     # inertial, orthogonal to velocity
    tangential: float       # m/s^2 along velocity

    def __post_init__(self) -> None:
        self.normal.expect("inertial")

    @classmethod
    def projected(cls, normal, tangential: float, velocity) -> "AccelCommand":
        """Build a command, removing any component of ``normal`` along ``velocity``."""
        a = normal.vec if isinstance(normal, FrameVector) else np.asarray(normal, dtype=float)
        if isinstance(normal, FrameVector):
            normal.expect("inertial")
        return cls(FrameVector(project_normal(a, velocity), "inertial"), float(tangential))


def project_normal(a: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    v = np.asarray(velocity, dtype=float)
    vv = float(v @ v)
    if vv == 0.0:
        return np.array(a, dtype=float)
    return a - (a @ v) / vv * v


def sat(x: float, x_min: float, x_max: float) -> float:
    if x_min > x_max:
        raise ControlError(f"sat bounds reversed: {x_min} > {x_max}")
    return x_min if x < x_min else x_max if x > x_max else x


def required_lift_accel(a_n: FrameVector, gravity: FrameVector | None = None,
                        literal: bool = False) -> FrameVector:
    """Specific force the lift vector has to supply.

    By default gravity is compensated (``a_n - g``), so a zero normal command
    asks for ``g`` straight up. ``literal=True`` evaluates ``a_n + g`` as
    written with the NED gravity vector, for comparison only.
    """
    a_n.expect("inertial")
    g = gravity if gravity is not None else gravity_vector()
    g.expect("inertial")
    a_l = a_n + g if literal else a_n - g
    if a_l.norm() < 0.1 * g.norm():
        raise DegenerateLiftError(f"|a_L| = {a_l.norm():.3f} m/s^2 is below 0.1 g")
    return a_l


def bank_angle_command(a_l: FrameVector, euler) -> float:
    """Signed roll angle that points the lift vector along ``a_l``.

    Measured in the v2 y-z plane from the -z axis; positive when the lift
    vector leans to +y (right).
    """
    v2 = a_l.expect("inertial").rotated(rot_inertial_to_v2(euler), "v2")
    return math.atan2(v2.y, -v2.z)


def roll_command(a_l: FrameVector, state, gains: OuterLoopGains,
                 max_bank: float | None = None) -> tuple[float, float]:
    """Return ``(phi_c, p_c)`` for the required lift vector."""
    euler = state.euler
    if abs(euler.pitch) >= math.radians(45.0):
        raise ControlError("roll mapping assumes |pitch| < 45 deg")
    phi_c = bank_angle_command(a_l, euler)
    if max_bank is not None:
        phi_c = sat(phi_c, -max_bank, max_bank)
    return phi_c, gains.k_phi * (phi_c - euler.roll)


def _speed(state) -> float:
    return float(np.linalg.norm(state.velocity))


def pitch_rate_command(a_n: FrameVector, state, v_min: float = DEFAULT_MIN_SPEED) -> float:
    V = _speed(state)
    if V < v_min:
        raise LowSpeedError(f"speed {V:.2f} m/s below {v_min} m/s")
    # body axes stand in for velocity axes (small alpha, beta)
    z_body = float(rot_inertial_to_body(state.euler)[2] @ a_n.expect("inertial").vec)
    return -z_body / V


def energy_accel_command(a_t: float, state, v_min: float = DEFAULT_MIN_SPEED,
                         g: float = GRAVITY) -> float:
    V = _speed(state)
    if V < v_min:
        raise LowSpeedError(f"speed {V:.2f} m/s below {v_min} m/s")
    return a_t - g * float(state.velocity[2]) / V


def thrust_command(a_te_c: float, model: EnergyModel) -> float:
    """Unsaturated thrust command from the inverse energy model."""
    try:
        model.check()
    except ModelError as exc:
        raise ControlError(str(exc)) from exc
    return (a_te_c - model.b_t) / model.k_t


def apply_normal_priority(cmd: RateThrustCommand) -> RateThrustCommand:
    return RateThrustCommand(cmd.p, cmd.q, cmd.r, sat(cmd.thrust, 0.0, 1.0))


def _asin_clamped(x: float) -> float:
    return math.asin(min(1.0, max(-1.0, x)))


def pitch_bounds(a_t: float, model: EnergyModel, g: float = GRAVITY,
                 max_pitch: float = math.radians(30.0),
                 literal: bool = False) -> tuple[float, float]:
    """Pitch interval in which the thrust range can still deliver ``a_t``.

    With the flight path on the body x-axis, ``dV/dt = a_TE - g sin(theta)``;
    demanding ``dV/dt = a_t`` with ``a_TE`` in its achievable range gives
    ``sin(theta)`` in ``[(a_min - a_t)/g, (a_max - a_t)/g]``. ``literal=True``
    uses the opposite sign, ``[(a_t - a_max)/g, (a_t - a_min)/g]``, which
    pitches the wrong way in NED; kept for comparison.
    """
    a_min, a_max = model.bounds()
    if a_max < a_min:
        raise InfeasibleConstraintError(f"a_TE,max {a_max:.3f} < a_TE,min {a_min:.3f}")
    if literal:
        lo, hi = _asin_clamped((a_t - a_max) / g), _asin_clamped((a_t - a_min) / g)
    else:
        lo, hi = _asin_clamped((a_min - a_t) / g), _asin_clamped((a_max - a_t) / g)
    if lo > hi:
        raise InfeasibleConstraintError(f"theta_min {lo:.4f} > theta_max {hi:.4f}")
    return sat(lo, -max_pitch, max_pitch), sat(hi, -max_pitch, max_pitch)


def pitch_rate_bounds(a_t: float, state, model: EnergyModel, gains: OuterLoopGains,
                      g: float = GRAVITY, max_pitch: float = math.radians(30.0),
                      literal: bool = False) -> tuple[float, float]:
    th = state.euler.pitch
    lo, hi = pitch_bounds(a_t, model, g, max_pitch, literal)
    return gains.k_theta * (lo - th), gains.k_theta * (hi - th)


def apply_tangential_priority(cmd: RateThrustCommand, a_t: float, state,
                              model: EnergyModel, gains: OuterLoopGains,
                              g: float = GRAVITY, max_pitch: float = math.radians(30.0),
                              literal: bool = False) -> RateThrustCommand:
    """Clamp q_c into the pitch-rate band that keeps ``a_t`` reachable.

    ``model`` must already be evaluated at the current airspeed.
    """
    q_lo, q_hi = pitch_rate_bounds(a_t, state, model, gains, g, max_pitch, literal)
    return RateThrustCommand(cmd.p, sat(cmd.q, q_lo, q_hi), cmd.r, sat(cmd.thrust, 0.0, 1.0))


def coordinated_yaw_rate(state, g: float = GRAVITY) -> float:
    e = state.euler
    return g * math.sin(e.roll) * math.cos(e.pitch) / max(_speed(state), 1e-6)


@dataclass(frozen=True)
class OuterLoopOptions:
    min_speed: float = DEFAULT_MIN_SPEED
    max_bank: float | None = math.radians(40.0)
    max_pitch: float = math.radians(30.0)
    literal_lift: bool = False
    literal_pitch_bounds: bool = False
    integral: bool = False
    ki_normal: float = 0.5        # 1/s
    ki_tangential: float = 0.2    # 1/(m/s^2 s) on T_c
    g: float = GRAVITY


@dataclass(frozen=True, eq=False)
class ControlOutput:
    command: RateThrustCommand      # after priority saturation
    raw: RateThrustCommand          # before saturation
    phi_c: float
    a_te_c: float
    q_bounds: tuple[float, float] | None
    model: EnergyModel              # inverse fit at the current airspeed
    degenerate_lift: bool = False


def realize(a_cmd: AccelCommand, state, model: EnergyModel, gains: OuterLoopGains,
            mode: PriorityMode, options: OuterLoopOptions = OuterLoopOptions(),
            hold_phi_c: float | None = None) -> ControlOutput:
    """One evaluation of the full map ``a_c -> (p_c, q_c, T_c)``.

    ``hold_phi_c`` is used as the bank command when the lift direction is
    undefined; without it a degenerate lift request raises.
    """
    g = options.g
    degenerate = False
    try:
        a_l = required_lift_accel(a_cmd.normal, gravity_vector(g), options.literal_lift)
        phi_c, p_c = roll_command(a_l, state, gains, options.max_bank)
    except DegenerateLiftError:
        if hold_phi_c is None:
            raise
        degenerate = True
        phi_c = hold_phi_c
        p_c = gains.k_phi * (phi_c - state.euler.roll)
    q_c = pitch_rate_command(a_cmd.normal, state, options.min_speed)
    local = model.at_airspeed(float(state.airspeed))
    a_te_c = energy_accel_command(a_cmd.tangential, state, options.min_speed, g)
    t_c = thrust_command(a_te_c, local)
    raw = RateThrustCommand(p_c, q_c, coordinated_yaw_rate(state, g), t_c)
    q_bounds = None
    if mode is PriorityMode.NORMAL:
        out = apply_normal_priority(raw)
    else:
        q_bounds = pitch_rate_bounds(a_cmd.tangential, state, local, gains, g,
                                     options.max_pitch, options.literal_pitch_bounds)
        out = RateThrustCommand(raw.p, sat(raw.q, *q_bounds), raw.r, sat(raw.thrust, 0.0, 1.0))
    return ControlOutput(out, raw, phi_c, a_te_c, q_bounds, local, degenerate)


@dataclass
class OuterLoopController:
    """Stateful wrapper around ``realize``.

    Keeps the last bank command for degenerate-lift hold and, when
    ``options.integral`` is set, integral trims on both channels clamped to
    20 % of channel authority (1 g normal, full thrust range tangential).
    """

    model: EnergyModel
    gains: OuterLoopGains = field(default_factory=OuterLoopGains)
    mode: PriorityMode = PriorityMode.NORMAL
    options: OuterLoopOptions = field(default_factory=OuterLoopOptions)
    _phi_c: float = 0.0
    _i_normal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    _i_thrust: float = 0.0

    def reset(self) -> None:
        self._phi_c = 0.0
        self._i_normal = np.zeros(3)
        self._i_thrust = 0.0

    def update(self, a_cmd: AccelCommand, state, dt: float,
               measured_accel: np.ndarray | None = None) -> ControlOutput:
        opts = self.options
        cmd = a_cmd
        if opts.integral and measured_accel is not None:
            cmd = self._integrate(a_cmd, state, dt, measured_accel)
        out = realize(cmd, state, self.model, self.gains, self.mode, opts, hold_phi_c=self._phi_c)
        self._phi_c = out.phi_c
        if opts.integral and self._i_thrust:
            raw = out.raw
            bumped = RateThrustCommand(raw.p, raw.q, raw.r, raw.thrust + self._i_thrust)
            sat_t = sat(bumped.thrust, 0.0, 1.0)
            out = ControlOutput(
                RateThrustCommand(out.command.p, out.command.q, out.command.r, sat_t),
                bumped, out.phi_c, out.a_te_c, out.q_bounds, out.model, out.degenerate_lift)
        return out

    def _integrate(self, a_cmd: AccelCommand, state, dt: float,
                   measured_accel: np.ndarray) -> AccelCommand:
        opts = self.options
        v = np.asarray(state.velocity, dtype=float)
        V = float(np.linalg.norm(v))
        a_meas = np.asarray(measured_accel, dtype=float)
        err_n = a_cmd.normal.vec - project_normal(a_meas, v)
        self._i_normal = self._i_normal + opts.ki_normal * err_n * dt
        cap = 0.2 * opts.g
        n = float(np.linalg.norm(self._i_normal))
        if n > cap:
            self._i_normal *= cap / n
        if V > 0:
            e_v = v / V
            a_te_meas = float((a_meas - np.array([0.0, 0.0, opts.g])) @ e_v)
            a_te_c = energy_accel_command(a_cmd.tangential, state, opts.min_speed, opts.g)
            self._i_thrust = sat(self._i_thrust + opts.ki_tangential * (a_te_c - a_te_meas) * dt,
                                 -0.2, 0.2)
        return AccelCommand.projected(a_cmd.normal.vec + self._i_normal, a_cmd.tangential, v)
