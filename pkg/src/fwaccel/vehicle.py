"""
Simplified fixed-wing vehicle model standing in for the airframe plus the
autopilot's inner loops.

Translational motion is a point mass whose velocity stays on the body x-axis
(zero angle of attack and sideslip in the kinematic sense). Speed changes with
thrust, drag and gravity; the flight path turns with the body rates. Body
rates p, q follow their commands through a first-order lag, yaw rate comes
from the coordinated-turn relation, and thrust force lags ``T_c * T_max``.

Lift is not modeled aerodynamically: it is whatever normal force the
rotational state implies, capped at ``max_load_factor * m * g`` by limiting
the pitch-rate command. Angle of attack is reconstructed from that lift for
diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import GRAVITY, EulerAngles, rot_inertial_to_body, wrap_angle

ENVELOPE_ANGLE = math.radians(45.0)
MAX_DT = 0.05


class EnvelopeError(RuntimeError):
    """Raised when the simulated vehicle leaves its flight envelope."""

    def __init__(self, message: str, state: "VehicleState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 11.3                # kg
    ref_area: float = 0.75            # m^2
    rho: float = 1.225                # kg/m^3
    drag_coeff: float = 0.0787        # overwritten by tune_vehicle_params
    max_thrust: float = 36.2          # N, overwritten by tune_vehicle_params
    tau_rate: float = 0.1             # s
    tau_thrust: float = 0.05          # s
    stall_speed: float = 12.0         # m/s
    lift_slope: float = 5.0           # 1/rad, diagnostics only
    max_load_factor: float = 3.0
    g: float = GRAVITY

    def __post_init__(self) -> None:
        for name in ("mass", "ref_area", "rho", "drag_coeff", "max_thrust",
                     "tau_rate", "tau_thrust", "stall_speed", "lift_slope",
                     "max_load_factor", "g"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"VehicleParams.{name} must be positive, got {v!r}")
        if not 0 < self.drag_coeff < 1:
            raise ValueError(f"drag_coeff must be in (0, 1), got {self.drag_coeff}")
        for name in ("tau_rate", "tau_thrust"):
            if not 0.01 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0.01, 1.0)")

    def drag(self, airspeed: float) -> float:
        return 0.5 * self.rho * self.ref_area * self.drag_coeff * airspeed * airspeed

    @property
    def drag_slope(self) -> float:
        """Ground-truth slope of energy acceleration against V_a^2 (1/m)."""
        return -self.rho * self.ref_area * self.drag_coeff / (2.0 * self.mass)

    @property
    def thrust_slope(self) -> float:
        """Ground-truth energy acceleration per unit thrust command (m/s^2)."""
        return self.max_thrust / self.mass

    def energy_accel(self, throttle: float, airspeed: float) -> float:
        """Steady-state (T - D)/m for a held thrust command."""
        return self.thrust_slope * throttle + self.drag_slope * airspeed**2

    def trim_throttle(self, airspeed: float) -> float:
        return self.drag(airspeed) / self.max_thrust


def tune_vehicle_params(target_drag_slope: float = -0.0032,
                        trim_speed: float = 20.0,
                        trim_throttle: float = 0.4,
                        **fixed) -> VehicleParams:
    """Size C_D and T_max so the airframe hits the given identification landmarks.

    The drag coefficient is solved from the requested energy-vs-V_a^2 slope,
    and the maximum thrust so that level flight at ``trim_speed`` needs
    ``trim_throttle``. Mass, area, density and time constants come from
    ``fixed`` or the dataclass defaults.
    """
    if target_drag_slope >= 0:
        raise ValueError("target_drag_slope must be negative")
    base = VehicleParams(**fixed)
    cd = -2.0 * base.mass * target_drag_slope / (base.rho * base.ref_area)
    drag = 0.5 * base.rho * base.ref_area * cd * trim_speed**2
    return replace(base, drag_coeff=cd, max_thrust=drag / trim_throttle)


DEFAULT_PARAMS = tune_vehicle_params()


@dataclass(frozen=True)
class RateThrustCommand:
    """Autopilot-facing command: body rates (rad/s) and normalized thrust."""

    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    thrust: float = 0.0

    def __post_init__(self) -> None:
        for v in (self.p, self.q, self.r, self.thrust):
            if not math.isfinite(v):
                raise ValueError(f"non-finite command component: {self!r}")


@dataclass(frozen=True, eq=False)
class VehicleState:
    position: np.ndarray                       # m, NED
    speed: float                               # m/s
    euler: EulerAngles
    rates: np.ndarray                          # (p, q, r) rad/s
    thrust: float                              # N
    time: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float).reshape(3))
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    @property
    def velocity(self) -> np.ndarray:
        """Inertial NED velocity; aligned with the body x-axis."""
        th, ps = self.euler.pitch, self.euler.yaw
        c = math.cos(th)
        return self.speed * np.array([c * math.cos(ps), c * math.sin(ps), -math.sin(th)])

    @property
    def airspeed(self) -> float:
        # zero wind
        return self.speed

    @property
    def altitude(self) -> float:
        return -float(self.position[2])

    def as_vector(self) -> list[float]:
        e = self.euler
        return [*self.position.tolist(), self.speed, e.roll, e.pitch, e.yaw,
                float(self.rates[0]), float(self.rates[1]), self.thrust]


@dataclass(frozen=True)
class NoiseSettings:
    """Standard deviations of additive zero-mean Gaussian sensor noise (SI units)."""

    attitude: float = 0.0
    rates: float = 0.0
    velocity: float = 0.0
    airspeed: float = 0.0
    accel: float = 0.0
    altitude: float = 0.0
    position: float = 0.0

    CHANNELS = ("attitude", "rates", "velocity", "airspeed", "accel", "altitude", "position")

    @property
    def enabled(self) -> bool:
        return any(getattr(self, c) > 0 for c in self.CHANNELS)


class SensorNoise:
    """Independent seeded generators, one per sensor channel."""

    def __init__(self, settings: NoiseSettings, seed: int | None):
        self.settings = settings
        if settings.enabled and seed is None:
            raise ValueError("a seed is required when sensor noise is enabled")
        children = np.random.SeedSequence(seed if seed is not None else 0).spawn(len(NoiseSettings.CHANNELS))
        self._rngs = {c: np.random.default_rng(s) for c, s in zip(NoiseSettings.CHANNELS, children)}

    def sample(self, channel: str, size: int | None = None):
        sigma = getattr(self.settings, channel)
        if sigma <= 0:
            return np.zeros(size) if size else 0.0
        return self._rngs[channel].normal(0.0, sigma, size)


@dataclass(frozen=True, eq=False)
class SensorSnapshot:
    euler: EulerAngles
    rates: np.ndarray
    velocity: np.ndarray
    airspeed: float
    specific_force: np.ndarray    # body frame, m/s^2
    altitude: float
    position: np.ndarray

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass
class FixedWingSim:
    """Ground-truth dynamics. Stateless apart from its parameters."""

    params: VehicleParams = field(default_factory=lambda: DEFAULT_PARAMS)

    def _pitch_rate_limits(self, V: float, cphi_cth: float) -> tuple[float, float]:
        g = self.params.g
        hi = (self.params.max_load_factor * g - g * cphi_cth) / V
        lo = (-g - g * cphi_cth) / V
        return lo, hi

    def derivatives(self, x, cmd: RateThrustCommand) -> list[float]:
        P = self.params
        g = P.g
        _, _, _, V, phi, th, psi, p, q, T = x
        sphi, cphi = math.sin(phi), math.cos(phi)
        sth, cth = math.sin(th), math.cos(th)
        r = g * sphi * cth / V
        lo, hi = self._pitch_rate_limits(V, cphi * cth)
        qc = min(max(cmd.q, lo), hi)
        tc = min(max(cmd.thrust, 0.0), 1.0)
        drag = 0.5 * P.rho * P.ref_area * P.drag_coeff * V * V
        turn = q * sphi + r * cphi
        return [
            V * cth * math.cos(psi),
            V * cth * math.sin(psi),
            -V * sth,
            (T - drag) / P.mass - g * sth,
            p + turn * sth / cth,
            q * cphi - r * sphi,
            turn / cth,
            (cmd.p - p) / P.tau_rate,
            (qc - q) / P.tau_rate,
            (tc * P.max_thrust - T) / P.tau_thrust,
        ]

    def _state_from(self, x, t: float) -> VehicleState:
        phi, th, psi = x[4], x[5], x[6]
        r = self.params.g * math.sin(phi) * math.cos(th) / x[3] if x[3] > 0 else 0.0
        return VehicleState(
            position=np.array(x[0:3]),
            speed=x[3],
            euler=EulerAngles(phi, th, wrap_angle(psi)),
            rates=np.array([x[7], x[8], r]),
            thrust=x[9],
            time=t,
        )

    def check_envelope(self, state: VehicleState) -> None:
        e = state.euler
        if abs(e.roll) > ENVELOPE_ANGLE or abs(e.pitch) > ENVELOPE_ANGLE:
            raise EnvelopeError(
                f"attitude out of envelope: roll={math.degrees(e.roll):.1f} deg "
                f"pitch={math.degrees(e.pitch):.1f} deg at t={state.time:.3f}", state)
        if state.airspeed < self.params.stall_speed:
            raise EnvelopeError(
                f"airspeed {state.airspeed:.2f} m/s below stall "
                f"{self.params.stall_speed:.2f} m/s at t={state.time:.3f}", state)

    def step(self, state: VehicleState, cmd: RateThrustCommand, dt: float) -> VehicleState:
        """Advance one fixed RK4 step with the command held constant."""
        if not 0 < dt <= MAX_DT:
            raise ValueError(f"dt must be in (0, {MAX_DT}], got {dt}")
        self.check_envelope(state)
        x = state.as_vector()
        k1 = self.derivatives(x, cmd)
        k2 = self.derivatives([a + 0.5 * dt * b for a, b in zip(x, k1)], cmd)
        k3 = self.derivatives([a + 0.5 * dt * b for a, b in zip(x, k2)], cmd)
        k4 = self.derivatives([a + dt * b for a, b in zip(x, k3)], cmd)
        xn = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
              for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
        new = self._state_from(xn, state.time + dt)
        self.check_envelope(new)
        return new

    def trim(self, speed: float = 20.0, heading: float = 0.0, altitude: float = 100.0,
             position: tuple[float, float] = (0.0, 0.0), pitch: float = 0.0) -> VehicleState:
        """Unaccelerated wings-level flight at ``speed`` along ``pitch``."""
        P = self.params
        thrust = P.drag(speed) + P.mass * P.g * math.sin(pitch)
        if not 0 <= thrust <= P.max_thrust:
            raise ValueError(f"no trim at V={speed} m/s, pitch={pitch} rad")
        return VehicleState(
            position=np.array([position[0], position[1], -altitude]),
            speed=speed,
            euler=EulerAngles(0.0, pitch, wrap_angle(heading)),
            rates=np.zeros(3),
            thrust=thrust,
        )

    def trim_command(self, state: VehicleState) -> RateThrustCommand:
        P = self.params
        t = (P.drag(state.speed) + P.mass * P.g * math.sin(state.euler.pitch)) / P.max_thrust
        return RateThrustCommand(0.0, 0.0, 0.0, t)

    def speed_rate(self, state: VehicleState) -> float:
        P = self.params
        return (state.thrust - P.drag(state.speed)) / P.mass - P.g * math.sin(state.euler.pitch)

    def specific_force(self, state: VehicleState) -> np.ndarray:
        """Accelerometer reading (kinematic acceleration minus gravity) in body axes."""
        g = self.params.g
        phi, th = state.euler.roll, state.euler.pitch
        V = state.speed
        _, q, r = state.rates
        a_body = np.array([self.speed_rate(state), V * r, -V * q])
        g_body = g * np.array([-math.sin(th), math.sin(phi) * math.cos(th),
                               math.cos(phi) * math.cos(th)])
        return a_body - g_body

    def acceleration(self, state: VehicleState) -> np.ndarray:
        """Inertial kinematic acceleration (NED)."""
        R = rot_inertial_to_body(state.euler)
        return R.T @ self.specific_force(state) + np.array([0.0, 0.0, self.params.g])

    def lift(self, state: VehicleState) -> float:
        return -self.params.mass * float(self.specific_force(state)[2])

    def alpha(self, state: VehicleState) -> float:
        P = self.params
        qbar_s = 0.5 * P.rho * P.ref_area * state.speed**2
        return self.lift(state) / (qbar_s * P.lift_slope)

    def measure(self, state: VehicleState, noise: SensorNoise | None = None) -> SensorSnapshot:
        f = self.specific_force(state)
        e = state.euler
        snap = SensorSnapshot(
            euler=e,
            rates=state.rates.copy(),
            velocity=state.velocity,
            airspeed=state.airspeed,
            specific_force=f,
            altitude=state.altitude,
            position=state.position.copy(),
        )
        if noise is None or not noise.settings.enabled:
            return snap
        att = noise.sample("attitude", 3)
        return SensorSnapshot(
            euler=EulerAngles(e.roll + att[0], e.pitch + att[1], wrap_angle(e.yaw + att[2])),
            rates=snap.rates + noise.sample("rates", 3),
            velocity=snap.velocity + noise.sample("velocity", 3),
            airspeed=snap.airspeed + float(noise.sample("airspeed")),
            specific_force=f + noise.sample("accel", 3),
            altitude=snap.altitude + float(noise.sample("altitude")),
            position=snap.position + noise.sample("position", 3),
        )
