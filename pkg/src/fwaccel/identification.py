"""
In-flight identification of the thrust-command / energy-acceleration map.

A calibration run holds a sequence of discrete thrust levels while a simple
attitude hold keeps the aircraft near a reference pitch. Energy acceleration
``a_TE = dV/dt - g * V_z / V`` is estimated from measured ground velocity,
regressed against measured ``V_a^2`` per level, and the per-level lines are
combined into an :class:`~fwaccel.energy_model.EnergyModel`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, signal

from .energy_model import EnergyModel, LevelFit, ModelError, inverse_fit
from .frames import GRAVITY
from .outer_loop import OuterLoopGains
from .vehicle import (EnvelopeError, FixedWingSim, NoiseSettings, RateThrustCommand,
                      SensorNoise, VehicleState)

logger = logging.getLogger(__name__)

MIN_LEVEL_SAMPLES = 10
MIN_V2_SPREAD = 20.0


class IdentificationError(ValueError):
    pass


class CalibrationAbort(RuntimeError):
    """Envelope abort during calibration, tagged with the active thrust level."""

    def __init__(self, throttle: float, cause: EnvelopeError):
        super().__init__(f"envelope abort at thrust level {throttle:.2f}: {cause}")
        self.throttle = throttle
        self.state = cause.state


def alternating_order(levels: Sequence[float]) -> list[float]:
    """Interleave low and high levels: 0.1, 0.8, 0.2, 0.7, ..."""
    s = sorted(levels)
    out: list[float] = []
    i, j = 0, len(s) - 1
    while i <= j:
        out.append(s[i])
        if i != j:
            out.append(s[j])
        i += 1
        j -= 1
    return out


@dataclass(frozen=True)
class CalibrationPlan:
    levels: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 9))
    dwell: float = 2.0                  # s per level
    order: str = "alternating"          # or "increasing"
    transient_trim: float = 0.5         # s dropped after every switch
    # reference pitch for each pass over the level sequence; varying it
    # shifts the mean airspeed so every level sees a spread of V_a^2
    pass_pitch: tuple[float, ...] = (0.0, math.radians(-3.0), math.radians(3.0))

    def __post_init__(self) -> None:
        if any(not 0.0 <= x <= 1.0 for x in self.levels):
            raise IdentificationError("thrust levels must lie in [0, 1]")
        if len(set(self.levels)) < 2:
            raise IdentificationError("at least two distinct thrust levels are required")
        if self.transient_trim < 0 or self.dwell <= self.transient_trim:
            raise IdentificationError("dwell must exceed the transient trim window")
        if self.order not in ("alternating", "increasing"):
            raise IdentificationError(f"unknown level order {self.order!r}")
        if not self.pass_pitch:
            raise IdentificationError("at least one calibration pass is required")

    def sequence(self) -> list[float]:
        base = alternating_order(self.levels) if self.order == "alternating" else sorted(self.levels)
        return list(base)

    def schedule(self) -> list[tuple[float, float, float]]:
        """``(start_time, throttle, reference_pitch)`` for every dwell, in order."""
        out = []
        t = 0.0
        for theta0 in self.pass_pitch:
            for tc in self.sequence():
                out.append((t, tc, theta0))
                t += self.dwell
        return out

    @property
    def duration(self) -> float:
        return self.dwell * len(self.levels) * len(self.pass_pitch)


@dataclass(frozen=True)
class CalibrationSample:
    time: float
    throttle: float
    v2: float
    a_te: float


def stabilization_command(state, theta0: float, gains: OuterLoopGains) -> tuple[float, float]:
    """Wings-level attitude hold about pitch ``theta0``."""
    e = state.euler
    return -gains.k_phi * e.roll, -gains.k_theta * (e.pitch - theta0)


def compute_a_te(vdot: float, vz: float, speed: float, g: float = GRAVITY,
                 v_min: float = 5.0) -> float:
    if speed < v_min:
        raise IdentificationError(f"speed {speed:.2f} m/s below {v_min} m/s")
    return vdot - g * vz / speed


def lowpass(x: np.ndarray, cutoff: float, rate: float, order: int = 2) -> np.ndarray:
    """Causal Butterworth low-pass, initialized at the first sample's steady state."""
    if cutoff is None or cutoff <= 0:
        return np.asarray(x, dtype=float)
    b, a = signal.butter(order, cutoff, fs=rate)
    zi = signal.lfilter_zi(b, a) * x[0]
    y, _ = signal.lfilter(b, a, x, zi=zi)
    return y


def energy_accel_series(speed: np.ndarray, vz: np.ndarray, airspeed: np.ndarray,
                        rate: float, cutoff: float = 2.0,
                        g: float = GRAVITY) -> tuple[np.ndarray, np.ndarray]:
    """Filtered ``(V_a^2, a_TE)`` series from uniformly sampled measurements.

    ``dV/dt`` is a first difference of ground speed. The same causal
    low-pass filter is applied to ``a_TE`` and to ``V_a^2`` so both carry
    the same delay and the linear relation between them is preserved.
    The first returned sample repeats the second (no difference available).
    """
    speed = np.asarray(speed, dtype=float)
    vz = np.asarray(vz, dtype=float)
    dt = 1.0 / rate
    vdot = np.empty_like(speed)
    vdot[1:] = np.diff(speed) / dt
    vdot[0] = vdot[1] if len(speed) > 1 else 0.0
    # gravity term averaged over the same half-step the difference spans
    ratio = vz / speed
    ratio_mid = ratio.copy()
    ratio_mid[1:] = 0.5 * (ratio[1:] + ratio[:-1])
    a_te = vdot - g * ratio_mid
    v2 = np.asarray(airspeed, dtype=float) ** 2
    return lowpass(v2, cutoff, rate), lowpass(a_te, cutoff, rate)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    k = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    return k, float(ym - k * xm)


def fit_level(samples: Sequence[CalibrationSample], robust: bool = False,
              huber_scale: float = 0.1) -> LevelFit:
    """Least-squares line ``a_TE = k_v * V_a^2 + b_v`` for one thrust level."""
    if len(samples) < MIN_LEVEL_SAMPLES:
        raise IdentificationError(f"need >= {MIN_LEVEL_SAMPLES} samples, got {len(samples)}")
    levels = {s.throttle for s in samples}
    if len(levels) != 1:
        raise IdentificationError(f"samples mix thrust levels {sorted(levels)}")
    x = np.array([s.v2 for s in samples])
    y = np.array([s.a_te for s in samples])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise IdentificationError("non-finite calibration samples")
    spread = float(x.max() - x.min())
    if spread < MIN_V2_SPREAD:
        raise IdentificationError(f"V_a^2 spread {spread:.1f} m^2/s^2 below {MIN_V2_SPREAD}")
    k, b = _ols(x, y)
    if robust:
        res = optimize.least_squares(lambda p: p[0] * x + p[1] - y, x0=[k, b],
                                     loss="huber", f_scale=huber_scale)
        k, b = float(res.x[0]), float(res.x[1])
    rms = float(np.sqrt(np.mean((k * x + b - y) ** 2)))
    flags = () if k < 0 else ("non_negative_slope",)
    if flags:
        logger.warning("thrust level %.2f: non-negative drag slope %.5f", levels.pop(), k)
    return LevelFit(throttle=samples[0].throttle, k_v=k, b_v=b, n_samples=len(samples),
                    rms=rms, v2_min=float(x.min()), v2_max=float(x.max()), flags=flags)


def build_energy_model(fits: Sequence[LevelFit], airspeed: float,
                       metadata: dict | None = None) -> EnergyModel:
    if len(fits) < 2:
        raise IdentificationError("at least two level fits are required")
    try:
        model = inverse_fit(fits, airspeed, metadata)
    except ModelError as exc:
        raise IdentificationError(str(exc)) from exc
    if model.extrapolated:
        logger.warning("query airspeed %.2f m/s is outside the calibrated range", airspeed)
    return model


@dataclass
class CalibrationResult:
    fits: list[LevelFit]
    samples: list[CalibrationSample]
    # per control tick: time, throttle, theta0, measured + true quantities, kept flag
    log: dict[str, np.ndarray] = field(default_factory=dict)
    states: list[VehicleState] = field(default_factory=list)

    def model(self, airspeed: float = 20.0, metadata: dict | None = None) -> EnergyModel:
        return build_energy_model(self.fits, airspeed, metadata)


def group_by_level(samples: Sequence[CalibrationSample]) -> dict[float, list[CalibrationSample]]:
    out: dict[float, list[CalibrationSample]] = {}
    for s in samples:
        out.setdefault(s.throttle, []).append(s)
    return dict(sorted(out.items()))


def run_calibration(plan: CalibrationPlan, sim: FixedWingSim, gains: OuterLoopGains,
                    initial: VehicleState | None = None,
                    noise: NoiseSettings | None = None, seed: int | None = None,
                    control_rate: float = 50.0, sim_dt: float = 0.005,
                    cutoff: float = 2.0, robust: bool = False,
                    keep_transients: bool = False) -> CalibrationResult:
    """Fly the dwell schedule under attitude hold and fit every level."""
    state = initial if initial is not None else sim.trim(20.0)
    sensors = SensorNoise(noise or NoiseSettings(), seed)
    dt = 1.0 / control_rate
    substeps = max(1, int(round(dt / sim_dt)))
    sim_dt = dt / substeps
    schedule = plan.schedule()
    n = int(round(plan.duration * control_rate))

    cols = {k: np.empty(n) for k in (
        "time", "p_c", "q_c", "throttle", "theta0", "speed_meas", "vz_meas", "airspeed_meas",
        "roll", "pitch", "speed", "a_te_true", "since_switch")}
    states: list[VehicleState] = []
    seg = 0
    for i in range(n):
        t = i * dt
        while seg + 1 < len(schedule) and t >= schedule[seg + 1][0] - 1e-9:
            seg += 1
        t0, tc, theta0 = schedule[seg]
        states.append(state)
        snap = sim.measure(state, sensors)
        p_c, q_c = stabilization_command(snap, theta0, gains)
        cmd = RateThrustCommand(p_c, q_c, 0.0, tc)
        cols["time"][i] = t
        cols["p_c"][i] = p_c
        cols["q_c"][i] = q_c
        cols["throttle"][i] = tc
        cols["theta0"][i] = theta0
        cols["speed_meas"][i] = snap.speed
        cols["vz_meas"][i] = snap.velocity[2]
        cols["airspeed_meas"][i] = snap.airspeed
        cols["roll"][i] = state.euler.roll
        cols["pitch"][i] = state.euler.pitch
        cols["speed"][i] = state.speed
        cols["a_te_true"][i] = (state.thrust - sim.params.drag(state.speed)) / sim.params.mass
        cols["since_switch"][i] = t - t0
        try:
            for _ in range(substeps):
                state = sim.step(state, cmd, sim_dt)
        except EnvelopeError as exc:
            raise CalibrationAbort(tc, exc) from exc

    v2f, atef = energy_accel_series(cols["speed_meas"], cols["vz_meas"], cols["airspeed_meas"],
                                    control_rate, cutoff, sim.params.g)
    kept = np.ones(n, dtype=bool) if keep_transients else cols["since_switch"] >= plan.transient_trim - 1e-9
    kept[0] = False
    cols["v2_filt"] = v2f
    cols["a_te_filt"] = atef
    cols["kept"] = kept.astype(float)
    samples = [CalibrationSample(float(cols["time"][i]), float(cols["throttle"][i]),
                                 float(v2f[i]), float(atef[i]))
               for i in range(n) if kept[i]]
    fits = [fit_level(group, robust=robust) for group in group_by_level(samples).values()]
    return CalibrationResult(fits=fits, samples=samples, log=cols, states=states)
