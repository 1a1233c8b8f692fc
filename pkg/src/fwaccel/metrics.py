"""Summary metrics, computed from log columns only so ``replay`` can audit them."""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .energy_model import LevelFit
from .guidance import closest_approach
from .identification import CalibrationSample, build_energy_model, fit_level, group_by_level
from .telemetry import MA_WINDOW, moving_average

SETTLE_BAND = 0.10
STEADY_WINDOW = 1.0   # s at the end of a segment


def _none_if_nan(x: float) -> float | None:
    return None if not math.isfinite(x) else float(x)


def segment_metrics(time: np.ndarray, cmd: np.ndarray, meas: np.ndarray,
                    band: float = SETTLE_BAND) -> dict[str, Any]:
    """Settling time, overshoot and steady-state error of one command segment.

    ``cmd`` and ``meas`` are (n, 2) normal-acceleration components. Settling
    time is measured from the first sample to the start of the final run of
    samples whose error norm stays within ``band * |cmd|``.
    """
    mag = float(np.linalg.norm(cmd[0]))
    err = np.linalg.norm(meas - cmd, axis=1)
    outside = np.nonzero(err > band * mag)[0]
    if len(outside) == 0:
        settle = 0.0
    elif outside[-1] == len(err) - 1:
        settle = math.inf
    else:
        settle = float(time[outside[-1] + 1] - time[0])
    along = meas @ (cmd[0] / mag)
    overshoot = max(0.0, float(along.max()) - mag) / mag
    tail = time >= time[-1] - STEADY_WINDOW + 1e-9
    return {
        "start": float(time[0]),
        "end": float(time[-1]),
        "command": [float(cmd[0, 0]), float(cmd[0, 1])],
        "settling_time": _none_if_nan(settle),
        "overshoot": overshoot,
        "steady_state_error": float(err[tail].mean()) / mag,
        "max_error_after_settle": (float(err[time - time[0] >= settle].max()) / mag
                                   if math.isfinite(settle) else None),
    }


def step_metrics(cols: Mapping[str, np.ndarray], smooth: bool = False,
                 band: float = SETTLE_BAND) -> list[dict[str, Any]]:
    seg = cols["segment"]
    my, mz = cols["an_meas_y"], cols["an_meas_z"]
    if smooth:
        my, mz = moving_average(my, MA_WINDOW), moving_average(mz, MA_WINDOW)
    out = []
    for s in sorted(set(seg[seg >= 0].astype(int).tolist())):
        idx = seg == s
        cmd = np.column_stack([cols["an_cmd_y"][idx], cols["an_cmd_z"][idx]])
        if np.linalg.norm(cmd[0]) == 0.0 or idx.sum() < 2:
            continue
        m = segment_metrics(cols["time"][idx], cmd, np.column_stack([my[idx], mz[idx]]), band)
        m["segment"] = s
        m["speed_setpoint"] = float(cols["speed_setpoint"][idx][0])
        m["saturated_fraction"] = float(cols["thrust_saturated"][idx].mean())
        out.append(m)
    return out


def saturation_events(cols: Mapping[str, np.ndarray]) -> list[float]:
    """Times at which the raw thrust command leaves [0, 1]."""
    s = cols["thrust_saturated"] > 0.5
    starts = np.nonzero(s & ~np.concatenate([[False], s[:-1]]))[0]
    return [float(cols["time"][i]) for i in starts]


def miss_distance(cols: Mapping[str, np.ndarray]) -> float:
    """Minimum range, interpolating linearly between consecutive logged positions."""
    rel = np.column_stack([cols["rel_n"], cols["rel_e"], cols["rel_d"]])
    best = float(np.linalg.norm(rel[0]))
    for i in range(len(rel) - 1):
        best = min(best, closest_approach(rel[i], rel[i + 1]))
    return best


def calibration_fits(cols: Mapping[str, np.ndarray], robust: bool = False) -> list[LevelFit]:
    kept = cols["kept"] > 0.5
    samples = [CalibrationSample(float(t), float(tc), float(v2), float(a))
               for t, tc, v2, a in zip(cols["time"][kept], cols["throttle"][kept],
                                       cols["v2_filt"][kept], cols["a_te_filt"][kept])]
    return [fit_level(g, robust=robust) for g in group_by_level(samples).values()]


def summarize(kind: str, cols: Mapping[str, np.ndarray], query_airspeed: float = 20.0,
              robust: bool = False) -> dict[str, Any]:
    if kind == "accel_steps":
        sat_times = saturation_events(cols)
        err = cols["speed"] - cols["speed_setpoint"]
        return {
            "steps": step_metrics(cols),
            "steps_ma": step_metrics(cols, smooth=True),
            "thrust_saturation_events": sat_times,
            "first_thrust_saturation": sat_times[0] if sat_times else None,
            "max_speed_error": float(np.abs(err).max()),
            "final_speed_error": float(err[-1]),
        }
    if kind == "pn_intercept":
        miss = miss_distance(cols)
        rng = np.hypot(np.hypot(cols["rel_n"], cols["rel_e"]), cols["rel_d"])
        i = int(np.argmin(rng))
        return {
            "miss_distance": miss,
            "time_of_closest_approach": float(cols["time"][i]),
            "max_normal_cmd": float(np.hypot(cols["an_cmd_y"], cols["an_cmd_z"]).max()),
            "thrust_saturation_events": saturation_events(cols),
        }
    if kind == "calibration":
        kept = cols["kept"] > 0.5
        fits = calibration_fits(cols, robust)
        model = build_energy_model(fits, query_airspeed)
        return {
            "samples_kept": int(kept.sum()),
            "samples_total": int(len(kept)),
            "airspeed_range": [float(cols["airspeed"].min()), float(cols["airspeed"].max())],
            "level_fits": [
                {"throttle": f.throttle, "k_v": f.k_v, "b_v": f.b_v, "n_samples": f.n_samples,
                 "rms": f.rms, "flags": list(f.flags)} for f in fits
            ],
            "query_airspeed": query_airspeed,
            "robust": robust,
            "k_t": model.k_t,
            "b_t": model.b_t,
        }
    raise ValueError(f"unknown kind {kind!r}")
