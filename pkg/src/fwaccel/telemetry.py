"""CSV log schemas, writing/reading, and plot-ready moving averages."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MA_WINDOW = 10


class SchemaError(ValueError):
    pass


STATE_COLUMNS = [
    "time", "pos_n", "pos_e", "pos_d", "vel_n", "vel_e", "vel_d",
    "roll", "pitch", "yaw", "p", "q", "r", "airspeed", "speed", "thrust_force", "alpha",
]
CONTROL_COLUMNS = [
    "p_c_raw", "q_c_raw", "r_c_raw", "thrust_c_raw",
    "p_c", "q_c", "r_c", "thrust_c", "phi_c", "q_min", "q_max",
    "acc_cmd_bx", "acc_cmd_by", "acc_cmd_bz", "acc_meas_bx", "acc_meas_by", "acc_meas_bz",
    "an_cmd_y", "an_cmd_z", "an_meas_y", "an_meas_z",
    "a_t_cmd", "a_te_c", "a_te_meas", "speed_setpoint", "priority",
    "thrust_saturated", "q_clamped", "degenerate_lift", "alpha_exceeded",
]
SCHEMAS: dict[str, list[str]] = {
    "calibration": STATE_COLUMNS + [
        "throttle", "theta0", "p_c", "q_c", "speed_meas", "vz_meas", "airspeed_meas",
        "v2_filt", "a_te_filt", "a_te_true", "kept",
    ],
    "accel_steps": STATE_COLUMNS + CONTROL_COLUMNS + ["segment"],
    "pn_intercept": STATE_COLUMNS + CONTROL_COLUMNS + [
        "range", "closing_speed", "los_rate", "rel_n", "rel_e", "rel_d", "terminal",
    ],
}
TEXT_COLUMNS = {"priority"}

PLOT_COLUMNS = {
    "accel_steps": ["acc_cmd_bx", "acc_cmd_by", "acc_cmd_bz", "acc_meas_bx", "acc_meas_by",
                    "acc_meas_bz", "an_meas_y", "an_meas_z", "speed", "thrust_c"],
    "pn_intercept": ["acc_cmd_bx", "acc_cmd_by", "acc_cmd_bz", "acc_meas_bx", "acc_meas_by",
                     "acc_meas_bz", "range", "speed", "thrust_c"],
    "calibration": ["airspeed_meas", "v2_filt", "a_te_filt", "a_te_true"],
}


def moving_average(x: Sequence[float], window: int = MA_WINDOW) -> np.ndarray:
    """Trailing mean over the last ``window`` samples (fewer at the start)."""
    x = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.cumsum(np.concatenate([[0.0], x]))
    n = np.arange(1, len(x) + 1)
    lo = np.maximum(n - window, 0)
    return (c[n] - c[lo]) / (n - lo)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_log(path: str | Path, kind: str, rows: Iterable[Mapping[str, object]]) -> Path:
    if kind not in SCHEMAS:
        raise SchemaError(f"unknown log kind {kind!r}")
    header = SCHEMAS[kind]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            missing = [c for c in header if c not in row]
            if missing:
                raise SchemaError(f"row missing columns {missing}")
            w.writerow([_fmt(row[c]) for c in header])
    return path


def read_log(path: str | Path, kind: str | None = None) -> dict[str, np.ndarray]:
    """Read a log into column arrays; text columns stay as string arrays."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"log {path} does not exist")
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        data = list(r)
    if kind is not None and header != SCHEMAS[kind]:
        raise SchemaError(f"{path}: header does not match the {kind} schema")
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in data]
        cols[name] = np.array(vals) if name in TEXT_COLUMNS else np.array(vals, dtype=float)
    return cols


def detect_kind(path: str | Path) -> str:
    with Path(path).open(newline="") as fh:
        header = next(csv.reader(fh))
    for kind, cols in SCHEMAS.items():
        if header == cols:
            return kind
    raise SchemaError(f"{path}: header matches no known log schema")


def emit_plot_data(log_path: str | Path, columns: Sequence[str] | None = None,
                   out_path: str | Path | None = None, window: int = MA_WINDOW) -> Path:
    """Write ``time`` plus each column raw and as a ``window``-sample trailing mean."""
    log_path = Path(log_path)
    cols = read_log(log_path)
    if columns is None:
        columns = PLOT_COLUMNS[detect_kind(log_path)]
    missing = [c for c in ["time", *columns] if c not in cols]
    if missing:
        raise SchemaError(f"{log_path}: missing columns {missing}")
    out_path = Path(out_path) if out_path else log_path.with_name(log_path.stem + "_plot.csv")
    header = ["time"]
    series = [cols["time"]]
    for c in columns:
        header += [c, f"{c}_ma{window}"]
        series += [cols[c], moving_average(cols[c], window)]
    with out_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(cols["time"])):
            w.writerow([repr(float(s[i])) for s in series])
    return out_path


def nan_to_none(x: float):
    return None if isinstance(x, float) and not math.isfinite(x) else x
