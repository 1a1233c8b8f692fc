"""
Thrust-command <-> energy-acceleration model and its on-disk format.

For a held thrust command the energy acceleration is close to linear in
V_a^2 (drag grows with dynamic pressure). A family of such per-level lines,
evaluated at the current airspeed, gives (T_c, a_TE) pairs from which a
second line ``a_TE = k_T * T_c + b_T`` is fitted and inverted online.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
MODEL_KIND = "fwaccel.energy_model"


class ModelError(ValueError):
    """Invalid energy model (bad slope, too few levels, bad file)."""


@dataclass(frozen=True)
class LevelFit:
    throttle: float
    k_v: float            # 1/m
    b_v: float            # m/s^2
    n_samples: int
    rms: float            # m/s^2
    v2_min: float         # calibrated V_a^2 range, m^2/s^2
    v2_max: float
    flags: tuple[str, ...] = ()

    def predict(self, airspeed: float) -> float:
        return self.k_v * airspeed * airspeed + self.b_v


@dataclass(frozen=True)
class EnergyModel:
    k_t: float                      # m/s^2 per unit thrust command
    b_t: float                      # m/s^2
    airspeed: float                 # airspeed the inverse fit is valid at
    levels: tuple[LevelFit, ...] = ()
    extrapolated: bool = False
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def predict(self, throttle: float) -> float:
        return self.k_t * throttle + self.b_t

    def check(self) -> "EnergyModel":
        if not (math.isfinite(self.k_t) and self.k_t > 0):
            raise ModelError(f"thrust slope must be positive, got {self.k_t!r}")
        if not math.isfinite(self.b_t):
            raise ModelError("non-finite intercept")
        return self

    def bounds(self) -> tuple[float, float]:
        """Energy acceleration at T_c = 0 and T_c = 1."""
        return self.predict(0.0), self.predict(1.0)

    @property
    def v2_range(self) -> tuple[float, float]:
        if not self.levels:
            return (-math.inf, math.inf)
        return min(f.v2_min for f in self.levels), max(f.v2_max for f in self.levels)

    def at_airspeed(self, airspeed: float) -> "EnergyModel":
        """Re-fit the inverse model from the per-level family at ``airspeed``.

        Models without a level family (e.g. analytic ones) are returned
        unchanged apart from their validity airspeed.
        """
        if not self.levels:
            return replace(self, airspeed=airspeed)
        return inverse_fit(self.levels, airspeed, self.metadata)


def inverse_fit(levels: Sequence[LevelFit], airspeed: float,
                metadata: dict[str, Any] | None = None) -> EnergyModel:
    """Fit a_TE against T_c from the per-level lines evaluated at ``airspeed``."""
    throttles = {round(f.throttle, 12) for f in levels}
    if len(throttles) < 2:
        raise ModelError("at least two distinct thrust levels are needed for the inverse fit")
    t = np.array([f.throttle for f in levels])
    a = np.array([f.predict(airspeed) for f in levels])
    # closed-form simple OLS
    tm, am = t.mean(), a.mean()
    k = float(((t - tm) * (a - am)).sum() / ((t - tm) ** 2).sum())
    b = float(am - k * tm)
    lo = min(f.v2_min for f in levels)
    hi = max(f.v2_max for f in levels)
    v2 = airspeed * airspeed
    return EnergyModel(
        k_t=k, b_t=b, airspeed=airspeed, levels=tuple(levels),
        extrapolated=not (lo <= v2 <= hi), metadata=dict(metadata or {}),
    )


def truth_model(params, airspeed: float = 20.0) -> EnergyModel:
    """Exact model of a ``VehicleParams`` airframe, built from two noiseless lines."""
    levels = tuple(
        LevelFit(throttle=tc, k_v=params.drag_slope, b_v=params.thrust_slope * tc,
                 n_samples=0, rms=0.0, v2_min=0.0, v2_max=math.inf, flags=("analytic",))
        for tc in (0.0, 1.0)
    )
    return inverse_fit(levels, airspeed, {"source": "analytic"})


def config_digest(obj: Any) -> str:
    """Stable sha256 over a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _level_to_dict(f: LevelFit) -> dict[str, Any]:
    d = asdict(f)
    d["flags"] = list(f.flags)
    if not math.isfinite(d["v2_max"]):
        d["v2_max"] = None
    return d


def model_to_dict(model: EnergyModel) -> dict[str, Any]:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": MODEL_KIND,
        "inverse_fit": {
            "k_t": model.k_t,
            "b_t": model.b_t,
            "airspeed": model.airspeed,
            "extrapolated": model.extrapolated,
        },
        "levels": [_level_to_dict(f) for f in model.levels],
        "calibration": model.metadata.get("calibration", {}),
        "provenance": model.metadata.get("provenance", {}),
    }


def model_from_dict(d: dict[str, Any]) -> EnergyModel:
    if d.get("kind") != MODEL_KIND:
        raise ModelError(f"not an energy model file (kind={d.get('kind')!r})")
    if d.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ModelError(f"unsupported schema_version {d.get('schema_version')!r}")
    try:
        inv = d["inverse_fit"]
        levels = tuple(
            LevelFit(
                throttle=float(x["throttle"]), k_v=float(x["k_v"]), b_v=float(x["b_v"]),
                n_samples=int(x["n_samples"]), rms=float(x["rms"]),
                v2_min=float(x["v2_min"]),
                v2_max=math.inf if x["v2_max"] is None else float(x["v2_max"]),
                flags=tuple(x.get("flags", ())),
            )
            for x in d["levels"]
        )
        meta = {"calibration": d.get("calibration", {}), "provenance": d.get("provenance", {})}
        return EnergyModel(
            k_t=float(inv["k_t"]), b_t=float(inv["b_t"]), airspeed=float(inv["airspeed"]),
            levels=levels, extrapolated=bool(inv.get("extrapolated", False)), metadata=meta,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model file: {exc}") from exc


def save_model(model: EnergyModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n")
    return path


def load_model(path: str | Path) -> EnergyModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    return model_from_dict(d)
