"""
Gain-tuning fixture: sweep the attitude-loop gains on a short step scenario
and rank candidates by worst-case settling time under an overshoot cap.
"""

from __future__ import annotations

import itertools
import math
import tempfile
from dataclasses import dataclass
from typing import Sequence

from .config import ScenarioConfig, parse_config
from .runner import ScenarioAbort, run_scenario

MAX_OVERSHOOT = 0.20


@dataclass(frozen=True)
class GainCandidate:
    k_phi: float
    k_theta: float
    settling_time: float        # worst over the probe steps, inf if any never settles
    overshoot: float            # worst over the probe steps
    status: str

    @property
    def admissible(self) -> bool:
        return self.status == "ok" and self.overshoot <= MAX_OVERSHOOT and math.isfinite(self.settling_time)


def probe_config(base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Lateral +-4 m/s^2 and vertical +-2 m/s^2 steps at 20 m/s with the analytic energy model."""
    data = base.model_dump(mode="json") if base is not None else {}
    data.update({
        "name": "gain_probe",
        "kind": "accel_steps",
        "energy_model": {"source": "truth", "airspeed": 20.0},
        "steps": {
            "duration": 20.0,
            "speed_setpoint": 20.0,
            "segments": [
                {"start": 1.0, "duration": 5.0, "accel": [4.0, 0.0]},
                {"start": 6.0, "duration": 5.0, "accel": [-4.0, 0.0]},
                # short vertical pair so the climb angle stays inside the envelope
                {"start": 12.0, "duration": 2.5, "accel": [0.0, -2.0]},
                {"start": 14.5, "duration": 2.5, "accel": [0.0, 2.0]},
            ],
        },
    })
    data.pop("pn", None)
    return parse_config(data)


def evaluate(cfg: ScenarioConfig, k_phi: float, k_theta: float) -> GainCandidate:
    trial = cfg.with_overrides(**{"gains.k_phi": k_phi, "gains.k_theta": k_theta,
                                  "output.plot_data": False})
    with tempfile.TemporaryDirectory() as tmp:
        try:
            summary = run_scenario(trial, tmp)
        except ScenarioAbort:
            return GainCandidate(k_phi, k_theta, math.inf, math.inf, "aborted")
    steps = summary.metrics["steps"]
    settle = [s["settling_time"] if s["settling_time"] is not None else math.inf for s in steps]
    return GainCandidate(k_phi, k_theta, max(settle), max(s["overshoot"] for s in steps),
                         summary.status)


def sweep(k_phi: Sequence[float] = (1.0, 1.5, 2.0, 3.0, 4.0),
          k_theta: Sequence[float] = (1.0, 1.5, 2.0, 3.0),
          base: ScenarioConfig | None = None) -> list[GainCandidate]:
    """Evaluate the grid; admissible candidates first, fastest settling first."""
    cfg = probe_config(base)
    out = [evaluate(cfg, a, b) for a, b in itertools.product(k_phi, k_theta)]
    return sorted(out, key=lambda c: (not c.admissible, c.settling_time, c.overshoot))
