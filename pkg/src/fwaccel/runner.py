"""
Scenario runner: calibration sweeps, acceleration step tracking, and PN
intercepts against the simulated airframe.

Every run writes a per-tick CSV log, a JSON summary whose metrics are
recomputable from that log alone, and (when identification happens) a model
file.
"""

from __future__ import annotations

import json
import logging
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import metrics
from .config import ScenarioConfig
from .energy_model import EnergyModel, load_model, save_model, truth_model
from .frames import EulerAngles, rot_inertial_to_body, wrap_angle
from .guidance import FiniteDifferenceLos, los_kinematics, path_axes, pn_accel, speed_loop_accel
from .identification import CalibrationAbort, CalibrationResult, run_calibration
from .outer_loop import AccelCommand, ControlOutput, OuterLoopController
from .telemetry import emit_plot_data, read_log, write_log
from .vehicle import (EnvelopeError, FixedWingSim, SensorNoise, SensorSnapshot, VehicleState)

logger = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = 1
ALPHA_LIMIT = math.radians(15.0)


class ScenarioAbort(RuntimeError):
    """The simulated vehicle left its envelope; partial logs were written."""

    def __init__(self, message: str, summary: "RunSummary"):
        super().__init__(message)
        self.summary = summary


@dataclass
class RunSummary:
    name: str
    kind: str
    status: str                                   # ok | aborted | timeout
    metrics: dict[str, Any]
    envelope_violations: list[dict[str, Any]] = field(default_factory=list)
    wall_clock_s: float = 0.0
    seed: int | None = None
    config_digest: str = ""
    files: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SUMMARY_SCHEMA_VERSION, **asdict(self)}

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path

    def flat(self) -> dict[str, Any]:
        """Dotted-key view of the summary, one scalar per key."""
        out: dict[str, Any] = {}

        def walk(prefix: str, node: Any) -> None:
            if isinstance(node, dict):
                for k in sorted(node):
                    walk(f"{prefix}.{k}" if prefix else str(k), node[k])
            elif isinstance(node, (list, tuple)) and any(isinstance(x, (dict, list)) for x in node):
                for i, x in enumerate(node):
                    walk(f"{prefix}.{i}", x)
            else:
                out[prefix] = node
        walk("", self.to_dict())
        return out

    def write_text(self, path: Path) -> Path:
        lines = [f"{k} = {json.dumps(v)}" for k, v in self.flat().items()]
        path.write_text("\n".join(lines) + "\n")
        return path


def build_sim(cfg: ScenarioConfig) -> FixedWingSim:
    return FixedWingSim(cfg.vehicle.build())


def initial_state(cfg: ScenarioConfig, sim: FixedWingSim) -> VehicleState:
    """Trimmed start, or a non-equilibrium one when the config fixes the throttle."""
    ini = cfg.initial
    heading, pitch = math.radians(ini.heading_deg), math.radians(ini.pitch_deg)
    if ini.thrust_throttle is None:
        return sim.trim(ini.speed, heading, ini.altitude, (ini.north, ini.east), pitch)
    return VehicleState(
        position=np.array([ini.north, ini.east, -ini.altitude]),
        speed=ini.speed,
        euler=EulerAngles(0.0, pitch, wrap_angle(heading)),
        rates=np.zeros(3),
        thrust=ini.thrust_throttle * sim.params.max_thrust,
    )


def state_row(sim: FixedWingSim, s: VehicleState) -> dict[str, float]:
    v = s.velocity
    return {
        "time": s.time, "pos_n": s.position[0], "pos_e": s.position[1], "pos_d": s.position[2],
        "vel_n": v[0], "vel_e": v[1], "vel_d": v[2],
        "roll": s.euler.roll, "pitch": s.euler.pitch, "yaw": s.euler.yaw,
        "p": s.rates[0], "q": s.rates[1], "r": s.rates[2],
        "airspeed": s.airspeed, "speed": s.speed, "thrust_force": s.thrust,
        "alpha": sim.alpha(s),
    }


def control_row(sim: FixedWingSim, s: VehicleState, snap: SensorSnapshot, a_cmd: AccelCommand,
                out: ControlOutput, speed_setpoint: float, mode: str) -> dict[str, Any]:
    g_vec = np.array([0.0, 0.0, sim.params.g])
    R = rot_inertial_to_body(snap.euler)
    acc_meas_b = snap.specific_force + R @ g_vec
    acc_meas_i = R.T @ acc_meas_b
    v = snap.velocity
    e_v, e_y, e_z = path_axes(v)
    acc_cmd_i = a_cmd.normal.vec + a_cmd.tangential * e_v
    acc_cmd_b = R @ acc_cmd_i
    raw, cmd = out.raw, out.command
    qb = out.q_bounds or (math.nan, math.nan)
    return {
        "p_c_raw": raw.p, "q_c_raw": raw.q, "r_c_raw": raw.r, "thrust_c_raw": raw.thrust,
        "p_c": cmd.p, "q_c": cmd.q, "r_c": cmd.r, "thrust_c": cmd.thrust, "phi_c": out.phi_c,
        "q_min": qb[0], "q_max": qb[1],
        "acc_cmd_bx": acc_cmd_b[0], "acc_cmd_by": acc_cmd_b[1], "acc_cmd_bz": acc_cmd_b[2],
        "acc_meas_bx": acc_meas_b[0], "acc_meas_by": acc_meas_b[1], "acc_meas_bz": acc_meas_b[2],
        "an_cmd_y": float(a_cmd.normal.vec @ e_y), "an_cmd_z": float(a_cmd.normal.vec @ e_z),
        "an_meas_y": float(acc_meas_i @ e_y), "an_meas_z": float(acc_meas_i @ e_z),
        "a_t_cmd": a_cmd.tangential, "a_te_c": out.a_te_c,
        "a_te_meas": float((acc_meas_i - g_vec) @ e_v),
        "speed_setpoint": speed_setpoint, "priority": mode,
        "thrust_saturated": not 0.0 <= raw.thrust <= 1.0,
        "q_clamped": raw.q != cmd.q,
        "degenerate_lift": out.degenerate_lift,
        "alpha_exceeded": abs(sim.alpha(s)) > ALPHA_LIMIT,
    }


def resolve_energy_model(cfg: ScenarioConfig, sim: FixedWingSim,
                         out_dir: Path | None = None) -> tuple[EnergyModel, CalibrationResult | None]:
    src = cfg.energy_model
    if src.source == "truth":
        return truth_model(sim.params, src.airspeed), None
    if src.source == "file":
        return load_model(src.path), None
    result = calibrate(cfg, sim)
    model = result.model(src.airspeed, _model_metadata(cfg))
    if out_dir is not None:
        save_model(model, out_dir / "model.json")
    return model, result


def _model_metadata(cfg: ScenarioConfig) -> dict[str, Any]:
    cal = cfg.calibration
    return {
        "calibration": {
            "levels": list(cal.levels), "dwell": cal.dwell, "order": cal.order,
            "transient_trim": cal.transient_trim, "pass_pitch_deg": list(cal.pass_pitch_deg),
            "cutoff_hz": cal.cutoff_hz, "robust": cal.robust, "seed": cfg.seed,
            "noise": cfg.noise.model_dump(),
        },
        "provenance": {"config_sha256": cfg.digest(), "scenario": cfg.name},
    }


def calibrate(cfg: ScenarioConfig, sim: FixedWingSim) -> CalibrationResult:
    cal = cfg.calibration
    return run_calibration(
        cal.build(), sim, cfg.gains.build(), initial=initial_state(cfg, sim),
        noise=cfg.noise.build(), seed=cfg.seed, control_rate=cfg.timing.control_rate,
        sim_dt=cfg.timing.sim_dt, cutoff=cal.cutoff_hz, robust=cal.robust,
    )


def _violation(exc: EnvelopeError, **extra) -> dict[str, Any]:
    s = exc.state
    return {
        "message": str(exc), "time": s.time, **extra,
        "state": {"position": s.position.tolist(), "speed": s.speed,
                  "euler": [s.euler.roll, s.euler.pitch, s.euler.yaw],
                  "rates": s.rates.tolist(), "thrust": s.thrust},
    }


class _Run:
    """Shared bookkeeping for one scenario execution."""

    def __init__(self, cfg: ScenarioConfig, out_dir: Path | str | None = None):
        self.cfg = cfg
        self.out = Path(out_dir if out_dir is not None else cfg.output.dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.sim = build_sim(cfg)
        self.rows: list[dict[str, Any]] = []
        self.t_start = _time.perf_counter()
        self.log_path = self.out / f"{cfg.kind}.csv"

    def finish(self, status: str, violations: list[dict[str, Any]],
               extra: dict[str, Any] | None = None) -> RunSummary:
        cfg = self.cfg
        write_log(self.log_path, cfg.kind, self.rows)
        files = {"log": self.log_path.name}
        m: dict[str, Any] = {}
        if self.rows and status != "aborted":
            cols = read_log(self.log_path, cfg.kind)
            m = metrics.summarize(cfg.kind, cols, cfg.calibration.query_airspeed,
                                  cfg.calibration.robust)
            if cfg.output.plot_data:
                files["plot_data"] = emit_plot_data(self.log_path).name
        if extra:
            m.update(extra)
        if (self.out / "model.json").exists():
            files["model"] = "model.json"
        summary = RunSummary(
            name=cfg.name, kind=cfg.kind, status=status, metrics=m,
            envelope_violations=violations,
            wall_clock_s=_time.perf_counter() - self.t_start,
            seed=cfg.seed, config_digest=cfg.digest(), files=files,
        )
        summary.files["summary"] = "summary.json"
        summary.files["summary_text"] = "summary.txt"
        summary.write(self.out / "summary.json")
        summary.write_text(self.out / "summary.txt")
        return summary


def _run_calibration(run: _Run) -> RunSummary:
    cfg = run.cfg
    try:
        result = calibrate(cfg, run.sim)
    except CalibrationAbort as exc:
        summary = run.finish("aborted", [_violation(exc.__cause__, throttle=exc.throttle)])
        raise ScenarioAbort(str(exc), summary) from exc
    model = result.model(cfg.calibration.query_airspeed, _model_metadata(cfg))
    save_model(model, run.out / "model.json")
    log = result.log
    names = ("throttle", "theta0", "p_c", "q_c", "speed_meas", "vz_meas", "airspeed_meas",
             "v2_filt", "a_te_filt", "a_te_true", "kept")
    for i, s in enumerate(result.states):
        row = state_row(run.sim, s)
        row.update({k: float(log[k][i]) for k in names})
        row["kept"] = bool(log["kept"][i] > 0.5)
        run.rows.append(row)
    return run.finish("ok", [], {"extrapolated": model.extrapolated})


def _closed_loop(run: _Run, model: EnergyModel,
                 command: Callable[[float, SensorSnapshot], tuple[AccelCommand, float, dict]],
                 duration: float,
                 after_substep: Callable[[VehicleState, VehicleState], bool] | None = None,
                 ) -> tuple[str, list[dict[str, Any]]]:
    """Fly ``command`` through the outer loop; returns (status, violations).

    ``command(t, snapshot)`` gives the acceleration command, the speed
    setpoint and extra log columns. ``after_substep(prev, new)`` may return
    True to stop the run early.
    """
    cfg = run.cfg
    sim = run.sim
    ctl = OuterLoopController(model, cfg.gains.build(), cfg.outer_loop.mode, cfg.outer_loop.build())
    sensors = SensorNoise(cfg.noise.build(), cfg.seed)
    dt = 1.0 / cfg.timing.control_rate
    substeps = cfg.timing.substeps
    sim_dt = dt / substeps
    state = initial_state(cfg, sim)
    mode = cfg.outer_loop.priority
    n = int(math.floor(duration * cfg.timing.control_rate + 1e-9))
    for k in range(n):
        snap = sim.measure(state, sensors)
        a_cmd, v_sp, extra = command(k * dt, snap)
        g = np.array([0.0, 0.0, sim.params.g])
        a_meas = rot_inertial_to_body(snap.euler).T @ snap.specific_force + g
        out = ctl.update(a_cmd, snap, dt, measured_accel=a_meas)
        ctrl = control_row(sim, state, snap, a_cmd, out, v_sp, mode)
        row = state_row(sim, state)
        row.update(ctrl)
        row.update(extra)
        row["time"] = k * dt
        run.rows.append(row)
        try:
            for _ in range(substeps):
                prev = state
                state = sim.step(state, out.command, sim_dt)
                if after_substep is not None and after_substep(prev, state):
                    _terminal_rows(run, prev, state, row)
                    return "ok", []
        except EnvelopeError as exc:
            return "aborted", [_violation(exc)]
    return "timeout" if after_substep is not None else "ok", []


def _terminal_rows(run: _Run, prev: VehicleState, state: VehicleState, last: dict[str, Any]):
    for s in (prev, state):
        if abs(s.time - last["time"]) < 1e-12:
            continue
        row = dict(last)
        row.update(state_row(run.sim, s))
        row.update(_pn_geometry(run, s))
        row["terminal"] = True
        run.rows.append(row)


def _pn_geometry(run: _Run, s: VehicleState) -> dict[str, Any]:
    tgt = run.cfg.pn.target_spec(run.cfg.initial)
    rel = tgt.position - s.position
    los = los_kinematics(s, tgt)
    return {"range": los.range, "closing_speed": los.closing_speed,
            "los_rate": float(np.linalg.norm(los.omega)),
            "rel_n": rel[0], "rel_e": rel[1], "rel_d": rel[2], "terminal": False}


def _run_steps(run: _Run) -> RunSummary:
    cfg = run.cfg
    steps = cfg.steps
    model, _ = resolve_energy_model(cfg, run.sim, run.out)
    k_v = cfg.gains.k_v
    segs = steps.segments

    def command(t: float, snap: SensorSnapshot):
        idx = -1
        for i, s in enumerate(segs):
            if s.start - 1e-9 <= t < s.start + s.duration - 1e-9:
                idx = i
                break
        acc = segs[idx].accel if idx >= 0 else (0.0, 0.0)
        v_sp = segs[idx].speed_setpoint if idx >= 0 and segs[idx].speed_setpoint else steps.speed_setpoint
        _, e_y, e_z = path_axes(snap.velocity)
        a_n = acc[0] * e_y + acc[1] * e_z
        a_t = k_v * (v_sp - snap.speed)
        return AccelCommand.projected(a_n, a_t, snap.velocity), v_sp, {"segment": idx}

    status, violations = _closed_loop(run, model, command, steps.duration)
    summary = run.finish(status, violations)
    if status == "aborted":
        raise ScenarioAbort(violations[0]["message"], summary)
    return summary


def _run_pn(run: _Run) -> RunSummary:
    cfg = run.cfg
    model, _ = resolve_energy_model(cfg, run.sim, run.out)
    params = cfg.pn_params()
    target = cfg.pn.target_spec(cfg.initial)
    fd = FiniteDifferenceLos() if cfg.pn.los_rate == "finite_difference" else None
    closing_seen = {"flag": False}

    def command(t: float, snap: SensorSnapshot):
        los = fd(snap, target, t) if fd is not None else los_kinematics(snap, target)
        a_n = pn_accel(los, params, snap.velocity)
        a_t = speed_loop_accel(snap.speed, params)
        return AccelCommand(a_n, a_t), params.speed_setpoint, {}

    def after_substep(prev: VehicleState, new: VehicleState) -> bool:
        r0 = np.linalg.norm(target.position - prev.position)
        r1 = np.linalg.norm(target.position - new.position)
        if r1 < r0:
            closing_seen["flag"] = True
            return False
        return closing_seen["flag"]

    status, violations = _closed_loop(run, model, command, cfg.pn.max_time, after_substep)
    # true geometry for every logged row (terminal rows already carry it)
    for row in run.rows:
        if "range" not in row:
            s_pos = np.array([row["pos_n"], row["pos_e"], row["pos_d"]])
            vel = np.array([row["vel_n"], row["vel_e"], row["vel_d"]])
            rel = target.position - s_pos
            rng = float(np.linalg.norm(rel))
            omega = np.cross(rel, -vel) / rng**2
            row.update({"range": rng, "closing_speed": float(rel @ vel) / rng,
                        "los_rate": float(np.linalg.norm(omega)),
                        "rel_n": rel[0], "rel_e": rel[1], "rel_d": rel[2], "terminal": False})
    extra = {}
    if status != "aborted":
        miss = metrics.miss_distance({k: np.array([r[k] for r in run.rows])
                                      for k in ("rel_n", "rel_e", "rel_d")})
        extra = {"intercepted": bool(miss <= params.intercept_radius)}
    summary = run.finish(status, violations, extra)
    if status == "aborted":
        raise ScenarioAbort(violations[0]["message"], summary)
    return summary


def run_scenario(cfg: ScenarioConfig, out_dir: Path | str | None = None) -> RunSummary:
    """Execute one scenario and write its log, summary and model files."""
    run = _Run(cfg, out_dir)
    logger.info("running %s (%s) -> %s", cfg.name, cfg.kind, run.out)
    if cfg.kind == "calibration":
        return _run_calibration(run)
    if cfg.kind == "accel_steps":
        return _run_steps(run)
    return _run_pn(run)


def _run_one(args: tuple[ScenarioConfig, str]) -> RunSummary:
    cfg, out = args
    return run_scenario(cfg, out)


def run_batch(configs: Sequence[ScenarioConfig], out_dirs: Sequence[str | Path],
              workers: int | None = None) -> list[RunSummary]:
    """Run independent scenarios in worker processes, each in its own directory."""
    dirs = [str(Path(d).resolve()) for d in out_dirs]
    if len(set(dirs)) != len(dirs):
        raise ValueError("batch runs need distinct output directories")
    if workers == 1:
        return [run_scenario(c, d) for c, d in zip(configs, dirs)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, zip(configs, dirs)))
