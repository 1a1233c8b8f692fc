"""
Command-line entry point.

    fwaccel calibrate --config flight1 --out runs/f1
    fwaccel track     --config flight2.yaml
    fwaccel intercept --config flight3 --seed 7
    fwaccel replay    runs/f1
    fwaccel tune

Failures print one JSON object on stderr with an ``error`` category and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import metrics
from .config import ConfigError, ScenarioConfig, load_config, preset_names, schema_help
from .energy_model import ModelError
from .identification import IdentificationError
from .outer_loop import ControlError
from .runner import RunSummary, ScenarioAbort, run_batch, run_scenario
from .telemetry import SchemaError, detect_kind, read_log

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ENVELOPE = 4
EXIT_IDENTIFICATION = 5
EXIT_CONTROL = 6
EXIT_REPLAY = 7
EXIT_SCHEMA = 8

KIND_FOR = {"calibrate": "calibration", "track": "accel_steps", "intercept": "pn_intercept"}
REPLAY_RTOL = 1e-9


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int, **details):
        super().__init__(message)
        self.category = category
        self.code = code
        self.details = details


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors carry schema help."""

    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    run_opts = _Parser(add_help=False)
    run_opts.add_argument("--config", required=True,
                          help=f"YAML scenario file or preset name ({', '.join(preset_names())})")
    run_opts.add_argument("--seed", type=int, help="override the config seed")
    run_opts.add_argument("--out", help="output directory (default: from config)")

    p = _Parser(prog="fwaccel", description="Fixed-wing acceleration-command harness")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("calibrate", parents=[common, run_opts], help="thrust sweep and model fit")
    sub.add_parser("track", parents=[common, run_opts], help="acceleration step tracking")
    sub.add_parser("intercept", parents=[common, run_opts], help="PN intercept of a static target")

    rp = sub.add_parser("replay", parents=[common], help="recompute summary metrics from a run's CSV")
    rp.add_argument("run_dir", help="directory holding the log and summary.json")

    tp = sub.add_parser("tune", parents=[common], help="sweep attitude-loop gains on probe steps")
    tp.add_argument("--config", help="base scenario (vehicle, timing, noise) to tune on")
    tp.add_argument("--k-phi", type=float, nargs="+", default=[1.0, 1.5, 2.0, 3.0, 4.0])
    tp.add_argument("--k-theta", type=float, nargs="+", default=[1.5])
    tp.add_argument("--out", help="write the ranked table as JSON here")

    bp = sub.add_parser("batch", parents=[common], help="run several configs in parallel")
    bp.add_argument("configs", nargs="+")
    bp.add_argument("--out", required=True, help="parent directory; one subdirectory per config")
    bp.add_argument("--workers", type=int)
    return p


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    expected = KIND_FOR[args.command]
    if cfg.kind != expected:
        raise CliError("config", f"'{args.command}' needs a {expected} scenario, got {cfg.kind}",
                       EXIT_CONFIG)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _report(summary: RunSummary, out: Path, quiet: bool) -> None:
    if quiet:
        return
    m = summary.metrics
    print(f"{summary.kind} '{summary.name}': {summary.status} in {summary.wall_clock_s:.2f} s -> {out}")
    if summary.kind == "calibration":
        for f in m["level_fits"]:
            flag = f" [{','.join(f['flags'])}]" if f["flags"] else ""
            print(f"  T_c={f['throttle']:.2f}  k_v={f['k_v']:+.5f}  b_v={f['b_v']:+.4f}  "
                  f"rms={f['rms']:.4f}  n={f['n_samples']}{flag}")
        print(f"  inverse model at {m['query_airspeed']:.1f} m/s: "
              f"k_t={m['k_t']:.4f}  b_t={m['b_t']:+.4f}")
    elif summary.kind == "accel_steps":
        for s in m["steps"]:
            st = "never" if s["settling_time"] is None else f"{s['settling_time']:.2f} s"
            cy, cz = s["command"]
            print(f"  step {s['segment']} cmd=({cy:+.2f}, {cz:+.2f})  settle={st}  "
                  f"overshoot={100 * s['overshoot']:.1f}%")
        if m["first_thrust_saturation"] is not None:
            print(f"  thrust saturation first at t={m['first_thrust_saturation']:.2f} s")
    else:
        print(f"  miss distance {m['miss_distance']:.3f} m at t={m['time_of_closest_approach']:.2f} s")


def _close(a, b) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k]) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_close(x, y) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        return math.isclose(a, b, rel_tol=REPLAY_RTOL, abs_tol=1e-12)
    return a == b


def replay(run_dir: Path) -> dict:
    """Recompute metrics from the CSV and compare them with the stored summary."""
    summary_path = run_dir / "summary.json"
    if not summary_path.exists():
        raise CliError("replay", f"{summary_path} not found", EXIT_REPLAY)
    stored = json.loads(summary_path.read_text())
    log = run_dir / stored["files"]["log"]
    kind = detect_kind(log)
    cols = read_log(log, kind)
    stored_m = stored["metrics"]
    recomputed = metrics.summarize(kind, cols, stored_m.get("query_airspeed", 20.0),
                                   stored_m.get("robust", False))
    mismatched = [k for k, v in recomputed.items() if not _close(v, stored_m.get(k))]
    if mismatched:
        raise CliError("replay", "metrics differ from the stored summary", EXIT_REPLAY,
                       keys=mismatched)
    return {"run_dir": str(run_dir), "kind": kind, "checked": sorted(recomputed)}


def _dispatch(args) -> int:
    if args.command in KIND_FOR:
        cfg = _load(args)
        out = Path(args.out) if args.out else Path(cfg.output.dir)
        summary = run_scenario(cfg, out)
        _report(summary, out, args.quiet)
        return 0
    if args.command == "replay":
        res = replay(Path(args.run_dir))
        if not args.quiet:
            print(f"replay ok: {len(res['checked'])} metrics match ({res['kind']})")
        return 0
    if args.command == "tune":
        from .tuning import sweep
        base = load_config(args.config) if args.config else None
        table = sweep(args.k_phi, args.k_theta, base)
        if not args.quiet:
            print("  k_phi  k_theta  settle[s]  overshoot  admissible")
            for c in table:
                print(f"  {c.k_phi:5.2f}  {c.k_theta:7.2f}  {c.settling_time:9.2f}  "
                      f"{100 * c.overshoot:8.1f}%  {c.admissible}")
        if args.out:
            rows = [{"k_phi": c.k_phi, "k_theta": c.k_theta,
                     "settling_time": c.settling_time if math.isfinite(c.settling_time) else None,
                     "overshoot": c.overshoot if math.isfinite(c.overshoot) else None,
                     "status": c.status, "admissible": c.admissible} for c in table]
            Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
        return 0
    if args.command == "batch":
        cfgs = [load_config(c) for c in args.configs]
        dirs = [Path(args.out) / f"{i:02d}_{c.name}" for i, c in enumerate(cfgs)]
        for s, d in zip(run_batch(cfgs, dirs, args.workers), dirs):
            _report(s, d, args.quiet)
        return 0
    raise CliError("usage", f"unknown command {args.command}", EXIT_USAGE)


def _fail(err: CliError) -> int:
    payload = {"error": err.category, "message": str(err), **err.details}
    print(json.dumps(payload), file=sys.stderr)
    if err.category == "usage":
        print(schema_help(), file=sys.stderr)
    return err.code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("--schema", "schema"):
        print(schema_help())
        return 0
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
        return _dispatch(args)
    except CliError as err:
        return _fail(err)
    except ConfigError as err:
        return _fail(CliError("config", str(err), EXIT_CONFIG))
    except ScenarioAbort as err:
        return _fail(CliError("envelope", str(err), EXIT_ENVELOPE,
                              violations=err.summary.envelope_violations))
    except (IdentificationError, ModelError) as err:
        return _fail(CliError("identification", str(err), EXIT_IDENTIFICATION))
    except ControlError as err:
        return _fail(CliError("control", str(err), EXIT_CONTROL))
    except SchemaError as err:
        return _fail(CliError("schema", str(err), EXIT_SCHEMA))


if __name__ == "__main__":
    sys.exit(main())
