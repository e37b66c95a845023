"""Command-line entry point ``nsl``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from nslab import harness, presets
from nslab.exceptions import ConfigError, NslabError
from nslab.kernels import KernelSpec
from nslab.riccati import RiccatiProblem, closed_form_blowup_time, riccati_solve
from nslab.thresholds import threshold_report

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}

EXIT_USAGE = 2


def _setup_logging() -> None:
    level = os.environ.get("NSL_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args, kind: str) -> dict:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = harness.load_config(args.config)
    elif args.preset:
        cfg = presets.get_sweep(args.preset) if kind == "sweep" else presets.get_run(args.preset)
    else:
        raise ConfigError("--config or --preset required")
    if args.seed is not None:
        if kind == "sweep":
            cfg.setdefault("fixed", {})["seed"] = args.seed
        else:
            cfg["seed"] = args.seed
    return cfg


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=harness._json_default))


def cmd_run(args) -> int:
    result = harness.run_single(_load(args, "run"), args.out)
    ev = result.event
    status = {harness.EXIT_CLEAN: "clean", harness.EXIT_BLOWUP: "blow-up detected",
              harness.EXIT_NUMERIC: "numeric failure"}[result.exit_code]
    line = f"{status}: t_end={result.t_end:.6g} peak_slope={ev.peak_slope:.6g}"
    if ev.detected:
        line += f" t_blowup={ev.t_blowup:.6g} x={ev.x_location:.6g}"
    print(line)
    return result.exit_code


def cmd_sweep(args) -> int:
    result = harness.run_sweep(_load(args, "sweep"), args.out, args.jobs)
    rep = result.report()
    print(f"{rep['n_points']} points, soundness={rep['soundness']:.3f}, "
          f"failed={len(rep['failed_points'])}")
    _print(rep)
    return 0 if rep["soundness"] == 1.0 and not rep["failed_points"] else 1


def cmd_refine(args) -> int:
    rep = harness.refinement_study(_load(args, "run"), args.levels, args.t_sample, args.jobs or 1)
    print(f"{rep.verdict}: ratios={[round(r, 4) for r in rep.ratios]}")
    _print(rep.to_dict())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        harness._dump(harness.Path(args.out) / "report.json", rep.to_dict())
    return 0


def cmd_threshold(args) -> int:
    kernel = None
    if args.kernel_table:
        kernel = KernelSpec.from_table_file(args.kernel_table)
    rep = threshold_report(args.model, args.gamma, args.inf_slope, args.sup_slope,
                           args.resolution, kernel=kernel)
    if rep.above is None:
        verdict = "threshold"
    else:
        verdict = "above (blow-up guaranteed)" if rep.above else "below (no guarantee)"
    print(f"{args.model}: lambda={rep.threshold:.9g} {verdict}")
    _print(rep.to_dict())
    return 0


def cmd_riccati(args) -> int:
    p = RiccatiProblem(args.a, args.b1, args.b2, args.A0, args.t_max)
    sol = riccati_solve(p)
    out = {"blew_up": sol.blew_up, "t_blowup": sol.t_blowup, "A_end": float(sol.A[-1]),
           "t_end": float(sol.t[-1])}
    if args.A0 > args.b2 > args.b1:
        out["t_blowup_closed_form"] = closed_form_blowup_time(args.a, args.b1, args.b2, args.A0)
    print("blow-up" if sol.blew_up else "bounded")
    _print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML config file")
    common.add_argument("--preset", help="shipped configuration name")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="nsl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="single simulation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="threshold-boundary sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("refine", parents=[common], help="grid refinement study")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--t-sample", type=float, default=None)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("threshold", parents=[common], help="blow-up threshold")
    p.add_argument("--model", choices=["constant", "linear", "general"], default="constant")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--inf-slope", type=float, default=0.0)
    p.add_argument("--sup-slope", type=float, default=None)
    p.add_argument("--resolution", type=int, default=401)
    p.add_argument("--kernel-table", help="two-column kernel table for --model general")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("riccati", parents=[common], help="constant-coefficient Riccati problem")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b1", type=float, required=True)
    p.add_argument("--b2", type=float, required=True)
    p.add_argument("--A0", type=float, required=True)
    p.add_argument("--t-max", type=float, default=10.0)
    p.set_defaults(func=cmd_riccati)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
