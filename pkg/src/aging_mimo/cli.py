"""Command-line front end: sweeps, bound comparison and the validation suites.

Subcommands emit RFC-4180-style CSV (header row, '.' decimal, UTF-8, LF line
endings) preceded by '#'-prefixed metadata lines, plus a JSON manifest
sidecar. Output bytes are a pure function of (config, seed, tool version),
independent of the worker count.

Exit codes: 0 success, 1 validation/sandwich failure, 2 usage or config
error, 3 numerical runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from .analysis import ConvergenceError
from .montecarlo import TrialPlan, sweep
from .receivers import ReceiverKind
from .scenario import Scenario, load_scenario
from .validate import SUITES, run_suites

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULT_TRIALS = 5000


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        if np.isnan(x):
            return ""
        return f"{x:.10g}"
    return str(x)


def parse_grid(spec: str) -> list:
    """Parse 'start:stop:step' into an inclusive, strictly increasing grid."""
    try:
        start_s, stop_s, step_s = spec.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError:
        raise UsageError(f"bad grid {spec!r}; expected start:stop:step") from None
    if step <= 0 or stop < start:
        raise UsageError(f"bad grid {spec!r}; need step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def parse_receivers(spec: str) -> tuple:
    kinds = tuple(ReceiverKind.parse(tok) for tok in spec.split(",") if tok.strip())
    if not kinds:
        raise UsageError("empty receiver list")
    return kinds


def _scenario_snapshot(scn: Scenario) -> dict:
    cfg = dataclasses.asdict(scn.config)
    cfg["doppler"] = {k: v for k, v in cfg["doppler"].items() if v is not None}
    return {
        "config": cfg,
        "fading": dataclasses.asdict(scn.fading),
        "reference_cell": scn.reference_cell + 1,
        "snr_db": scn.snr_db,
        "pilot_snr_db": scn.pilot_snr_db,
    }


def build_manifest(command: str, scn: Scenario, args, grid, receivers) -> dict:
    body = {
        "tool": "aging-mimo",
        "version": __version__,
        "command": command,
        "seed": scn.config.seed,
        "trials": args.trials,
        "grid": grid,
        "receivers": [k.value for k in receivers],
        "scenario": _scenario_snapshot(scn),
    }
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]
    body["manifest_hash"] = digest
    return body


def write_csv(path: str, manifest: dict, meta: dict, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest: {manifest['manifest_hash']}\n")
        fh.write(f"# tool: aging-mimo {__version__}\n")
        for key, value in meta.items():
            fh.write(f"# {key}: {_fmt(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(path: str, manifest: dict) -> None:
    out = dict(manifest)
    out["created_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args) -> Scenario:
    if not args.config:
        raise UsageError("--config is required for this command")
    try:
        scn = load_scenario(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid config {args.config!r}: {exc}") from exc
    if args.seed is not None:
        scn = dataclasses.replace(scn, config=dataclasses.replace(scn.config, seed=args.seed))
    return scn


def cmd_sweep_snr(args) -> int:
    scn = _load(args)
    grid = parse_grid(args.grid or "-10:40:2")
    receivers = parse_receivers(args.receivers)
    plan = TrialPlan(n_trials=args.trials, receivers=receivers)
    manifest = build_manifest("sweep-snr", scn, args, grid, receivers)
    points = sweep(scn, "snr_db", grid, plan, workers=args.workers, with_bounds=True)
    header = ["snr_db", "receiver", "beta_cross", "mean_R", "stderr", "de_R",
              "lower_bound_R", "upper_bound_R", "flag"]
    rows = []
    for pt in points:
        flag = "degenerate_aging" if pt.degenerate_aging else ""
        for kind in receivers:
            res = pt.results[kind]
            is_olr = kind is ReceiverKind.OLR
            rows.append([
                pt.value, kind.value, scn.fading.beta_cross, res.sum_se, res.sum_se_stderr,
                pt.de_sum_se if is_olr else float("nan"),
                pt.lower_sum_se if is_olr else float("nan"),
                pt.upper_sum_se if is_olr else float("nan"),
                flag,
            ])
    out = args.out or "sweep_snr.csv"
    meta = {"overhead_factor": scn.config.overhead_factor, "axis": "snr_db"}
    write_csv(out, manifest, meta, header, rows)
    write_manifest(out + ".manifest.json", manifest)
    return EXIT_OK


def cmd_sweep_doppler(args) -> int:
    scn = _load(args)
    grid = parse_grid(args.grid or "0:0.45:0.01")
    receivers = parse_receivers(args.receivers)
    try:
        antennas = [int(tok) for tok in args.antennas.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad --antennas {args.antennas!r}") from None
    if not antennas:
        raise UsageError("empty --antennas list")
    manifest = build_manifest("sweep-doppler", scn, args, grid, receivers)
    manifest["antennas"] = antennas
    header = ["fD_Ts", "alpha", "receiver", "N", "mean_R", "stderr", "de_R", "flag"]
    rows = []
    for ni, n_ant in enumerate(antennas):
        scn_n = dataclasses.replace(scn, config=dataclasses.replace(scn.config, N=n_ant))
        plan = TrialPlan(n_trials=args.trials, receivers=receivers, point_key=(ni,))
        points = sweep(scn_n, "doppler", grid, plan, workers=args.workers)
        for pt in points:
            flag = "degenerate_aging" if pt.degenerate_aging else ""
            for kind in receivers:
                res = pt.results[kind]
                rows.append([
                    pt.value, pt.alpha, kind.value, n_ant, res.sum_se, res.sum_se_stderr,
                    pt.de_sum_se if kind is ReceiverKind.OLR else float("nan"),
                    flag,
                ])
    out = args.out or "sweep_doppler.csv"
    meta = {"overhead_factor": scn.config.overhead_factor, "axis": "doppler"}
    write_csv(out, manifest, meta, header, rows)
    write_manifest(out + ".manifest.json", manifest)
    return EXIT_OK


def cmd_bounds(args) -> int:
    scn = _load(args)
    grid = parse_grid(args.grid or "-10:40:5")
    # the bounds describe the optimal combiner only; the table tracks its
    # quadratic-form rate, so no physical-receiver loop is needed
    plan = TrialPlan(n_trials=args.trials, receivers=())
    manifest = build_manifest("bounds", scn, args, grid, (ReceiverKind.OLR,))
    points = sweep(scn, "snr_db", grid, plan, workers=args.workers,
                   with_bounds=True, with_mc_quadratic=True)
    header = ["snr_db", "mc_R", "mc_stderr", "lower_R", "upper_R", "de_R", "flag"]
    rows = []
    violations = []
    for pt in points:
        flag = "degenerate_aging" if pt.degenerate_aging else ""
        if pt.degenerate_aging:
            rows.append([pt.value, 0.0, 0.0, float("nan"), float("nan"), 0.0, flag])
            continue
        mc = pt.mc_quadratic
        lo, hi = pt.lower_sum_se, pt.upper_sum_se
        slack = 2.0 * mc.sum_se_stderr
        if not (lo <= mc.sum_se + slack and mc.sum_se <= hi + slack):
            violations.append(pt.value)
            flag = (flag + ";" if flag else "") + "sandwich_violation"
        rows.append([pt.value, mc.sum_se, mc.sum_se_stderr, lo, hi, pt.de_sum_se_quadratic, flag])
    out = args.out or "bounds.csv"
    meta = {"overhead_factor": scn.config.overhead_factor, "axis": "snr_db",
            "quantity": "optimal-combiner quadratic-form rate"}
    write_csv(out, manifest, meta, header, rows)
    write_manifest(out + ".manifest.json", manifest)
    if violations:
        print(f"sandwich violated at snr_db = {violations}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_validate(args) -> int:
    names = None
    if args.suite:
        names = [tok for spec in args.suite for tok in spec.split(",") if tok.strip()]
    try:
        results = run_suites(names)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aging-mimo",
        description="Multi-cell MIMO uplink simulator under pilot contamination and channel aging",
    )
    parser.add_argument("--version", action="version", version=f"aging-mimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario TOML file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="Monte-Carlo trials per grid point")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--workers", type=int, default=1, help="worker processes for the trial loop")
        p.add_argument("--receivers", default="olr,mmse,mrc,zf", help="comma list of receivers")
        p.add_argument("--grid", default=None, help="sweep grid start:stop:step")

    p_snr = sub.add_parser("sweep-snr", help="sum spectral efficiency versus SNR")
    common(p_snr)
    p_snr.set_defaults(func=cmd_sweep_snr)

    p_dop = sub.add_parser("sweep-doppler", help="sum spectral efficiency versus normalized Doppler")
    common(p_dop)
    p_dop.add_argument("--antennas", default="50,100", help="comma list of antenna counts")
    p_dop.set_defaults(func=cmd_sweep_doppler)

    p_bounds = sub.add_parser("bounds", help="closed-form bounds and deterministic equivalent vs simulation")
    common(p_bounds)
    p_bounds.set_defaults(func=cmd_bounds)

    p_val = sub.add_parser("validate", help="run the oracle suites")
    p_val.add_argument("--suite", action="append", default=None,
                       help=f"restrict to named suites (available: {', '.join(SUITES)})")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass codes through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
