"""Command line: ``frontprop run|verify|dump-info``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from scipy import fft

from . import errors as E
from .checks import execute, run_checks
from .fpf1 import (read_fpf1, read_header, write_csv, write_extremal_csv, write_fpf1, write_front_csv,
                   write_trajectory)
from .geometry import extract_front
from .reports import CSV_HEADER
from .scenarios import load_scenario, load_suite

log = logging.getLogger("frontprop")

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_CHECK, EXIT_SOLVER = 0, 2, 3, 4, 5

_VALIDATION = (E.HypothesisViolation, E.H3Violation, E.DomainTooSmall, E.NoEta, E.EmptyShape,
               E.PaddingTooSmall, E.NonpositiveInput, E.GridMismatch)
_SOLVER = (E.NoConvergence, E.SolverDivergence, E.CflViolation, E.NegativeVelocity, E.StepFailure,
           E.NotMonotone, E.NoBand, E.EmptyLevelSet, E.TouchesBoundary)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, E.ScenarioError):
        return EXIT_PARSE
    if isinstance(exc, _VALIDATION):
        return EXIT_VALIDATION
    if isinstance(exc, _SOLVER):
        return EXIT_SOLVER
    return EXIT_CHECK


def output_root(flag: str | None, scenario_out: str | None = None) -> Path:
    """--out beats FRONTPROP_OUT, which beats the scenario's own ``out`` entry."""
    return Path(flag or os.environ.get("FRONTPROP_OUT") or scenario_out or "frontprop-out")


def _write_artifacts(run, reports, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    rows = [r for rep in reports for r in rep.csv_rows()]
    write_csv(out / "summary.csv", CSV_HEADER, rows)
    write_trajectory(out / "trajectory", run.traj)
    try:
        write_front_csv(out / "front_final.csv", extract_front(run.traj.final))
    except (E.EmptyLevelSet, E.TouchesBoundary) as exc:
        log.warning("final front not exported: %s", exc)
    mt = run.cache.get("minimal_time")
    if mt is not None:
        write_fpf1(out / "minimal_time.fpf1", mt.grid, mt.values, mt.T)
    exts = run.cache.get("extremals")
    for k, ext in enumerate(exts or []):
        write_extremal_csv(out / "extremals" / f"extremal_{k:02d}.csv", ext)
    lines = [rep.summary() for rep in reports]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_scenario(path, out_flag=None, seed: int = 0, echo=print):
    """Returns ``(exit_code, reports, scenario_name)``."""
    try:
        scenario = load_scenario(path)
    except E.FrontpropError as exc:
        echo(f"error: {exc}")
        return exit_code_for(exc), [], str(path)
    try:
        run = execute(scenario, seed)
        reports = run_checks(run)
    except E.FrontpropError as exc:
        code = exit_code_for(exc)
        echo(f"{scenario.name}: {type(exc).__name__}: {exc}")
        return code, [], scenario.name
    out = output_root(out_flag, scenario.out) / scenario.name
    _write_artifacts(run, reports, out)
    for rep in reports:
        echo(f"{scenario.name}: {rep.summary()}")
    ok = all(rep.passed for rep in reports)
    echo(f"{scenario.name}: {'all checks passed' if ok else 'check failures'}; artifacts in {out}")
    return (EXIT_OK if ok else EXIT_CHECK), reports, scenario.name


def cmd_run(args) -> int:
    code, _, _ = run_scenario(args.scenario, args.out, args.seed)
    return code


def cmd_verify(args) -> int:
    try:
        entries = load_suite(args.suite)
    except E.FrontpropError as exc:
        print(f"error: {exc}")
        return EXIT_PARSE
    root = output_root(args.out)
    rows, codes = [], []
    for entry in entries:
        code, reports, name = run_scenario(entry, str(root), args.seed)
        codes.append(code)
        if not reports and code:
            rows.append((name, "scenario", float("nan"), float("nan"), float("nan"), False))
        for rep in reports:
            w = rep.worst
            if w is None:
                rows.append((name, rep.check, float("nan"), float("nan"), float("nan"), rep.passed))
            else:
                rows.append((name, rep.check, w.lhs, w.rhs, w.slack, rep.passed))
    path = write_csv(root / "suite_summary.csv", ["scenario", "check", "lhs", "rhs", "slack", "pass"], rows)
    failing = [r for r in rows if not r[5]]
    for r in failing:
        print(f"FAILED {r[0]} {r[1]}")
    print(f"{len(rows) - len(failing)}/{len(rows)} checks passed; summary in {path}")
    return next((c for c in codes if c), EXIT_OK)


def cmd_dump_info(args) -> int:
    try:
        hdr = read_header(args.file)
        grid, values, t = read_fpf1(args.file)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}")
        return EXIT_PARSE
    finite = np.isfinite(values)
    for k, v in hdr.items():
        print(f"{k}: {v}")
    if finite.any():
        print(f"min: {float(values[finite].min())!r}")
        print(f"max: {float(values[finite].max())!r}")
    print(f"unreached cells: {int((~finite).sum())}")
    print(f"cells >= 0: {int((values[finite] >= 0).sum())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frontprop", description="Nonlocal front propagation laboratory.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default: $FRONTPROP_OUT or ./frontprop-out)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for FFTs (default: all cores)")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled hypothesis checks")

    r = sub.add_parser("run", help="solve one scenario and run its checks")
    r.add_argument("scenario", help="YAML scenario file or builtin:S1|S2|S3")
    common(r)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="run every scenario of a suite and aggregate")
    v.add_argument("suite", help="YAML file with a 'scenarios' list")
    common(v)
    v.set_defaults(func=cmd_verify)
    d = sub.add_parser("dump-info", help="print the header and statistics of an FPF1 file")
    d.add_argument("file")
    d.set_defaults(func=cmd_dump_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    workers = getattr(args, "threads", None) or os.cpu_count() or 1
    with fft.set_workers(max(1, int(workers))):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
