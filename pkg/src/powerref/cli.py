"""Command line entry point: ``powerref <command>``.

Exit codes: 0 on success, 2 when a constraint check was requested and found
a violation, 3 when calibration fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .prc import OMEGA_HARD_LIMIT, constant_table
from .signals import ConfigError
from .turbine import CalibrationError

EXIT_OK, EXIT_VIOLATION, EXIT_CALIBRATION = 0, 2, 3
log = logging.getLogger("powerref")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="seed (run) or seed base (campaign)")
    p.add_argument("--dt", type=float, help="simulation step in s")
    p.add_argument("--duration", type=float, help="record length in s")


def _violations(summary: harness.CampaignSummary, check) -> list:
    labels = check or [l for l in summary.labels if l.startswith("PR")]
    return [c for l in labels for c in summary.violations(l)]


def cmd_calibrate(args) -> int:
    from .setpoint import calibrate_fpc
    from .turbine import calibrate_surrogate, rated_wind_speed, steady_state
    sur = calibrate_surrogate()
    p = sur.params
    fpc = calibrate_fpc(sur)
    u_rated = rated_wind_speed(p)
    sp = steady_state(18.0, p, sur.k_opt)
    print(f"cp_max          {p.aero_array[0]:.4f}")
    print(f"k_opt           {sur.k_opt:.5f} N m/rpm^2")
    print(f"rated wind      {u_rated:.3f} m/s")
    print(f"rated power     {sp.power:.1f} kW")
    print(f"omega_g @18 m/s {sp.omega_g:.1f} rpm, pitch {sp.theta:.2f} deg")
    print("f_PC            " + " ".join(f"{r:.3f}->{t:.1f}" for r, t in
                                        zip(fpc.breakpoints, fpc.values)))
    if not (abs(u_rated - 11.4) <= 0.3 and abs(sp.power / p.rated_power - 1) <= 0.05):
        print("calibration anchors missed", file=sys.stderr)
        return EXIT_CALIBRATION
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = harness.CampaignConfig(dlc="ETM", seeds=args.seeds, workers=args.workers,
                                 seed_base=args.seed or 0,
                                 duration=args.duration or 600.0, dt=args.dt or 0.01)
    start = None if args.start is None else constant_table(args.start)
    res = harness.tune_rmax(cfg, start=start, margin=args.margin, max_iter=args.max_iter)
    print(res.report(), end="")
    if args.out:
        tables = dict(harness.shipped_tables())
        tables["PR-1.150"] = res.table
        harness.write_tables(tables, args.out)
        print(f"tables written to {args.out}")
    return EXIT_OK if res.feasible else EXIT_VIOLATION


def cmd_run(args) -> int:
    from .wind import load_wind
    dt = args.dt or 0.01
    wind = load_wind(args.wind, dt, args.duration or 600.0, args.seed or 0)
    if abs(wind.dt - dt) > 1e-12:
        dt = wind.dt
    res = harness.run_single(harness.preset(args.preset), wind,
                             harness.SimConfig(dt=dt), noise_seed=args.seed)
    for k, v in res.summary.items():
        print(f"{k:<16}{v:12.3f}")
    if args.out:
        res.to_csv(args.out)
        print(f"time series written to {args.out}")
    if args.fail_on_violation and res.summary["max_omega_g"] > OMEGA_HARD_LIMIT:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_campaign(args) -> int:
    cfg, presets, sim = harness.load_campaign_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed_base"] = args.seed
    if args.dt is not None:
        over["dt"] = args.dt
    if args.duration is not None:
        over["duration"] = args.duration
    if args.out:
        over["out_dir"] = args.out
    if over:
        cfg = replace(cfg, **over)
        sim = replace(sim, dt=cfg.dt)
    summary = harness.run_campaign(cfg, presets, sim)
    print(harness.format_table(summary.table(), cfg), end="")
    for c in summary.failures():
        print(f"FAILED {c.preset} bin {c.bin} seed {c.seed}: {c.error}", file=sys.stderr)
    if cfg.out_dir:
        print(f"outputs written to {cfg.out_dir}")
    if args.fail_on_violation and _violations(summary, args.check):
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_report(args) -> int:
    summary = harness.load_campaign_output(args.dir)
    print(harness.format_table(summary.table(), summary.config), end="")
    bad = _violations(summary, args.check)
    for c in bad:
        print(f"VIOLATION {c.preset} bin {c.bin} seed {c.seed}: "
              f"max omega_g {c.summary['max_omega_g']:.1f} rpm")
    if args.fail_on_violation and bad:
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="powerref", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="calibrate the surrogate and f_PC, print anchors")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("tune-rmax", help="tune the PR-1.150 R^max table on the ETM set")
    p.add_argument("--seeds", type=int, default=6)
    p.add_argument("--margin", type=float, default=10.0, help="rpm")
    p.add_argument("--max-iter", type=int, default=12)
    p.add_argument("--start", type=float,
                   help="start from a constant R^max instead of the shipped table")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="YAML file for the tuned tables")
    _add_overrides(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("run", help="simulate one preset on one wind record")
    p.add_argument("--preset", required=True, choices=harness.PRESET_NAMES)
    p.add_argument("--wind", required=True,
                   help="CSV file or const:U, ntm:U, etm:U, lullgust:BASE,DEPTH,HOLD,RISE")
    p.add_argument("--out", help="per-run CSV time series")
    p.add_argument("--fail-on-violation", action="store_true")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    for name, func, arg, helptext in (
            ("campaign", cmd_campaign, "--config", "run a seeded campaign from a YAML file"),
            ("report", cmd_report, "--dir", "summarise a campaign output directory")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument(arg, required=True)
        p.add_argument("--fail-on-violation", action="store_true",
                       help=f"exit 2 when a checked preset exceeds {OMEGA_HARD_LIMIT:g} rpm")
        p.add_argument("--check", action="append",
                       help="preset label to check (default: labels starting with PR)")
        if name == "campaign":
            p.add_argument("--out", help="output directory (overrides the config)")
            _add_overrides(p)
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
