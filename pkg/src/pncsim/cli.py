"""Command-line interface.

Subcommands:
    catalog build|check    regenerate / validate the mapping catalog
    ser run                PNC SER sweep
    comp run               SER sweep with the joint-reception baseline
    dump constellation     labelled superimposed constellation (CSV + PNG)
    dump channels          per-pilot channel estimates (CSV + PNG)
    trace round            event trace of one protocol round
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import pnc_core, protocol, reports, sim_harness
from .sim_harness import SimConfig, SimulationError, UsageError, parse_config


def _sweep_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--ebno", metavar="LIST|START:STEP:STOP", help="Eb/N0 sweep (dB)")
    p.add_argument("--trials", type=int, help="fixed trials per point")
    p.add_argument("--error-events", type=int, dest="error_events",
                   help="early-stop error-event target per point")
    p.add_argument("--csi", choices=["perfect", "estimated"])
    p.add_argument("--channel", choices=["fixed", "rayleigh"])
    p.add_argument("--h1", metavar="RE+IMj;RE+IMj", help="AP1 gains, fixed mode")
    p.add_argument("--h2", metavar="RE+IMj;RE+IMj", help="AP2 gains, fixed mode")
    p.add_argument("--cfo-max", type=float, dest="cfo_max", metavar="HZ")
    p.add_argument("--delay-max", type=float, dest="delay_max", metavar="SAMPLES")
    p.add_argument("--sco", action="store_true", default=None)
    p.add_argument("--loss", type=float, metavar="P", help="per-copy erasure probability")
    p.add_argument("--replication", type=int, metavar="R")
    p.add_argument("--timeout", type=float, metavar="S")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="PATH")
    return p


def _config_from_args(args) -> SimConfig:
    overrides = {
        "ebno_db": args.ebno,
        "trials": args.trials,
        "target_error_events": args.error_events,
        "csi": args.csi,
        "channel": args.channel,
        "h_ap1": args.h1,
        "h_ap2": args.h2,
        "cfo_max_hz": args.cfo_max,
        "delay_max": args.delay_max,
        "sco": args.sco,
        "loss_prob": args.loss,
        "replication": args.replication,
        "timeout_s": args.timeout,
        "seed": args.seed,
        "out": args.out,
    }
    return parse_config(args.config, overrides)


def _default_out(args, fallback: str) -> str:
    return args.out if getattr(args, "out", None) else fallback


def _cmd_catalog(args) -> int:
    cat = pnc_core.offline_search()
    if args.action == "build":
        out = _default_out(args, "catalog.txt")
        pnc_core.export_catalog(cat, out)
        print(f"catalog written: {out} ({len(cat.sfs.values)} fade states, "
              f"{len(cat.entries)} mappings)")
        return 0
    # check: validate invariants, and compare to a file when given
    problems = []
    from . import gf2

    for (i, j), e in sorted(cat.entries.items()):
        if gf2.rank_mod2(e.combined) != 4:
            problems.append(f"entry ({i},{j}) not invertible")
        if not pnc_core.resolves_sfs(cat.sfs.values[i - 1], e.m1, c=cat.constellation):
            problems.append(f"entry ({i},{j}) AP1 half does not resolve its fade state")
    if args.path:
        loaded = pnc_core.load_catalog(args.path)
        for (i, j), e in sorted(cat.entries.items()):
            other = loaded.entries.get((i, j))
            if other is None:
                problems.append(f"file missing entry ({i},{j})")
            elif (other.dmin1, other.dmin2) != (e.dmin1, e.dmin2):
                problems.append(f"entry ({i},{j}) dmin differs from file")
        if tuple(loaded.sfs.values) != tuple(cat.sfs.values):
            problems.append("fade-state list differs from file")
    if problems:
        for p in problems:
            print(f"FAIL: {p}")
        return 1
    print("catalog check OK")
    return 0


def _cmd_sweep(args, with_baseline: bool) -> int:
    cfg = _config_from_args(args)
    report = (
        sim_harness.run_comp_baseline(cfg)
        if with_baseline
        else sim_harness.run_ser_sweep(cfg)
    )
    out = cfg.out or ("comp.csv" if with_baseline else "ser.csv")
    paths = reports.export_report(report, out)
    for p in report.points:
        base = "" if not with_baseline else f"  baseline={p.baseline_ser:.3e}"
        print(
            f"Eb/N0 {p.ebno_db:5.1f} dB: ser={p.ser:.3e} ({p.errors}/{p.symbols})"
            f"{base}  stall={p.stall_rate:.3f} fallback={p.fallback_rate:.3f}"
        )
    print(f"written: {', '.join(paths.values())}")
    return 0


def _cmd_dump(args) -> int:
    cat = pnc_core.offline_search()
    if args.what == "constellation":
        h = None
        if args.h1:
            pair = sim_harness._parse_complex_pair(args.h1, "h1")
            h = pair
        out = _default_out(args, "constellation.csv")
        paths = reports.dump_constellation(cat, args.sfs_i, args.sfs_j, args.ap, out, h=h)
    else:
        gains = (
            sim_harness._parse_complex_pair(args.h1 or "1+0j;0.6+0.3j", "h1"),
            sim_harness._parse_complex_pair(args.h2 or "1+0j;-0.4+0.8j", "h2"),
        )
        delays = ((args.delay1 or 0.0, args.delay1 or 0.0), (args.delay2 or 0.0, args.delay2 or 0.0))
        out = _default_out(args, "channels.csv")
        paths = reports.dump_channels(gains, out, ebno_db=args.ebno_point,
                                      delays=delays, seed=args.seed or 0)
    print(f"written: {', '.join(paths.values())}")
    return 0


def _cmd_trace(args) -> int:
    cat = pnc_core.offline_search()
    rng = np.random.default_rng(args.seed or 0)
    words = rng.integers(0, 16, 8)
    obs1 = protocol.ApObservation(sfs_index=args.sfs_i, words=words)
    obs2 = protocol.ApObservation(sfs_index=args.sfs_j, words=words)
    outcome = protocol.run_round(
        cat, obs1, obs2,
        loss_prob=args.loss or 0.0,
        replication=args.replication or 4,
        rng=rng,
        timeout_s=args.timeout or 1.0,
        collect_trace=True,
    )
    for line in outcome.trace:
        print(line)
    print(f"outcome: {outcome.status} mapping={outcome.mapping_index}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(outcome.trace) + "\n")
        print(f"written: {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pncsim",
        description="Uplink physical-layer network coding link simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sweep_parent = _sweep_parent()

    p_cat = sub.add_parser("catalog", help="build or check the mapping catalog")
    p_cat.add_argument("action", choices=["build", "check"])
    p_cat.add_argument("--path", help="catalog file to check against")
    p_cat.add_argument("--out", help="output path for build")

    p_ser = sub.add_parser("ser", help="PNC SER sweep", parents=[sweep_parent])
    p_ser.add_argument("action", choices=["run"])

    p_comp = sub.add_parser("comp", help="sweep with joint-reception baseline",
                            parents=[sweep_parent])
    p_comp.add_argument("action", choices=["run"])

    p_dump = sub.add_parser("dump", help="constellation or channel dumps")
    p_dump.add_argument("what", choices=["constellation", "channels"])
    p_dump.add_argument("--sfs-i", type=int, default=3, dest="sfs_i")
    p_dump.add_argument("--sfs-j", type=int, default=1, dest="sfs_j")
    p_dump.add_argument("--ap", type=int, choices=[1, 2], default=2)
    p_dump.add_argument("--h1", help="AP1 gains 'h11;h12' (channels) or h pair (constellation)")
    p_dump.add_argument("--h2", help="AP2 gains 'h21;h22'")
    p_dump.add_argument("--delay1", type=float, help="AP1 link delay, samples")
    p_dump.add_argument("--delay2", type=float, help="AP2 link delay, samples")
    p_dump.add_argument("--ebno-point", type=float, default=30.0, dest="ebno_point")
    p_dump.add_argument("--seed", type=int)
    p_dump.add_argument("--out")

    p_trace = sub.add_parser("trace", help="print one protocol round's events")
    p_trace.add_argument("action", choices=["round"])
    p_trace.add_argument("--sfs-i", type=int, default=3, dest="sfs_i")
    p_trace.add_argument("--sfs-j", type=int, default=1, dest="sfs_j")
    p_trace.add_argument("--loss", type=float)
    p_trace.add_argument("--replication", type=int)
    p_trace.add_argument("--timeout", type=float)
    p_trace.add_argument("--seed", type=int)
    p_trace.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "catalog":
            return _cmd_catalog(args)
        if args.command == "ser":
            return _cmd_sweep(args, with_baseline=False)
        if args.command == "comp":
            return _cmd_sweep(args, with_baseline=True)
        if args.command == "dump":
            return _cmd_dump(args)
        if args.command == "trace":
            return _cmd_trace(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
