"""Command line entry points.

Subcommands: derive-constants, check-symbol, sweep, report. Exit codes:
0 success, 2 assumption-check failure, 3 contraction constant too large,
4 no convergence, 5 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrology, models, runner, series, symbol


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hadalab")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker processes for per-epsilon rows")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None,
                    help="seed recorded for random property-test corpora")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("derive-constants",
                       help="run the constant sweeps and write the JSON file")
    p.add_argument("--k-max", type=int, default=20_000)
    p.add_argument("--n-max", type=int, default=2_000)
    p.add_argument("--file", default="constants.json")

    p = sub.add_parser("check-symbol",
                       help="run the assumption checkers on a model")
    p.add_argument("model")

    p = sub.add_parser("sweep", help="run the epsilon sweep from a config")
    p.add_argument("config")
    p.add_argument("--no-resume", action="store_true")

    p = sub.add_parser("report", help="summarize a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--gamma0", type=float, default=None)
    return ap


def cmd_derive_constants(args) -> int:
    consts = series.derive_constants(args.k_max, args.n_max)
    path = Path(args.out) / args.file
    path.parent.mkdir(parents=True, exist_ok=True)
    series.save_constants(consts, path)
    print(f"c0 = {consts.c0!r}")
    print(f"c1 = {consts.c1!r}")
    print(f"written {path}")
    return 0


def cmd_check_symbol(args) -> int:
    try:
        fam = models.get_model(args.model)
    except (KeyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 5
    try:
        spec = symbol.classify(fam)
    except symbol.NotElliptic as exc:
        print(f"NOT_ELLIPTIC: {exc}")
        return 2
    ceiling = symbol.gevrey_ceiling(spec.case, spec.m)
    branch = spec.reports["branch"]
    print(f"model:          {fam.name or args.model}")
    print(f"lambda0:        {spec.lambda0:.6g}")
    print(f"gamma0:         {spec.gamma0:.6g}")
    print(f"multiplicity:   {spec.m}")
    print(f"semisimple:     {branch.semisimple} (min branch gap "
          f"{branch.min_gap:.3g})")
    if "mu" in spec.reports:
        print(f"curvature:      {spec.reports['mu'].status}")
    print(f"quadratic src:  {spec.reports['quadratic_source']}")
    print(f"case:           {spec.case.value}")
    print(f"regularity ceiling: {ceiling:.6g}")
    if not spec.reports["quadratic_source"]:
        print("assumption failure: source is not quadratic at the origin",
              file=sys.stderr)
        return 2
    return 0


def cmd_sweep(args) -> int:
    try:
        cfg = runner.load_config(args.config)
    except (runner.ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 5
    try:
        rows, manifest, code = runner.run_sweep(
            cfg, threads=args.threads, resume=not args.no_resume,
            out_dir=args.out, seed=args.seed)
    except (runner.ConfigError, metrology.ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 5
    for r in rows:
        print(f"eps={r['eps']!r} ratio={r['ratio']!r} "
              f"K={r['K_eps']!r} flags={r.get('flags', '')}")
    print(f"csv written under {args.out}; wallclock "
          f"{manifest['wallclock_s']}s")
    return code


def cmd_report(args) -> int:
    verdicts = runner.report(args.csv, gamma0=args.gamma0)
    out = Path(args.out) / (Path(args.csv).stem + ".report.json")
    out.write_text(json.dumps(verdicts, indent=1, sort_keys=True) + "\n")
    print(json.dumps(verdicts, indent=1, sort_keys=True))
    return 0 if all(v.get("verdict", "PASS") == "PASS"
                    for v in verdicts.values()) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "derive-constants":
        return cmd_derive_constants(args)
    if args.cmd == "check-symbol":
        return cmd_check_symbol(args)
    if args.cmd == "sweep":
        return cmd_sweep(args)
    if args.cmd == "report":
        return cmd_report(args)
    return 5


if __name__ == "__main__":
    sys.exit(main())
