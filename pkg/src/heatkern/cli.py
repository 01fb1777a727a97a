"""Command-line entry point.

Exit codes: 0 success, 1 computation failure, 2 configuration error,
3 ellipticity abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, EllipticityError, HeatKernError

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG, EXIT_ELLIPTIC = 0, 1, 2, 3


def _load(args):
    return load_config(args.config)


def _need(cfg, name: str):
    if cfg.section(name) is None:
        raise ConfigError([(f"$.{name}", f"section '{name}' is required by this subcommand")])
    return cfg.section(name)


def cmd_report(args) -> int:
    from .report import run_report, write_report

    cfg = _load(args)
    csv_dir = args.csv_dir or cfg.raw.get("output", {}).get("csv_dir")
    report = run_report(cfg, force=args.force, tol=args.tol, threads=args.threads, csv_dir=csv_dir)
    out = args.out or cfg.raw.get("output", {}).get("report")
    if out is None:
        raise ConfigError([("--out", "no output path given on the command line or in $.output.report")])
    write_report(report, out)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_ellipticity(args) -> int:
    from .report import run_report, dumps

    cfg = _load(args)
    try:
        report = run_report(cfg, sections=(), timestamp=False)
    except EllipticityError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ELLIPTIC
    text = dumps(report["ellipticity"])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_finsler_flow(args) -> int:
    from .finsler import FlowState, flow
    from .report import write_trajectory_csv

    cfg = _load(args)
    fl = _need(cfg, "finsler").get("flow")
    if fl is None:
        raise ConfigError([("$.finsler.flow", "flow section is required by finsler-flow")])
    sym = cfg.symbol()
    state = FlowState(np.asarray(fl["x"], float), np.asarray(fl["xi"], float), fl["branch"])
    traj = flow(sym, state, fl.get("dt", 1e-3), fl.get("steps", 1000))
    write_trajectory_csv(args.out, sym, traj)
    print(f"{len(traj)} states written to {args.out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .report import dumps, run_oracle

    cfg = _load(args)
    _need(cfg, "oracle")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_oracle(cfg.symbol(), cfg, {}, out)
    (out / "oracle.json").write_text(dumps(result))
    print(f"oracle results written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"valid configuration (n={cfg.n}, N={cfg.N}, hash {cfg.digest()[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatkern", description="Heat invariants of non-Laplace type operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (HEATKERN_THREADS wins)")

    r = sub.add_parser("report", help="full run: ellipticity, densities, A1, oracle checks")
    common(r)
    r.add_argument("--out", help="report JSON path")
    r.add_argument("--force", action="store_true", help="continue past a failed ellipticity check")
    r.add_argument("--tol", type=float, default=None, help="override every tolerance")
    r.add_argument("--csv-dir", default=None, help="directory for CSV sidecars")
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("ellipticity", help="ellipticity verdict with witness")
    common(e)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_ellipticity)

    f = sub.add_parser("finsler-flow", help="bicharacteristic trajectory as CSV (t, x, xi, h)")
    common(f)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_finsler_flow)

    o = sub.add_parser("oracle", help="discretization oracle with eigenvalue and trace CSVs")
    common(o)
    o.add_argument("--out-dir", required=True)
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("validate", help="check a configuration and exit")
    common(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except EllipticityError as exc:
        print(f"ellipticity abort: {exc}", file=sys.stderr)
        return EXIT_ELLIPTIC
    except (HeatKernError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
