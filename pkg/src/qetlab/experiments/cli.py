"""``qetlab`` command line: run, sweep, verify, report."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..errors import (
    ConfigError,
    DegenerateGroundStateError,
    DimensionError,
    GeometryError,
    IncompleteSchemeError,
    NotHermitianError,
    QetError,
    SiteRangeError,
    SupportError,
)
from .config import SWEEP_AXES, load_config, parse_verify, read_document
from .records import compare_golden, csv_text, read_record, write_record
from .runner import SWEEP_COLUMNS, execute, run_sweep, run_verify

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_DEGENERATE = 4

# Errors that mean the config asked for something ill-formed (bad operator, site out of range).
_CONFIG_LIKE = (ConfigError, SiteRangeError, DimensionError, NotHermitianError, IncompleteSchemeError, SupportError)

PINSKER_FLOOR = -1e-9
HOLDER_FLOOR = -1e-10
SPECTRAL_CEILING = 1e-10


def _err(msg):
    print(f"qetlab: {msg}", file=sys.stderr)


def _exit_code(exc):
    if isinstance(exc, GeometryError):
        return EXIT_GEOMETRY
    if isinstance(exc, DegenerateGroundStateError):
        return EXIT_DEGENERATE
    if isinstance(exc, _CONFIG_LIKE):
        return EXIT_CONFIG
    return EXIT_INVARIANT


def _workers(arg):
    if arg is not None:
        value = arg
    else:
        env = os.environ.get("QETLAB_WORKERS")
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError("QETLAB_WORKERS", f"not an integer: {env!r}") from None
    if value < 1:
        raise ConfigError("workers", "worker count must be >= 1")
    return value


def _seed(value):
    seed = int(value, 0)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "tolerance", None) is not None:
        config = replace(config, tolerance=args.tolerance)
    return config


def _summary(record):
    s = record["scalars"]
    lines = [
        f"E_A      = {s['e_a']:.12g}",
        f"E_B      = {s['e_b']:.12g}  (correlator {s['e_b_correlator']:.12g})",
        f"<H>      = {s['mean_h']:.12g}",
        f"||H_B||  = {s['h_b_norm']:.12g}",
        f"S_ent    = {s['s_ent']:.12g}",
        f"I_AB     = {s['i_ab']:.12g}",
        f"boundary = {record['boundary']}",
    ]
    failed = [k for k, v in record["flags"].items() if not v]
    lines.append("status   = " + ("PASS" if record["passed"] else "FAIL " + ", ".join(failed)))
    return "\n".join(lines)


def cmd_run(args):
    config = _load(args)
    record = execute(config)
    print(_summary(record))
    if args.out:
        path = Path(args.out) / "record.json"
        write_record(record, path)
        print(f"wrote {path}")
    ok = record["passed"]
    if args.check_golden:
        mismatches = compare_golden(record, args.check_golden)
        for key, got, expected, tol in mismatches:
            print(f"golden mismatch {key}: got {got!r}, expected {expected!r} (tol {tol:g})")
        if mismatches:
            ok = False
        else:
            print(f"golden check passed ({args.check_golden})")
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_sweep(args):
    config = _load(args)
    if not config.sweep:
        raise ConfigError("sweep", f"no sweep axes given; use one of {', '.join(SWEEP_AXES)}")
    results = run_sweep(config, workers=_workers(args.workers))
    rows = [row for row, _ in results]
    table = csv_text(rows, SWEEP_COLUMNS)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(table)
        for row, record in results:
            if record is not None:
                write_record(record, out / "runs" / f"run_{row['index']:04d}.json")
        print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    else:
        sys.stdout.write(table)
    failed = [row for row in rows if not row["pass"]]
    for row in failed:
        _err(f"row {row['index']} failed: {row['status']}")
    return EXIT_OK if not failed else EXIT_INVARIANT


def cmd_verify(args):
    doc = read_document(args.config) if args.config else {}
    spec, seed = parse_verify(doc)
    if args.seed is not None:
        seed = args.seed
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("samples", "need at least one sample")
        spec = replace(spec, samples=args.samples)
    if args.identical:
        spec = replace(spec, identical=True)
    pinsker_floor, holder_floor = PINSKER_FLOOR, HOLDER_FLOOR
    if args.tolerance is not None:
        pinsker_floor = holder_floor = args.tolerance
    result = run_verify(spec, seed, workers=_workers(args.workers))
    print(f"samples              {result.samples} (dims {spec.dim_min}-{spec.dim_max}, seed {seed})")
    print(f"pinsker slack min    {result.pinsker_min:.6e}  (sample {result.pinsker_argmin})")
    print(f"holder slack min     {result.holder_min:.6e}  (sample {result.holder_argmin})")
    print(f"spectral residual    {result.spectral_max:.6e}  (sample {result.spectral_argmax})")
    print(f"infinite rel. entropy {result.infinite_relative}")
    ok = True
    checks = (
        ("pinsker", result.pinsker_min >= pinsker_floor, result.pinsker_argmin),
        ("holder", result.holder_min >= holder_floor, result.holder_argmin),
        ("spectral", result.spectral_max <= SPECTRAL_CEILING, result.spectral_argmax),
    )
    for name, passed, index in checks:
        if not passed:
            ok = False
            _err(
                f"{name} check failed at sample {index}: "
                f"seed {seed}, sample stream seed {result.sample_seed(index)}"
            )
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_INVARIANT


def _flatten(record, source):
    row = {
        "source": source,
        "schema_version": record.get("schema_version"),
        "library_version": record.get("library_version"),
        "seed": record.get("seed"),
        "status": record.get("status"),
        "passed": record.get("passed"),
    }
    for section in ("model", "geometry"):
        for k, v in (record.get(section) or {}).items():
            if isinstance(v, (int, float, str, bool)):
                row[f"{section}.{k}"] = v
    for section in ("scalars", "residuals", "slacks"):
        for k, v in (record.get(section) or {}).items():
            row[f"{section}.{k}" if section != "scalars" else k] = v
    for k, v in (record.get("mirror") or {}).items():
        row[f"mirror.{k}"] = v
    return row


def collect_records(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("*.json"))
    elif path.exists():
        files = [path]
    else:
        raise ConfigError("records", f"{path} does not exist")
    if not files:
        raise ConfigError("records", f"no records under {path}")
    records = []
    for f in files:
        try:
            records.append((str(f), read_record(f)))
        except (ValueError, OSError) as exc:
            raise ConfigError("records", f"corrupt record {f}: {exc}") from exc
    return records


def cmd_report(args):
    records = collect_records(args.records)
    versions = {(r.get("schema_version"), r.get("library_version")) for _, r in records}
    if len(versions) > 1:
        _err("warning: records come from mixed versions: " + ", ".join(
            f"schema {s}/library {v}" for s, v in sorted(versions, key=str)))
    rows = [_flatten(r, src) for src, r in records]
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    table = csv_text(rows, columns)
    if args.out:
        out = Path(args.out)
        if out.suffix != ".csv":
            out = out / "report.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        sys.stdout.write(table)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="qetlab", description="Local energy extraction experiments on spin chains.")
    parser.add_argument("--version", action="version", version=f"qetlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config document")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=_seed, help="override the config seed (u64)")
        p.add_argument("--workers", type=int, help="parallel workers (default: $QETLAB_WORKERS or 1)")

    p = sub.add_parser("run", help="run the protocol once and write a record")
    common(p)
    p.add_argument("--tolerance", type=float, help="energy tolerance for pass flags")
    p.add_argument("--check-golden", metavar="DIR", help="compare scalars to DIR/reference.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid; CSV plus per-run JSON")
    common(p)
    p.add_argument("--tolerance", type=float, help="energy tolerance for pass flags")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="seeded random checks of the trace-distance inequalities")
    common(p, config_required=False)
    p.add_argument("--tolerance", type=float, help="minimum acceptable slack for every inequality")
    p.add_argument("--samples", type=int, help="number of random samples")
    p.add_argument("--identical", action="store_true", help="draw phi equal to rho")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="flatten records into a tidy CSV")
    p.add_argument("records", help="record file or directory of records")
    p.add_argument("--out", help="CSV file or directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except QetError as exc:
        _err(str(exc))
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
