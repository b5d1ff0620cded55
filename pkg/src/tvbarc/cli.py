"""Command-line interface: ``tvbarc {ingest,fit,changepoint,acf,simulate}``.

Every command writes into one output directory, built in a temporary
sibling and renamed into place only when all files are written. Each
directory holds a ``manifest.json`` recording inputs (with SHA-256), the
resolved configuration, seed, version and wall-clock time.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classical import detect_changepoint, sample_acf
from .data_io import (
    DataError,
    KeywordClassMap,
    aggregate_daily,
    chain_csv_text,
    chain_metadata,
    counts_csv_text,
    read_counts_csv,
    read_records,
)
from .model import ModelSpec
from .posterior import default_grid, trend_summary
from .sampler import NumericalFailure, PosteriorChain, SamplerConfig, effective_sample_size, run_chains
from .synthgen import GeneratorSpec, simulate

log = logging.getLogger("tvbarc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "TVBARC_OUT_DIR"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _input(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError("no such file", path)
    return {"path": path, "sha256": _sha256(p)}


class _Output:
    """Files are written to a temporary sibling directory that replaces
    ``target`` only on commit."""

    def __init__(self, target: Path):
        self.target = target
        if target.exists() and (not target.is_dir() or (any(target.iterdir()) and not (target / MANIFEST).exists())):
            raise UsageError(f"output path {target} exists and is not a previous output directory")
        target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))

    def write(self, name: str, text: str):
        (self.tmp / name).write_text(text, encoding="utf-8")

    def commit(self):
        if self.target.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.old.", dir=self.target.parent))
            old.rmdir()
            self.target.rename(old)
            self.tmp.rename(self.target)
            shutil.rmtree(old)
        else:
            self.tmp.rename(self.target)

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUT_ENV)
    return Path(base or "tvbarc_out") / command


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid date {text!r}; use YYYY-MM-DD") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


# commands

def cmd_ingest(args, out: _Output) -> dict:
    inputs = [_input(args.records)]
    if args.classes:
        inputs.append(_input(args.classes))
        classes = KeywordClassMap.load(args.classes)
    else:
        classes = KeywordClassMap.default()
    if args.start > args.end:
        raise UsageError(f"--start {args.start} is after --end {args.end}")
    records = read_records(args.records)
    result = aggregate_daily(records, args.start, args.end, classes)
    for label, series in result.series.items():
        out.write(f"{label}.csv", counts_csv_text(series))
    warnings = []
    if result.n_records == 0:
        warnings.append("record file is empty; all counts are zero")
    if result.n_rejected:
        warnings.append(f"{result.n_rejected} record(s) rejected for malformed timestamps")
    return {
        "inputs": inputs,
        "config": {"start": args.start.isoformat(), "end": args.end.isoformat(), "classes": classes.to_dict()},
        "seed": None,
        "summary": result.summary(),
        "warnings": warnings,
    }


def cmd_fit(args, out: _Output) -> dict:
    inputs = [_input(args.counts)]
    series = read_counts_csv(args.counts)
    try:
        spec = ModelSpec.default(p=args.p, k1=args.k1, k2=args.k2, degree=args.degree, c1=args.c1, c2=args.c2)
        config = SamplerConfig(burn_in=args.burnin, retained=args.samples, thin=args.thin, seed=args.seed,
                               proposal=args.proposal)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    if series.T <= args.p:
        raise DataError(f"series has {series.T} observations; need more than p={args.p}", args.counts)

    chains = run_chains(series, spec, config, n_chains=args.chains, max_workers=args.workers)
    pooled = PosteriorChain.concatenate(chains)
    grid = default_grid(args.grid_points)
    targets = ["mu"] + [f"ar_{i}" for i in range(1, spec.p + 1)]
    for name in targets:
        target = "mu" if name == "mu" else ("ar", int(name[3:]))
        summary = trend_summary(pooled, target, grid, args.level)
        out.write(f"{name}.csv", summary.to_csv())
        out.write(f"{name}.json", summary.to_json())

    meta = []
    for k, ch in enumerate(chains, 1):
        name = "chain.csv" if len(chains) == 1 else f"chain_{k}.csv"
        out.write(name, chain_csv_text(ch))
        m = chain_metadata(ch)
        m["file"] = name
        m["ess_log_posterior"] = effective_sample_size(ch.log_posterior_trace) if len(ch) >= 10 else None
        meta.append(m)
    out.write("chain_meta.json", _json({"chains": meta}))
    return {
        "inputs": inputs,
        "config": {"model_spec": spec.to_dict(), "sampler_config": config.to_dict(), "level": args.level,
                   "grid_points": args.grid_points, "chains": args.chains},
        "seed": args.seed,
        "warnings": [],
    }


def cmd_changepoint(args, out: _Output) -> dict:
    inputs = [_input(args.counts)]
    series = read_counts_csv(args.counts)
    try:
        res = detect_changepoint(series, min_seg=args.min_seg)
    except ValueError as e:
        raise DataError(str(e), args.counts) from None
    doc = res.to_dict()
    doc["date_at_tau"] = series.date_at(res.tau_hat).isoformat()
    out.write("changepoint.json", _json(doc))
    return {"inputs": inputs, "config": {"min_seg": args.min_seg}, "seed": None, "warnings": []}


def cmd_acf(args, out: _Output) -> dict:
    inputs = [_input(args.counts)]
    series = read_counts_csv(args.counts)
    try:
        rho = sample_acf(series, args.max_lag)
    except ValueError as e:
        raise DataError(str(e), args.counts) from None
    lines = ["lag,rho"] + [f"{h},{r!r}" for h, r in enumerate(rho.tolist())]
    out.write("acf.csv", "\n".join(lines) + "\n")
    return {"inputs": inputs, "config": {"max_lag": args.max_lag}, "seed": None, "warnings": []}


def cmd_simulate(args, out: _Output) -> dict:
    inputs = [_input(args.genspec)]
    try:
        doc = json.loads(Path(args.genspec).read_text(encoding="utf-8"))
        if args.seed is not None:
            doc["seed"] = args.seed
        spec = GeneratorSpec.from_dict(doc)
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"invalid generator spec: {e}", args.genspec) from None
    series = simulate(spec)
    out.write("counts.csv", counts_csv_text(series))
    out.write("genspec.json", _json(spec.to_dict()))
    return {"inputs": inputs, "config": spec.to_dict(), "seed": spec.seed, "warnings": []}


COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "changepoint": cmd_changepoint,
    "acf": cmd_acf,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tvbarc", description="Bayesian trend analysis of daily count series.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out_arg(p):
        p.add_argument("--out", "-o", help=f"output directory (default ${OUT_ENV}/<command> or ./tvbarc_out/<command>)")

    p = sub.add_parser("ingest", help="aggregate raw records into daily counts per keyword class")
    p.add_argument("records", help="records file (.csv or .jsonl with id,timestamp,keyword)")
    p.add_argument("--classes", help="class map JSON (default: bundled CY/ON/TW map)")
    p.add_argument("--start", type=_date, default=dt.date(2020, 1, 1))
    p.add_argument("--end", type=_date, default=dt.date(2020, 6, 7))
    out_arg(p)

    p = sub.add_parser("fit", help="fit the time-varying model and export trend summaries")
    p.add_argument("counts", help="date,count CSV")
    p.add_argument("--p", type=_nonneg_int, default=1, help="autoregressive order")
    p.add_argument("--k1", type=_positive_int, default=6, help="basis size for the trend")
    p.add_argument("--k2", type=_positive_int, default=6, help="basis size for each lag coefficient")
    p.add_argument("--degree", type=_nonneg_int, default=3, help="B-spline degree")
    p.add_argument("--c1", type=float, default=100.0, help="prior variance of delta")
    p.add_argument("--c2", type=float, default=100.0, help="prior variance of beta")
    p.add_argument("--burnin", type=_nonneg_int, default=10_000)
    p.add_argument("--samples", type=_positive_int, default=20_000, help="retained iterations")
    p.add_argument("--thin", type=_positive_int, default=1)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--level", type=float, default=0.95, help="credible level")
    p.add_argument("--grid-points", type=_positive_int, default=100)
    p.add_argument("--chains", type=_positive_int, default=1)
    p.add_argument("--workers", type=_positive_int, default=None, help="processes for --chains > 1")
    p.add_argument("--proposal", choices=("random-walk", "gradient-informed"), default="random-walk")
    out_arg(p)

    p = sub.add_parser("changepoint", help="single mean-shift changepoint")
    p.add_argument("counts")
    p.add_argument("--min-seg", type=_positive_int, default=2)
    out_arg(p)

    p = sub.add_parser("acf", help="sample autocorrelation function")
    p.add_argument("counts")
    p.add_argument("--max-lag", type=_positive_int, default=30)
    out_arg(p)

    p = sub.add_parser("simulate", help="simulate a series from a generator spec")
    p.add_argument("genspec", help="generator spec JSON")
    p.add_argument("--seed", type=_nonneg_int, default=None, help="override the spec's seed")
    out_arg(p)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    out = None
    try:
        out = _Output(_out_dir(args, args.command))
        info = COMMANDS[args.command](args, out)
        manifest = {
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "version": __version__,
            **info,
            "wall_clock_seconds": round(time.perf_counter() - started, 3),
        }
        out.write(MANIFEST, _json(manifest))
        out.commit()
    except UsageError as e:
        print(f"tvbarc: error: {e}", file=sys.stderr)
        return _fail(out, EXIT_USAGE)
    except (DataError, FileNotFoundError, UnicodeDecodeError) as e:
        print(f"tvbarc: data error: {e}", file=sys.stderr)
        return _fail(out, EXIT_DATA)
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"tvbarc: numerical failure: {e}", file=sys.stderr)
        return _fail(out, EXIT_NUMERIC)
    except ValueError as e:
        # invariant violations in input data surface as ValueError from the domain types
        print(f"tvbarc: data error: {e}", file=sys.stderr)
        return _fail(out, EXIT_DATA)
    return EXIT_OK


def _fail(out, code):
    if out is not None:
        out.discard()
    return code


if __name__ == "__main__":
    sys.exit(main())
