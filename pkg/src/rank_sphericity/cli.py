"""Command-line front end: ``rank-sphericity {test,simulate,power,diagnose}``.

Exit codes: 0 success, 2 user/input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .distributions import Scenario, shape_from_v
from .errors import InvalidInputError, RankSphericityError
from .montecarlo import (
    CellFailedError,
    ExperimentConfig,
    ScenarioTemplate,
    emit_diagnostics,
    emit_records,
    emit_report,
    run_experiment,
)
from .rank_tests import analytic_power, rank_tests, sigma0, sigma1

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

CONFIG_KEYS = {
    "scenarios",
    "n_list",
    "p_list",
    "v_list",
    "reps",
    "alpha",
    "methods",
    "master_seed",
    "threads",
}
REQUIRED_CONFIG_KEYS = {"scenarios", "n_list", "p_list"}


class UsageError(InvalidInputError):
    pass


def _num(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return str(value).lower()
    return repr(value)


def read_matrix(path: str, header: bool = False) -> np.ndarray:
    """Parse a numeric CSV (rows = observations) into an array."""
    if path == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if header and lineno == 1:
            continue
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            raise UsageError(f"line {lineno}: non-numeric value in row {row!r}") from None
        if not all(math.isfinite(x) for x in values):
            raise UsageError(f"line {lineno}: NaN or infinite value")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise UsageError(f"line {lineno}: expected {width} columns, found {len(values)}")
        rows.append(values)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def _write_out(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def _parse_list(text: str, kind, name: str) -> list:
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    if not items:
        raise UsageError(f"{name} must list at least one value")
    try:
        return [kind(t) for t in items]
    except ValueError:
        raise UsageError(f"{name}: cannot parse {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_test(args) -> int:
    X = read_matrix(args.input, header=args.header)
    methods = ["SR", "SK", "JOHN"] if args.method == "all" else [args.method.upper()]
    if any(m != "JOHN" for m in methods) and X.shape[0] < 4:
        raise UsageError(f"--method {args.method} requires n ≥ 4 observations, got n = {X.shape[0]}")
    results = rank_tests(X, alpha=args.alpha, methods=methods)
    fields = ("method", "n", "p", "statistic", "sigma0", "z", "p_value", "reject", "tie_count")
    payload = [{k: r.to_dict()[k] for k in fields} for r in results.values()]
    if args.format == "json":
        doc = {"n": int(X.shape[0]), "p": int(X.shape[1]), "alpha": args.alpha, "results": payload}
        sys.stdout.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")
    else:
        for row in payload:
            sys.stdout.write(
                " ".join(f"{k}={row[k]}" if k == "method" else f"{k}={_num(row[k])}" for k in fields)
                + "\n"
            )
    return EXIT_OK


def load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    unknown = sorted(set(raw) - CONFIG_KEYS)
    missing = sorted(REQUIRED_CONFIG_KEYS - set(raw))
    if unknown or missing:
        parts = []
        if unknown:
            parts.append("unknown keys: " + ", ".join(unknown))
        if missing:
            parts.append("missing keys: " + ", ".join(missing))
        raise UsageError("invalid config (" + "; ".join(parts) + ")")
    return raw


def _templates(entries) -> list:
    if not isinstance(entries, list):
        raise UsageError("scenarios must be a list")
    out = []
    for e in entries:
        if isinstance(e, dict):
            extra = sorted(set(e) - {"scenario", "kappa"})
            if extra or "scenario" not in e:
                raise UsageError(f"bad scenario entry {e!r}: allowed keys are scenario, kappa")
            out.append(ScenarioTemplate(e["scenario"], float(e.get("kappa", 0.8))))
        else:
            out.append(ScenarioTemplate(e))
    return out


def build_config(raw: dict, reps=None, seed=None, threads=None) -> ExperimentConfig:
    kw = dict(raw)
    kw["scenarios"] = _templates(kw["scenarios"])
    if reps is not None:
        kw["reps"] = reps
    if seed is not None:
        kw["master_seed"] = seed
    if threads is not None:
        kw["threads"] = threads
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _print_cell(rows) -> None:
    c = rows[0]
    parts = []
    for r in rows:
        rate = "-" if r.rejection_rate is None else f"{r.rejection_rate:.4f}"
        parts.append(f"{r.method.value}={rate}")
    sys.stdout.write(
        f"scenario={c.scenario.value} n={c.n} p={c.p} v={c.v!r} reps={c.reps} "
        + " ".join(parts)
        + "\n"
    )
    sys.stdout.flush()


def _format_for(path: str, explicit) -> str:
    if explicit:
        return explicit
    return "json" if path.lower().endswith(".json") else "csv"


def cmd_simulate(args) -> int:
    cfg = build_config(load_config(args.config), reps=args.reps, seed=args.seed, threads=args.threads)
    report = run_experiment(cfg, keep_records=bool(args.records), on_cell=_print_cell)
    _write_out(args.out, emit_report(report, _format_for(args.out, args.format)))
    if args.records:
        _write_out(args.records, emit_records(report))
    return EXIT_OK


def cmd_power(args) -> int:
    if args.n < 2 or args.p < 2:
        raise UsageError("power needs n >= 2 and p >= 2")
    if not (0.0 <= args.v <= 1.0):
        raise UsageError("v must lie in [0, 1]")
    shape = shape_from_v(args.p, args.v)
    doc = {
        "n": args.n,
        "p": args.p,
        "v": args.v,
        "tr_D2": shape.tr_D2,
        "sigma0": sigma0(args.n, args.p),
        "sigma1": sigma1(args.n, shape),
        "power": analytic_power(args.n, shape, args.alpha),
    }
    if args.format == "json":
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write(" ".join(f"{k}={_num(v)}" for k, v in doc.items()) + "\n")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    p_list = _parse_list(args.p_list, int, "--p-list")
    methods = _parse_list(args.methods, str, "--methods")
    try:
        cfg = ExperimentConfig(
            scenarios=[ScenarioTemplate(args.scenario, args.kappa)],
            n_list=[args.n],
            p_list=p_list,
            v_list=[args.v],
            reps=args.reps,
            alpha=args.alpha,
            methods=methods,
            master_seed=args.seed,
            threads=args.threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_experiment(cfg, on_cell=_print_cell)
    _write_out(args.out, emit_diagnostics(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _alpha(text: str) -> float:
    a = float(text)
    if not (0.0 < a < 1.0):
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _threads(text: str):
    if text == "auto":
        return "auto"
    t = int(text)
    if t < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return t


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rank-sphericity",
        description="High-dimensional Spearman/Kendall rank tests for sphericity.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run SR/SK/John on a CSV data matrix")
    p.add_argument("--input", required=True, help="CSV file, rows = observations ('-' for stdin)")
    p.add_argument("--method", choices=["sr", "sk", "john", "all"], default="all")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.add_argument("--header", action="store_true", help="skip the first line of the CSV")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a Monte Carlo size/power grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report path ('-' for stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=_threads, default=None)
    p.add_argument("--records", default=None, help="also write per-replication records (CSV)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="asymptotic SR/SK power under the diagonal spike alternative")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("diagnose", help="mean/sd and variance ratios of SR/SK across p")
    p.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p-list", required=True, help="comma-separated dimensions")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path ('-' for stdout)")
    p.add_argument("--v", type=float, default=0.0)
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--methods", default="SR,SK")
    p.add_argument("--threads", type=_threads, default=1)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CellFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RankSphericityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
