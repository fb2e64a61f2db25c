"""
Monte Carlo replication engine.

Each grid cell (scenario, n, p, v) is replicated ``reps`` times; every
replication draws from its own counter-based stream keyed by
``(master_seed, cell, rep)`` so results do not depend on thread count or
execution order. Aggregates per method are the empirical rejection rate, the
mean/sd ratio of the statistic and the ratio of its Monte Carlo variance to
the analytic null variance.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .distributions import Scenario, ScenarioSpec, sample
from .errors import DegenerateInputError, InvalidInputError, RankSphericityError
from .rank_tests import Method, rank_tests, sigma0

__all__ = [
    "ScenarioTemplate",
    "ExperimentConfig",
    "ReplicationRecord",
    "CellSummary",
    "McReport",
    "CellFailedError",
    "REPORT_COLUMNS",
    "DIAGNOSTIC_COLUMNS",
    "replication_seed",
    "run_cell",
    "run_experiment",
    "mean_sd_ratio",
    "variance_ratio",
    "emit_report",
    "read_report",
    "emit_diagnostics",
    "emit_records",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "scenario",
    "n",
    "p",
    "v",
    "method",
    "reps",
    "rejection_rate",
    "mean_sd_ratio",
    "variance_ratio",
    "alpha",
    "master_seed",
)
DIAGNOSTIC_COLUMNS = ("scenario", "n", "p", "method", "reps", "mean_sd_ratio", "variance_ratio")
RECORD_COLUMNS = ("scenario", "n", "p", "v", "rep", "method", "statistic", "sigma0", "z", "reject")

_CHUNK = 64


class CellFailedError(RankSphericityError):
    """A replication failed; the whole cell is abandoned."""

    def __init__(self, cell: "Cell", rep: int, cause: BaseException):
        self.cell = cell
        self.rep = rep
        self.cause = cause
        super().__init__(f"cell {cell.label()} failed at replication {rep}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ScenarioTemplate:
    scenario: Scenario
    kappa: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if not (0.0 < self.kappa < 1.0):
            raise InvalidInputError(f"kappa must lie in (0, 1), got {self.kappa}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple
    n_list: tuple
    p_list: tuple
    v_list: tuple = (0.0,)
    reps: int = 2000
    alpha: float = 0.05
    methods: tuple = ("SR", "SK")
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        templates = tuple(
            s if isinstance(s, ScenarioTemplate) else ScenarioTemplate(s) for s in self.scenarios
        )
        object.__setattr__(self, "scenarios", templates)
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "p_list", tuple(int(p) for p in self.p_list))
        object.__setattr__(self, "v_list", tuple(float(v) for v in self.v_list))
        object.__setattr__(self, "methods", tuple(Method.parse(m) for m in self.methods))
        if self.threads in (None, "auto"):
            object.__setattr__(self, "threads", os.cpu_count() or 1)
        object.__setattr__(self, "threads", int(self.threads))

        problems = []
        if self.reps < 1:
            problems.append("reps must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            problems.append("alpha must lie in (0, 1)")
        for name in ("scenarios", "n_list", "p_list", "v_list", "methods"):
            if not getattr(self, name):
                problems.append(f"{name} must be non-empty")
        needs_rank = any(m is not Method.JOHN for m in self.methods)
        if any(n < (4 if needs_rank else 2) for n in self.n_list):
            problems.append("every n must be >= 4 for SR/SK (>= 2 for JOHN)")
        if any(p < 1 for p in self.p_list):
            problems.append("every p must be >= 1")
        if any(not (0.0 <= v <= 1.0) for v in self.v_list):
            problems.append("every v must lie in [0, 1]")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if not (0 <= self.master_seed < 2**64):
            problems.append("master_seed must be a 64-bit unsigned integer")
        if problems:
            raise InvalidInputError("; ".join(problems))

    def cells(self) -> list["Cell"]:
        return [
            Cell(t, n, p, v)
            for t, n, p, v in itertools.product(self.scenarios, self.n_list, self.p_list, self.v_list)
        ]


@dataclass(frozen=True)
class Cell:
    template: ScenarioTemplate
    n: int
    p: int
    v: float

    @property
    def scenario(self) -> Scenario:
        return self.template.scenario

    def label(self) -> str:
        return f"{self.scenario.value}(n={self.n}, p={self.p}, v={self.v!r})"

    def key(self) -> int:
        text = f"{self.scenario.value}|{self.template.kappa!r}|{self.n}|{self.p}|{self.v!r}"
        return zlib.crc32(text.encode("ascii"))


@dataclass(frozen=True)
class ReplicationRecord:
    scenario: Scenario
    n: int
    p: int
    v: float
    rep: int
    statistic: dict
    z: dict
    reject: dict
    sigma0: dict


@dataclass(frozen=True)
class CellSummary:
    scenario: Scenario
    n: int
    p: int
    v: float
    method: Method
    reps: int
    rejection_rate: Optional[float]
    mean_sd_ratio: Optional[float]
    variance_ratio: Optional[float]
    alpha: float
    master_seed: int
    wall_time: float = 0.0

    def row(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "n": self.n,
            "p": self.p,
            "v": self.v,
            "method": self.method.value,
            "reps": self.reps,
            "rejection_rate": self.rejection_rate,
            "mean_sd_ratio": self.mean_sd_ratio,
            "variance_ratio": self.variance_ratio,
            "alpha": self.alpha,
            "master_seed": self.master_seed,
        }


@dataclass
class McReport:
    cells: list = field(default_factory=list)
    records: Optional[list] = None
    wall_time: float = 0.0

    def get(self, scenario, n, p, v, method) -> CellSummary:
        scenario = Scenario.parse(scenario)
        method = Method.parse(method)
        for c in self.cells:
            if (c.scenario, c.n, c.p, c.method) == (scenario, n, p, method) and math.isclose(c.v, v):
                return c
        raise KeyError((scenario, n, p, v, method))

    def statistics(self, scenario, n, p, v, method) -> np.ndarray:
        """Per-replication statistics of one cell (needs ``keep_records``)."""
        if self.records is None:
            raise ValueError("report was built without replication records")
        scenario = Scenario.parse(scenario)
        method = Method.parse(method)
        return np.array(
            [
                r.statistic[method]
                for r in self.records
                if (r.scenario, r.n, r.p) == (scenario, n, p) and math.isclose(r.v, v)
            ]
        )


# ---------------------------------------------------------------------------
# diagnostics


def mean_sd_ratio(stats: Sequence[float]) -> float:
    """Sample mean over sample standard deviation (divisor len - 1)."""
    x = [float(s) for s in stats]
    if len(x) < 2:
        raise DegenerateInputError("mean_sd_ratio needs at least two values")
    mean = math.fsum(x) / len(x)
    var = math.fsum((s - mean) ** 2 for s in x) / (len(x) - 1)
    if var == 0.0:
        raise DegenerateInputError("mean_sd_ratio is undefined for constant input")
    return mean / math.sqrt(var)


def variance_ratio(stats: Sequence[float], sigma0_sq: float) -> float:
    """Sample variance of ``stats`` divided by the plug-in variance ``sigma0_sq``."""
    if not sigma0_sq > 0.0:
        raise InvalidInputError(f"sigma0_sq must be positive, got {sigma0_sq}")
    x = [float(s) for s in stats]
    if len(x) < 2:
        raise DegenerateInputError("variance_ratio needs at least two values")
    mean = math.fsum(x) / len(x)
    return math.fsum((s - mean) ** 2 for s in x) / (len(x) - 1) / sigma0_sq


# ---------------------------------------------------------------------------
# engine


def replication_seed(master_seed: int, cell_key: int, rep: int) -> int:
    """64-bit seed for one replication, a pure function of its coordinates."""
    words = np.random.SeedSequence([int(master_seed), int(cell_key), int(rep)]).generate_state(2)
    return int(words[0]) | (int(words[1]) << 32)


def _replicate(cell: Cell, rep: int, cfg: ExperimentConfig) -> ReplicationRecord:
    spec = ScenarioSpec(
        scenario=cell.scenario,
        n=cell.n,
        p=cell.p,
        v=cell.v,
        kappa=cell.template.kappa,
        seed=replication_seed(cfg.master_seed, cell.key(), rep),
    )
    results = rank_tests(sample(spec), alpha=cfg.alpha, methods=cfg.methods)
    return ReplicationRecord(
        scenario=cell.scenario,
        n=cell.n,
        p=cell.p,
        v=cell.v,
        rep=rep,
        statistic={m: r.statistic for m, r in results.items()},
        z={m: r.z for m, r in results.items()},
        reject={m: r.reject for m, r in results.items()},
        sigma0={m: r.sigma0 for m, r in results.items()},
    )


def _run_chunk(cell: Cell, reps: range, cfg: ExperimentConfig) -> list:
    out = []
    for r in reps:
        try:
            out.append(_replicate(cell, r, cfg))
        except (RankSphericityError, MemoryError, FloatingPointError) as exc:
            raise CellFailedError(cell, r, exc) from exc
    return out


def _summarize(cell: Cell, records: list, cfg: ExperimentConfig, wall: float) -> list:
    rows = []
    for m in cfg.methods:
        stats = [r.statistic[m] for r in records]
        s0 = sigma0(cell.n, cell.p) if m is not Method.JOHN else None
        if m is Method.JOHN or not s0:
            rate = None
        else:
            rate = sum(1 for r in records if r.reject[m]) / len(records)
        try:
            msr = mean_sd_ratio(stats)
        except DegenerateInputError:
            msr = None
        try:
            vr = variance_ratio(stats, s0 * s0) if s0 else None
        except DegenerateInputError:
            vr = None
        rows.append(
            CellSummary(
                scenario=cell.scenario,
                n=cell.n,
                p=cell.p,
                v=cell.v,
                method=m,
                reps=len(records),
                rejection_rate=rate,
                mean_sd_ratio=msr,
                variance_ratio=vr,
                alpha=cfg.alpha,
                master_seed=cfg.master_seed,
                wall_time=wall,
            )
        )
    return rows


def run_cell(cell: Cell, cfg: ExperimentConfig, pool: Optional[ThreadPoolExecutor] = None) -> list:
    """Run all replications of one cell and return its records in rep order."""
    chunks = [range(a, min(a + _CHUNK, cfg.reps)) for a in range(0, cfg.reps, _CHUNK)]
    if pool is None:
        parts = [_run_chunk(cell, c, cfg) for c in chunks]
    else:
        futures = [pool.submit(_run_chunk, cell, c, cfg) for c in chunks]
        parts = [f.result() for f in futures]
    return [rec for part in parts for rec in part]


def run_experiment(
    cfg: ExperimentConfig,
    keep_records: bool = False,
    on_cell: Optional[Callable[[list], None]] = None,
) -> McReport:
    """Run every grid cell of ``cfg`` and aggregate.

    ``on_cell`` is called with the list of :class:`CellSummary` rows of each
    finished cell, in grid order. A failing replication raises
    :class:`CellFailedError`; no partial report is returned.
    """
    report = McReport(records=[] if keep_records else None)
    t_start = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for cell in cfg.cells():
            t0 = time.perf_counter()
            records = run_cell(cell, cfg, pool)
            rows = _summarize(cell, records, cfg, time.perf_counter() - t0)
            report.cells.extend(rows)
            if keep_records:
                report.records.extend(records)
            log.info("finished %s in %.1fs", cell.label(), rows[0].wall_time)
            if on_cell is not None:
                on_cell(rows)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    report.wall_time = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_bytes(columns: Iterable[str], rows: Iterable[dict]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue().encode("utf-8")


def emit_report(report: McReport, fmt: str = "csv") -> bytes:
    """Serialize the per-cell summaries as CSV or JSON.

    Floats are written with ``repr`` so they round-trip exactly; undefined
    values (e.g. the rejection rate of JOHN) are empty in CSV and null in
    JSON.
    """
    rows = [c.row() for c in report.cells]
    fmt = fmt.lower()
    if fmt == "csv":
        return _csv_bytes(REPORT_COLUMNS, rows)
    if fmt == "json":
        doc = {"columns": list(REPORT_COLUMNS), "rows": rows}
        return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")
    raise InvalidInputError(f"unknown report format {fmt!r}")


_INT_COLS = {"n", "p", "reps", "master_seed"}
_FLOAT_COLS = {"v", "rejection_rate", "mean_sd_ratio", "variance_ratio", "alpha"}


def read_report(data: bytes, fmt: str = "csv") -> list[dict]:
    """Parse output of :func:`emit_report` back into row dicts."""
    text = data.decode("utf-8")
    if fmt.lower() == "json":
        return json.loads(text)["rows"]
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, val in raw.items():
            if val == "":
                row[k] = None
            elif k in _INT_COLS:
                row[k] = int(val)
            elif k in _FLOAT_COLS:
                row[k] = float(val)
            else:
                row[k] = val
        rows.append(row)
    return rows


def emit_diagnostics(report: McReport) -> bytes:
    """Plot-ready CSV series of the mean/sd and variance ratios by p."""
    rows = [
        {k: c.row()[k] for k in DIAGNOSTIC_COLUMNS}
        for c in report.cells
        if c.method is not Method.JOHN
    ]
    return _csv_bytes(DIAGNOSTIC_COLUMNS, rows)


def emit_records(report: McReport) -> bytes:
    """One CSV line per (replication, method)."""
    if report.records is None:
        raise ValueError("report was built without replication records")
    rows = []
    for r in report.records:
        for m in r.statistic:
            rows.append(
                {
                    "scenario": r.scenario.value,
                    "n": r.n,
                    "p": r.p,
                    "v": r.v,
                    "rep": r.rep,
                    "method": m.value,
                    "statistic": r.statistic[m],
                    "sigma0": r.sigma0[m],
                    "z": r.z[m],
                    "reject": "" if r.reject[m] is None else int(r.reject[m]),
                }
            )
    return _csv_bytes(RECORD_COLUMNS, rows)
