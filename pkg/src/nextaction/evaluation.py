"""Offline evaluation of recommendations against held-out traces.

For every test trace and prefix size p, the pure predicted completion
(baseline) and the recommendation roll-out (one series per k) are
scored against the true suffix tl^p: the share of instances whose
projected total stays within the threshold, and the Damerau-Levenshtein
distance between completed and true activity sequences.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .dcr import DcrGraph
from .errors import ConfigError, DataError
from .eventlog import END_SYMBOL, EventLog, Trace
from .recommender import CaseEvent, RunningCase, roll_out

REPORT_SCHEMA_VERSION = 1
BASELINE = "baseline"
RECOMMENDER = "recommender"

# Column order of the delimited report. The normalized distance is kept
# last so the leading columns stay stable for downstream consumers.
CSV_COLUMNS = ("method", "k", "prefix_size", "in_time_rate", "mean_dl", "n", "mean_dl_norm")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol parameters.

    Prefix sizes run from min_prefix to max_prefix inclusive; traces
    whose real length (termination excluded) is not strictly larger
    than p are skipped for that p. A boundary total equal to t counts
    as in time unless boundary_in_time is cleared.
    """

    k_values: tuple[int, ...] = (5, 10, 15)
    min_prefix: int = 2
    max_prefix: int = 12
    boundary_in_time: bool = True
    recheck_threshold: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.k_values:
            raise ConfigError("at least one k value is required")
        if any(k < 1 for k in self.k_values):
            raise ConfigError("k values must be positive")
        if len(set(self.k_values)) != len(self.k_values):
            raise ConfigError("k values must be unique")
        if self.min_prefix < 2:
            raise ConfigError("prefix sizes start at 2")
        if self.max_prefix < self.min_prefix:
            raise ConfigError("max_prefix must be at least min_prefix")
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))


def damerau_levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    """Restricted (optimal string alignment) edit distance.

    Insertions, deletions, substitutions, and transpositions of two
    adjacent symbols all cost 1; no substring is edited twice.
    """
    a, b = tuple(a), tuple(b)
    if not a:
        return len(b)
    if not b:
        return len(a)

    prev2: list[int] = []
    prev = list(range(len(b) + 1))
    for i, sym_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, sym_b in enumerate(b, start=1):
            cost = 0 if sym_a == sym_b else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and sym_a == b[j - 2] and a[i - 2] == sym_b:
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[len(b)]


def in_time_rate(totals: Sequence[float], t: float, boundary_in_time: bool = True) -> float:
    """Percentage of totals within the threshold."""
    totals = tuple(totals)
    if not totals:
        raise DataError("in-time rate over an empty instance set is undefined")
    t = float(t)
    hits = sum(1 for total in totals if (total <= t if boundary_in_time else total < t))
    return 100.0 * hits / len(totals)


@dataclass(frozen=True)
class InstanceResult:
    """One scored completion of one prefix."""

    case_id: str
    method: str
    k: int
    prefix_size: int
    total_kpi: float
    in_time: bool
    dl: int
    dl_norm: float
    completion: tuple[str, ...]
    decision_paths: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalCell:
    method: str
    k: int
    prefix_size: int
    in_time_rate: float
    mean_dl: float
    mean_dl_norm: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.in_time_rate <= 100.0:
            raise DataError("in-time rate outside [0, 100]")
        if self.mean_dl < 0 or self.mean_dl_norm < 0:
            raise DataError("negative mean distance")


@dataclass(frozen=True)
class EvalReport:
    cells: tuple[EvalCell, ...]
    metadata: dict

    def series(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted({(c.method, c.k) for c in self.cells}))

    def cell(self, method: str, k: int, prefix_size: int) -> EvalCell | None:
        for c in self.cells:
            if (c.method, c.k, c.prefix_size) == (method, k, prefix_size):
                return c
        return None


def _real_activities(trace: Trace) -> tuple[str, ...]:
    acts = trace.activities
    return acts[:-1] if acts and acts[-1] == END_SYMBOL else acts


def _strip_end(activities: Iterable[str]) -> tuple[str, ...]:
    return tuple(a for a in activities if a != END_SYMBOL)


def _case_prefix(trace: Trace, p: int) -> RunningCase:
    events = tuple(
        CaseEvent(e.activity, e.kpi_value, e.timestamp) for e in trace.events[:p]
    )
    return RunningCase(trace.case_id, events)


def _score(case_id: str, method: str, k: int, p: int, truth: Sequence[str],
           completion: Sequence[tuple[str, float]], prefix_total: float,
           t: float, boundary: bool, paths: tuple[str, ...] = ()) -> InstanceResult:
    acts = _strip_end(a for a, _ in completion)
    total = prefix_total + sum(kpi for _, kpi in completion)
    dl = damerau_levenshtein(truth, acts)
    norm = dl / max(len(truth), len(acts), 1)
    in_time = total <= t if boundary else total < t
    return InstanceResult(case_id, method, k, p, total, in_time, dl, norm, acts, paths)


def _evaluate_trace(trace: Trace, model, index, graph: DcrGraph, t: float,
                    config: EvalConfig) -> list[InstanceResult]:
    results: list[InstanceResult] = []
    real = _real_activities(trace)
    for p in range(config.min_prefix, config.max_prefix + 1):
        if len(real) <= p:
            continue
        case = _case_prefix(trace, p)
        truth = real[p:]
        prefix_total = case.total_kpi

        predicted = model.predict_suffix(case.activities)
        results.append(_score(trace.case_id, BASELINE, 0, p, truth,
                              predicted.steps, prefix_total, t, config.boundary_in_time))

        for k in config.k_values:
            rolled = roll_out(model, index, graph, case, k, t,
                              recheck_threshold=config.recheck_threshold)
            paths = tuple(r.decision_path for r in rolled.recommendations)
            results.append(_score(trace.case_id, RECOMMENDER, k, p, truth,
                                  rolled.completion, prefix_total, t,
                                  config.boundary_in_time, paths))
    return results


def evaluate_instances(log: EventLog, model, index, graph: DcrGraph, t,
                       config: EvalConfig = EvalConfig(),
                       workers: int = 1) -> tuple[InstanceResult, ...]:
    """Score every (trace, prefix size, method) combination.

    Traces are independent, so they can be fanned out over a thread
    pool; result order follows the log either way.
    """
    t = float(t)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(
                lambda tr: _evaluate_trace(tr, model, index, graph, t, config),
                log.traces,
            )
            return tuple(r for chunk in chunks for r in chunk)
    return tuple(
        r for trace in log.traces
        for r in _evaluate_trace(trace, model, index, graph, t, config)
    )


def aggregate(results: Iterable[InstanceResult]) -> tuple[EvalCell, ...]:
    """Order-independent reduction to per (method, k, prefix size) cells."""
    groups: dict[tuple[str, int, int], list[InstanceResult]] = {}
    for r in results:
        groups.setdefault((r.method, r.k, r.prefix_size), []).append(r)
    cells = []
    for (method, k, p), rs in sorted(groups.items()):
        n = len(rs)
        cells.append(EvalCell(
            method=method,
            k=k,
            prefix_size=p,
            in_time_rate=100.0 * sum(r.in_time for r in rs) / n,
            mean_dl=sum(r.dl for r in rs) / n,
            mean_dl_norm=sum(r.dl_norm for r in rs) / n,
            n=n,
        ))
    return tuple(cells)


def evaluate(log: EventLog, model, index, graph: DcrGraph, t,
             config: EvalConfig = EvalConfig(), workers: int = 1) -> EvalReport:
    results = evaluate_instances(log, model, index, graph, t, config, workers)
    diagnostics: dict[str, Counter] = {}
    for r in results:
        if r.method == RECOMMENDER:
            series = f"{RECOMMENDER}@{r.k}"
            counter = diagnostics.setdefault(series, Counter())
            counter.update(r.decision_paths)
    metadata = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "threshold": float(t),
        "config": asdict(config),
        "n_traces": len(log),
        "diagnostics": {series: dict(c) for series, c in sorted(diagnostics.items())},
    }
    # Normalized to JSON-stable types so exported reports parse back equal.
    return EvalReport(cells=aggregate(results), metadata=json.loads(json.dumps(metadata)))


def _cell_row(cell: EvalCell) -> list[str]:
    return [str(getattr(cell, column)) for column in CSV_COLUMNS]


def export_report(report: EvalReport, out_dir, formats: Sequence[str] = ("csv", "json")) -> dict[str, Path]:
    """Write the report; one row per cell, stable column order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / "report.csv"
            lines = [",".join(CSV_COLUMNS)]
            lines += [",".join(_cell_row(c)) for c in report.cells]
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        elif fmt == "json":
            path = out_dir / "report.json"
            document = {
                "metadata": report.metadata,
                "cells": [asdict(c) for c in report.cells],
            }
            path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        else:
            raise ConfigError(f"unknown report format: {fmt!r}")
        written[fmt] = path
    return written


def read_report(path) -> EvalReport:
    """Parse a report file back; CSV carries the cells only."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no report at {path}")
    if path.suffix == ".json":
        document = json.loads(path.read_text(encoding="utf-8"))
        cells = tuple(EvalCell(**c) for c in document["cells"])
        return EvalReport(cells=cells, metadata=document["metadata"])
    text = path.read_text(encoding="utf-8").strip()
    lines = text.splitlines()
    if not lines or tuple(lines[0].split(",")) != CSV_COLUMNS:
        raise DataError(f"unrecognized report header in {path}")
    cells = []
    for line in lines[1:]:
        raw = line.split(",")
        if len(raw) != len(CSV_COLUMNS):
            raise DataError(f"malformed report row: {line!r}")
        cells.append(EvalCell(
            method=raw[0], k=int(raw[1]), prefix_size=int(raw[2]),
            in_time_rate=float(raw[3]), mean_dl=float(raw[4]),
            n=int(raw[5]), mean_dl_norm=float(raw[6]),
        ))
    return EvalReport(cells=tuple(cells), metadata={})
