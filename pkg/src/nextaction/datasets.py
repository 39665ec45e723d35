"""Seeded synthetic event logs for experiments, demos, and smoke runs.

Real logs cannot be bundled, so these generators produce structurally
similar stand-ins: a two-variant process with a cheap and an expensive
route, and a service-desk process with the usual ticket lifecycle. Both
come with a matching process model and a threshold sitting between the
variant costs.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from .dcr import DcrGraph, Relation, load_asset
from .errors import ConfigError
from .eventlog import ActivityVocabulary, Event, EventLog, LogSchema, Trace

DIRECTIONAL_THRESHOLD = 85.0


@dataclass(frozen=True)
class Dataset:
    """A raw (unterminated) log with its process model and threshold."""

    name: str
    log: EventLog
    graph: DcrGraph
    threshold: float


def _build_log(rows_per_case: list[list[tuple[str, float]]], start: datetime,
               activities: list[str]) -> EventLog:
    traces = []
    for i, steps in enumerate(rows_per_case):
        t0 = start + timedelta(hours=i)
        events = []
        elapsed = 0.0
        for activity, kpi in steps:
            elapsed += max(kpi, 1.0)
            ts = t0 + timedelta(minutes=round(elapsed))
            events.append(Event(str(i), activity, ts, kpi))
        traces.append(Trace(str(i), tuple(events)))
    vocab = ActivityVocabulary.from_activities(activities)
    return EventLog(tuple(traces), vocab)


def directional_log(n_traces: int = 300, seed: int = 11) -> Dataset:
    """Two-variant process with a threshold between the variant costs.

    The fast route closes cheaply; the review route is usually far more
    expensive, though a share of reviews resolves quickly. Variants
    repeat in a fixed cycle so every stretch of the log carries both,
    and the seed only jitters the KPI values.
    """
    if n_traces < 20:
        raise ConfigError("directional log needs at least one full 20-trace cycle")
    rng = random.Random(seed)
    names = ["Register", "Triage", "Fast Track", "Deep Review", "Close"]

    def jitter(base: float) -> float:
        return round(base + rng.uniform(-2.0, 2.0), 2)

    cases = []
    for i in range(n_traces):
        slot = i % 20
        if slot < 5:
            review = jitter(30.0)   # review resolved quickly
        elif slot < 12:
            review = jitter(170.0)  # full rework
        else:
            review = None           # fast-track variant
        steps = [("Register", jitter(10.0)), ("Triage", jitter(10.0))]
        if review is None:
            steps.append(("Fast Track", jitter(5.0)))
        else:
            steps.append(("Deep Review", review))
        steps.append(("Close", jitter(10.0)))
        cases.append(steps)

    log = _build_log(cases, datetime(2022, 2, 7, 8, 0), names)
    graph = DcrGraph(names, [Relation("response", "Register", "Close")])
    return Dataset("directional", log, graph, DIRECTIONAL_THRESHOLD)


_TICKET_VARIANTS = (
    (55, ("Assign seriousness", "Take in charge ticket", "Resolve ticket", "Closed")),
    (12, ("Assign seriousness", "Take in charge ticket", "Wait", "Resolve ticket", "Closed")),
    (10, ("Insert ticket", "Assign seriousness", "Take in charge ticket", "Resolve ticket", "Closed")),
    (8, ("Assign seriousness", "Require upgrade", "Take in charge ticket", "Resolve ticket", "Closed")),
    (6, ("Assign seriousness", "Take in charge ticket", "Create SW anomaly",
         "Resolve SW anomaly", "Resolve ticket", "Closed")),
    (5, ("Assign seriousness", "Take in charge ticket", "Schedule intervention",
         "Resolve ticket", "Closed")),
    (4, ("Assign seriousness", "Take in charge ticket", "Resolve ticket", "VERIFIED", "Closed")),
    # Long-running tails keep deep prefixes populated in evaluation.
    (3, ("Assign seriousness", "Take in charge ticket", "Wait", "Take in charge ticket",
         "Wait", "Take in charge ticket", "Resolve ticket", "Closed")),
    (2, ("Insert ticket", "Assign seriousness", "Take in charge ticket", "Create SW anomaly",
         "Resolve SW anomaly", "Create SW anomaly", "Resolve SW anomaly",
         "Resolve ticket", "Closed")),
    (1, ("Insert ticket", "Assign seriousness", "Require upgrade", "Take in charge ticket",
         "Wait", "Schedule intervention", "Wait", "Take in charge ticket",
         "Create SW anomaly", "Resolve SW anomaly", "Resolve ticket", "VERIFIED", "Closed")),
)

# Typical handling time in minutes per ticket activity, (low, high).
_TICKET_DURATIONS = {
    "Insert ticket": (5.0, 30.0),
    "Assign seriousness": (10.0, 120.0),
    "Take in charge ticket": (30.0, 600.0),
    "Wait": (600.0, 4000.0),
    "Require upgrade": (120.0, 900.0),
    "Create SW anomaly": (60.0, 600.0),
    "Resolve SW anomaly": (240.0, 2000.0),
    "Schedule intervention": (120.0, 1500.0),
    "Resolve ticket": (60.0, 1200.0),
    "VERIFIED": (30.0, 300.0),
    "Closed": (5.0, 60.0),
}


def helpdesk_log(n_cases: int = 600, seed: int = 19) -> Dataset:
    """Service-desk lifecycle log shaped like the public helpdesk data.

    Seven ticket variants drawn with fixed weights; KPI values are
    handling minutes, so totals resemble ticket cycle times.
    """
    if n_cases < 10:
        raise ConfigError("helpdesk log needs at least 10 cases")
    rng = random.Random(seed)
    weights = [w for w, _ in _TICKET_VARIANTS]
    variants = [v for _, v in _TICKET_VARIANTS]
    activities = sorted({a for v in variants for a in v})

    cases = []
    for _ in range(n_cases):
        variant = rng.choices(variants, weights=weights, k=1)[0]
        steps = [
            (a, round(rng.uniform(*_TICKET_DURATIONS[a]), 1)) for a in variant
        ]
        cases.append(steps)

    log = _build_log(cases, datetime(2022, 1, 10, 7, 30), activities)
    totals = [t.total_kpi for t in log.traces]
    threshold = round(sum(totals) / len(totals), 1)
    return Dataset("helpdesk", log, load_asset("helpdesk"), threshold)


def write_csv(log: EventLog, path, schema: LogSchema = LogSchema(kpi_column="kpi")) -> Path:
    """Write a log to a delimited file that parse_log reads back."""
    if schema.kpi_column is None:
        raise ConfigError("write_csv needs a kpi column name")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [schema.case_id_column, schema.activity_column,
               schema.timestamp_column, schema.kpi_column]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter)
        writer.writerow(columns)
        for trace in log.traces:
            for e in trace.events:
                writer.writerow([e.case_id, e.activity, e.timestamp.isoformat(sep=" "), repr(e.kpi_value)])
    return path
