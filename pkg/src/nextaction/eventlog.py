"""Event log parsing, validation, encoding, splitting, and prefix cropping.

Everything downstream (the predictor, the suffix index, the evaluation
harness) consumes the structures defined here. All types are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import (
    BoundsError,
    LogParseError,
    SchemaError,
    SplitError,
    TerminationError,
    VocabularyError,
)

logger = logging.getLogger(__name__)

END_SYMBOL = "End"

KpiMode = Literal["explicit-column", "inter-event-duration"]


@dataclass(frozen=True)
class Event:
    """One timestamped activity execution within a case.

    ``kpi_value`` is a non-negative per-event measure in log-dependent
    units (cost units, seconds, ...). Termination events carry 0.
    """

    case_id: str
    activity: str
    timestamp: datetime
    kpi_value: float = 0.0

    def __post_init__(self):
        if not self.activity:
            raise ValueError("event activity must be non-empty")
        if self.kpi_value < 0:
            raise ValueError(f"kpi_value must be >= 0, got {self.kpi_value}")


@dataclass(frozen=True)
class Trace:
    """Ordered events of one case; timestamps are non-decreasing."""

    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError("trace must contain at least one event")
        for e in self.events:
            if e.case_id != self.case_id:
                raise ValueError(
                    f"event case id {e.case_id!r} differs from trace {self.case_id!r}"
                )
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.timestamp < prev.timestamp:
                raise ValueError(f"timestamps decrease within case {self.case_id!r}")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i: int) -> Event:
        return self.events[i]

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    @property
    def kpi_values(self) -> tuple[float, ...]:
        return tuple(e.kpi_value for e in self.events)

    @property
    def total_kpi(self) -> float:
        return float(sum(e.kpi_value for e in self.events))

    def has_termination(self, end_symbol: str = END_SYMBOL) -> bool:
        return any(e.activity == end_symbol for e in self.events)


class ActivityVocabulary:
    """Bijection between activity names and indices in ``[0, size)``.

    The termination symbol is always present exactly once, at the last
    index. Ordinals are 1-based (``ordinal = index + 1``) so that 0 can
    serve as padding in fixed-length suffix vectors. One-hot columns are
    laid out in reverse ordinal order, i.e. the termination symbol
    occupies column 0 and the first-seen activity the last column.
    """

    def __init__(self, names: Sequence[str], end_symbol: str = END_SYMBOL):
        if list(names).count(end_symbol) != 1 or names[-1] != end_symbol:
            raise VocabularyError(
                f"vocabulary must contain the end symbol {end_symbol!r} exactly once, last"
            )
        if len(set(names)) != len(names):
            raise VocabularyError("duplicate activity names in vocabulary")
        self._names: tuple[str, ...] = tuple(names)
        self._index: dict[str, int] = {a: i for i, a in enumerate(self._names)}
        self.end_symbol = end_symbol

    @classmethod
    def from_activities(
        cls, activities: Sequence[str], end_symbol: str = END_SYMBOL
    ) -> "ActivityVocabulary":
        """Build from observed activities (first-appearance order) plus END."""
        seen: dict[str, None] = {}
        for a in activities:
            if a == end_symbol:
                raise VocabularyError(
                    f"observed activity collides with the end symbol {end_symbol!r}"
                )
            seen.setdefault(a, None)
        return cls(list(seen) + [end_symbol], end_symbol=end_symbol)

    @property
    def size(self) -> int:
        return len(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, activity: str) -> bool:
        return activity in self._index

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ActivityVocabulary)
            and self._names == other._names
            and self.end_symbol == other.end_symbol
        )

    @property
    def activities(self) -> tuple[str, ...]:
        return self._names

    @property
    def end_index(self) -> int:
        return len(self._names) - 1

    @property
    def end_ordinal(self) -> int:
        return len(self._names)

    def index_of(self, activity: str) -> int:
        try:
            return self._index[activity]
        except KeyError:
            raise VocabularyError(f"unknown activity {activity!r}") from None

    def name_of(self, index: int) -> str:
        return self._names[index]

    def ordinal_of(self, activity: str) -> int:
        return self.index_of(activity) + 1

    def by_ordinal(self, ordinal: int) -> str:
        if not 1 <= ordinal <= len(self._names):
            raise VocabularyError(f"ordinal {ordinal} outside [1, {len(self._names)}]")
        return self._names[ordinal - 1]

    def onehot_column(self, activity: str) -> int:
        return self.size - self.ordinal_of(activity)

    def by_onehot_column(self, column: int) -> str:
        return self.by_ordinal(self.size - column)

    def to_json(self) -> str:
        return json.dumps({a: i for i, a in enumerate(self._names)}, indent=2)

    @classmethod
    def from_json(cls, text: str, end_symbol: str = END_SYMBOL) -> "ActivityVocabulary":
        mapping = json.loads(text)
        if sorted(mapping.values()) != list(range(len(mapping))):
            raise VocabularyError("vocabulary indices are not a contiguous bijection")
        names = [name for name, _ in sorted(mapping.items(), key=lambda kv: kv[1])]
        return cls(names, end_symbol=end_symbol)


@dataclass(frozen=True)
class EventLog:
    """A set of traces with unique case ids and a shared vocabulary."""

    traces: tuple[Trace, ...]
    vocabulary: ActivityVocabulary

    def __post_init__(self):
        ids = [t.case_id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise ValueError("case ids must be unique across traces")

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)


@dataclass(frozen=True)
class PrefixSample:
    """One supervised sample: encoded prefix plus next-event labels."""

    prefix: np.ndarray  # (k, |A|) one-hot rows
    label_activity: np.ndarray  # (|A|,) one-hot
    label_kpi: float
    case_id: str = field(default="", compare=False)

    @property
    def length(self) -> int:
        return self.prefix.shape[0]

    @property
    def label_index(self) -> int:
        return int(np.argmax(self.label_activity))


@dataclass(frozen=True)
class LogSchema:
    """Column mapping for CSV ingestion. Header row is required."""

    case_id_column: str = "case_id"
    activity_column: str = "activity"
    timestamp_column: str = "timestamp"
    kpi_column: str | None = None
    delimiter: str = ","


def _parse_timestamp(raw: str, row: int) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.strip())
    except ValueError:
        raise LogParseError(f"malformed timestamp {raw!r}", row=row) from None
    return ts.replace(microsecond=0)


def parse_log(
    path: str | Path, schema: LogSchema = LogSchema(), end_symbol: str = END_SYMBOL
) -> EventLog:
    """Read a delimited event log file into an :class:`EventLog`.

    Events are grouped by case id and stably sorted by timestamp, so
    rows that share a timestamp keep their file order. The vocabulary
    covers all observed activities plus the termination symbol.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, header row required")
        required = [schema.case_id_column, schema.activity_column, schema.timestamp_column]
        if schema.kpi_column is not None:
            required.append(schema.kpi_column)
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {missing}")

        by_case: dict[str, list[Event]] = {}
        for row_no, row in enumerate(reader, start=2):
            case_id = (row[schema.case_id_column] or "").strip()
            activity = (row[schema.activity_column] or "").strip()
            if not case_id:
                raise LogParseError("empty case id", row=row_no)
            if not activity:
                raise LogParseError("empty activity", row=row_no)
            ts = _parse_timestamp(row[schema.timestamp_column] or "", row_no)
            kpi = 0.0
            if schema.kpi_column is not None:
                raw_kpi = (row[schema.kpi_column] or "").strip()
                try:
                    kpi = float(raw_kpi)
                except ValueError:
                    raise LogParseError(f"malformed kpi value {raw_kpi!r}", row=row_no) from None
                if kpi < 0:
                    raise LogParseError(f"negative kpi value {kpi}", row=row_no)
            by_case.setdefault(case_id, []).append(Event(case_id, activity, ts, kpi))

    traces = []
    for case_id, events in by_case.items():
        events.sort(key=lambda e: e.timestamp)  # stable: file order breaks ties
        traces.append(Trace(case_id, tuple(events)))
    activities = [e.activity for t in traces for e in t.events]
    vocab = ActivityVocabulary.from_activities(activities, end_symbol=end_symbol)
    return EventLog(tuple(traces), vocab)


def derive_kpi(trace: Trace, mode: KpiMode) -> Trace:
    """Attach per-event KPI values according to ``mode``.

    ``inter-event-duration`` sets event i's value to the elapsed seconds
    since event i-1 (first event gets 0); ``explicit-column`` keeps the
    parsed values untouched.
    """
    if mode == "explicit-column":
        return trace
    if mode != "inter-event-duration":
        raise ValueError(f"unknown kpi mode {mode!r}")
    events = [
        Event(
            e.case_id,
            e.activity,
            e.timestamp,
            0.0
            if i == 0
            else (e.timestamp - trace.events[i - 1].timestamp).total_seconds(),
        )
        for i, e in enumerate(trace.events)
    ]
    return Trace(trace.case_id, tuple(events))


def append_termination(trace: Trace, end_symbol: str = END_SYMBOL) -> Trace:
    """Append the termination event, copying the last event's timestamp.

    The termination event always carries KPI value 0. Raises if the
    trace already ends in a termination event.
    """
    if trace.has_termination(end_symbol):
        raise TerminationError(
            f"trace {trace.case_id!r} already contains {end_symbol!r}"
        )
    last = trace.events[-1]
    end = Event(trace.case_id, end_symbol, last.timestamp, 0.0)
    return Trace(trace.case_id, trace.events + (end,))


def prefix(trace: Trace, k: int) -> Trace:
    """First ``k`` events, ``1 <= k < len(trace)``."""
    if not 1 <= k < len(trace):
        raise BoundsError(f"prefix length {k} outside [1, {len(trace) - 1}]")
    return Trace(trace.case_id, trace.events[:k])


def suffix(trace: Trace, k: int) -> Trace:
    """Events ``k+1 .. n``; the complement of :func:`prefix`."""
    if not 1 <= k < len(trace):
        raise BoundsError(f"suffix cut point {k} outside [1, {len(trace) - 1}]")
    return Trace(trace.case_id, trace.events[k:])


def onehot_encode(trace: Trace, vocab: ActivityVocabulary) -> np.ndarray:
    """Encode activities as one-hot rows, shape ``(len(trace), |A|)``."""
    matrix = np.zeros((len(trace), vocab.size), dtype=np.float64)
    for i, e in enumerate(trace.events):
        matrix[i, vocab.onehot_column(e.activity)] = 1.0
    return matrix


def onehot_decode(matrix: np.ndarray, vocab: ActivityVocabulary) -> tuple[str, ...]:
    return tuple(vocab.by_onehot_column(int(c)) for c in np.argmax(matrix, axis=1))


def encode_activities(activities: Sequence[str], vocab: ActivityVocabulary) -> np.ndarray:
    """One-hot encode a bare activity sequence (no Trace required)."""
    matrix = np.zeros((len(activities), vocab.size), dtype=np.float64)
    for i, a in enumerate(activities):
        matrix[i, vocab.onehot_column(a)] = 1.0
    return matrix


def ordinal_encode(trace: Trace, vocab: ActivityVocabulary) -> tuple[int, ...]:
    """Encode activities as 1-based ordinals; 0 stays free for padding."""
    return tuple(vocab.ordinal_of(e.activity) for e in trace.events)


def ordinal_decode(ordinals: Sequence[int], vocab: ActivityVocabulary) -> tuple[str, ...]:
    return tuple(vocab.by_ordinal(int(o)) for o in ordinals)


def split_log(
    log: EventLog, train_fraction: float, seed: int
) -> tuple[EventLog, EventLog]:
    """Random trace-level partition into train and test logs.

    The training partition determines the vocabulary; test traces that
    mention activities unseen in training are dropped (logged with a
    counter), since no recommendation can name an unobserved activity.
    """
    if not 0 < train_fraction < 1:
        raise SplitError(f"train fraction must be in (0, 1), got {train_fraction}")
    if len(log.traces) < 2:
        raise SplitError("need at least 2 traces to split")

    case_ids = sorted(t.case_id for t in log.traces)
    rng = random.Random(seed)
    rng.shuffle(case_ids)
    n_train = int(len(case_ids) * train_fraction)
    n_train = min(max(n_train, 1), len(case_ids) - 1)
    train_ids = set(case_ids[:n_train])

    train_traces = tuple(t for t in log.traces if t.case_id in train_ids)
    test_traces = tuple(t for t in log.traces if t.case_id not in train_ids)

    end = log.vocabulary.end_symbol
    vocab = ActivityVocabulary.from_activities(
        [e.activity for t in train_traces for e in t.events], end_symbol=end
    )
    kept, dropped = [], 0
    for t in test_traces:
        if all(a in vocab for a in t.activities):
            kept.append(t)
        else:
            dropped += 1
    if dropped:
        logger.warning(
            "dropped %d test trace(s) containing activities unseen in training", dropped
        )
    return EventLog(train_traces, vocab), EventLog(tuple(kept), vocab)


def build_prediction_samples(log: EventLog) -> list[PrefixSample]:
    """Crop every prefix of every terminated trace into a labelled sample.

    A trace of length n (termination included) yields n-1 samples; the
    label of the prefix of length k is event k+1's activity and KPI.
    """
    vocab = log.vocabulary
    samples: list[PrefixSample] = []
    for trace in log.traces:
        if not trace.has_termination(vocab.end_symbol):
            raise TerminationError(
                f"trace {trace.case_id!r} lacks a termination event; "
                "apply append_termination first"
            )
        encoded = onehot_encode(trace, vocab)
        for k in range(1, len(trace)):
            label = trace.events[k]
            samples.append(
                PrefixSample(
                    prefix=encoded[:k].copy(),
                    label_activity=encoded[k].copy(),
                    label_kpi=label.kpi_value,
                    case_id=trace.case_id,
                )
            )
    return samples
