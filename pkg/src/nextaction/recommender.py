"""Online next-best-action recommendation.

For each running process instance the engine predicts the remaining
suffix, checks the projected total KPI against a threshold, and while
the instance is projected to breach it, retrieves the nearest
historical suffixes, ranks them by total KPI, and recommends the first
activity of the cheapest candidate that simulates conformantly on the
process model. The procedure repeats after every applied action until
the termination event.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Literal, Sequence

from .candidate_index import SuffixIndex
from .dcr import DcrGraph, Marking, replay, simulate_suffix
from .errors import BoundsError, DataError, StateError
from .eventlog import END_SYMBOL, EventLog, Trace

DecisionPath = Literal[
    "below-threshold-prediction",
    "optimized-candidate",
    "fallback-predicted-activity",
    "intervention",
]


@dataclass(frozen=True)
class Threshold:
    """KPI budget an instance should stay within."""

    value: float
    origin: Literal["expert-supplied", "derived-from-log"] = "expert-supplied"

    def __post_init__(self):
        if not self.value > 0:
            raise DataError("threshold must be positive")

    def __float__(self) -> float:
        return self.value


def derive_threshold(log: EventLog) -> Threshold:
    """Mean total KPI per training instance (termination events add 0)."""
    if not len(log):
        raise DataError("cannot derive a threshold from an empty log")
    mean = sum(t.total_kpi for t in log.traces) / len(log)
    if mean <= 0:
        raise DataError("derived threshold is not positive; supply one explicitly")
    return Threshold(value=mean, origin="derived-from-log")


@dataclass(frozen=True)
class CaseEvent:
    """Prefix step; recommended events have no timestamp yet."""

    activity: str
    kpi: float
    timestamp: datetime | None = None

    def __post_init__(self):
        if not self.activity:
            raise DataError("event with an empty activity name")
        if not self.kpi >= 0:
            raise DataError("event with a negative KPI value")


@dataclass(frozen=True)
class RunningCase:
    case_id: str
    events: tuple[CaseEvent, ...] = ()

    def __post_init__(self):
        names = [e.activity for e in self.events]
        if END_SYMBOL in names[:-1]:
            raise DataError("termination event inside a running prefix")

    @classmethod
    def from_trace(cls, trace: Trace) -> "RunningCase":
        return cls(
            trace.case_id,
            tuple(CaseEvent(e.activity, e.kpi_value, e.timestamp) for e in trace.events),
        )

    def __len__(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    @property
    def kpi_values(self) -> tuple[float, ...]:
        return tuple(e.kpi for e in self.events)

    @property
    def total_kpi(self) -> float:
        return float(sum(self.kpi_values))

    @property
    def status(self) -> str:
        terminated = bool(self.events) and self.events[-1].activity == END_SYMBOL
        return "terminated" if terminated else "open"

    @property
    def is_open(self) -> bool:
        return self.status == "open"

    def append(self, activity: str, kpi: float, timestamp: datetime | None = None) -> "RunningCase":
        if not self.is_open:
            raise StateError(f"case {self.case_id} is terminated")
        return RunningCase(self.case_id, self.events + (CaseEvent(activity, kpi, timestamp),))


@dataclass(frozen=True)
class Recommendation:
    decision_path: DecisionPath
    action: str | None
    projected_suffix: tuple[tuple[str, float], ...]
    projected_total_kpi: float
    retrieved: int = 0
    simulated_out: int = 0

    def __post_init__(self):
        if self.decision_path == "intervention":
            if self.action is not None:
                raise DataError("an intervention carries no action")
        elif not self.projected_suffix or self.action != self.projected_suffix[0][0]:
            raise DataError("action must be the first step of the projected suffix")


def total_kpi(prefix, suffix=()) -> float:
    """Sum of KPI values over the complete instance (prefix plus suffix)."""

    def values(part) -> Sequence[float]:
        return part.kpi_values if hasattr(part, "kpi_values") else tuple(part)

    return float(sum(values(prefix)) + sum(values(suffix)))


def _as_threshold_value(t) -> float:
    return float(t)


def recommend_next(model, index: SuffixIndex, graph: DcrGraph, case: RunningCase,
                   k: int, t) -> Recommendation:
    """One pass of the five-step scheme for an open case.

    1. Predict the suffix. 2. If the projected total stays within t,
    recommend the predicted next activity. 3. Replay the prefix; a
    non-conformant prefix yields an intervention. 4. Retrieve k
    candidate suffixes, rank them by total KPI ascending, and recommend
    the first one that simulates conformantly. 5. If every candidate is
    simulated out, fall back to the predicted next activity.
    """
    if not case.is_open:
        raise StateError(f"case {case.case_id} is terminated")
    if len(case) < 2:
        raise BoundsError("recommendations need a prefix of at least 2 events")
    t = _as_threshold_value(t)
    vocab = model.vocabulary

    predicted = model.predict_suffix(case.activities)
    projected_total = total_kpi(case, predicted)
    if projected_total <= t:
        return Recommendation(
            decision_path="below-threshold-prediction",
            action=predicted.steps[0][0],
            projected_suffix=predicted.steps,
            projected_total_kpi=projected_total,
        )

    marking = replay(graph, case.activities)
    if not isinstance(marking, Marking):
        return Recommendation(
            decision_path="intervention",
            action=None,
            projected_suffix=(),
            projected_total_kpi=case.total_kpi,
        )

    query = [(vocab.ordinal_of(a), kpi) for a, kpi in predicted.steps]
    retrieved = index.query_knn(query, k)
    ranked = sorted(retrieved, key=lambda pair: total_kpi(case, pair[0]))
    simulated_out = 0
    for record, _ in ranked:
        names = tuple(vocab.by_ordinal(o) for o in record.activities)
        if simulate_suffix(graph, marking, names).conformant:
            steps = tuple(zip(names, record.kpi_values))
            return Recommendation(
                decision_path="optimized-candidate",
                action=names[0],
                projected_suffix=steps,
                projected_total_kpi=total_kpi(case, record),
                retrieved=len(retrieved),
                simulated_out=simulated_out,
            )
        simulated_out += 1

    return Recommendation(
        decision_path="fallback-predicted-activity",
        action=predicted.steps[0][0],
        projected_suffix=predicted.steps,
        projected_total_kpi=projected_total,
        retrieved=len(retrieved),
        simulated_out=simulated_out,
    )


def apply_action(case: RunningCase, recommendation: Recommendation) -> RunningCase:
    """Concatenate the recommended action (timestamp unset) to the prefix."""
    if recommendation.action is None:
        raise DataError("cannot apply a recommendation without an action")
    kpi = recommendation.projected_suffix[0][1]
    return case.append(recommendation.action, kpi, timestamp=None)


@dataclass(frozen=True)
class RollOutResult:
    case: RunningCase
    recommendations: tuple[Recommendation, ...]
    truncated: bool = False

    @property
    def intervened(self) -> bool:
        return bool(self.recommendations) and (
            self.recommendations[-1].decision_path == "intervention"
        )

    @property
    def completion(self) -> tuple[tuple[str, float], ...]:
        """The (activity, kpi) steps appended by the roll-out."""
        applied = len(self.recommendations) - (1 if self.intervened else 0)
        return tuple((e.activity, e.kpi) for e in self.case.events[len(self.case) - applied:])


def roll_out(model, index: SuffixIndex, graph: DcrGraph, case: RunningCase, k: int, t,
             max_steps: int | None = None, recheck_threshold: bool = True) -> RollOutResult:
    """Alternate recommend/apply until termination, intervention, or the
    step bound. With recheck_threshold off, the gate decision of the
    first step is reused for the whole roll-out.
    """
    if not case.is_open:
        raise StateError(f"case {case.case_id} is terminated")
    if max_steps is None:
        max_steps = getattr(model, "max_rollout", 64)
    t = _as_threshold_value(t)

    recommendations: list[Recommendation] = []
    gate_open: bool | None = None  # check-once mode caches the first decision
    for _ in range(max_steps):
        if recheck_threshold or gate_open is None:
            rec = recommend_next(model, index, graph, case, k, t)
            if gate_open is None:
                gate_open = rec.decision_path == "below-threshold-prediction"
        else:
            # Freeze the first gate decision by making the comparison vacuous.
            forced = float("inf") if gate_open else float("-inf")
            rec = recommend_next(model, index, graph, case, k, forced)
        recommendations.append(rec)
        if rec.decision_path == "intervention":
            return RollOutResult(case, tuple(recommendations))
        case = apply_action(case, rec)
        if not case.is_open:
            return RollOutResult(case, tuple(recommendations))
    return RollOutResult(case, tuple(recommendations), truncated=True)
