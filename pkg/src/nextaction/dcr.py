"""Declarative (DCR) process model engine.

Supports the five standard relation kinds (condition, response, include,
exclude, milestone) over a marking of executed/included/pending activity
sets, with acceptance defined as "no included activity is pending".
Replay folds a prefix from the initial marking; short-term simulation
continues candidate suffixes from the replayed state.

The termination symbol is a declared activity whose enabledness
additionally requires the marking to be accepting; executing it ends
the instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .errors import DcrError, ExecutionError, SchemaError
from .eventlog import END_SYMBOL

RELATION_TYPES = ("condition", "response", "include", "exclude", "milestone")

RelationType = Literal["condition", "response", "include", "exclude", "milestone"]

NOT_ENABLED = "not-enabled"
NOT_ACCEPTING = "not-accepting"


@dataclass(frozen=True)
class Relation:
    type: RelationType
    source: str
    target: str


@dataclass(frozen=True)
class Marking:
    """Executed / included / pending activity sets. A value; never mutated."""

    executed: frozenset[str]
    included: frozenset[str]
    pending: frozenset[str]


@dataclass(frozen=True)
class ConformanceVerdict:
    conformant: bool
    failing_index: int | None = None
    reason: Literal["not-enabled", "not-accepting"] | None = None

    def __post_init__(self):
        if not self.conformant and self.reason is None:
            raise ValueError("non-conformant verdict requires a reason")


CONFORMANT = ConformanceVerdict(conformant=True)


class DcrGraph:
    """Immutable DCR graph with precomputed relation lookups."""

    def __init__(
        self,
        activities: Sequence[str],
        relations: Iterable[Relation] = (),
        initial_marking: Marking | None = None,
        end_symbol: str = END_SYMBOL,
    ):
        acts = list(activities)
        if len(set(acts)) != len(acts):
            raise SchemaError("duplicate activity in DCR graph")
        if end_symbol not in acts:
            acts.append(end_symbol)
        self.activities: frozenset[str] = frozenset(acts)
        self.end_symbol = end_symbol
        self.relations: tuple[Relation, ...] = tuple(relations)
        for rel in self.relations:
            if rel.type not in RELATION_TYPES:
                raise SchemaError(f"unknown relation type {rel.type!r}")
            for endpoint in (rel.source, rel.target):
                if endpoint not in self.activities:
                    raise SchemaError(
                        f"relation endpoint {endpoint!r} is not a declared activity"
                    )
        self.initial_marking = initial_marking or Marking(
            executed=frozenset(), included=self.activities, pending=frozenset()
        )
        for name in ("executed", "included", "pending"):
            extra = getattr(self.initial_marking, name) - self.activities
            if extra:
                raise SchemaError(f"initial marking {name} references undeclared {sorted(extra)}")

        self._condition_sources: dict[str, frozenset[str]] = self._by_target("condition")
        self._milestone_sources: dict[str, frozenset[str]] = self._by_target("milestone")
        self._response_targets: dict[str, frozenset[str]] = self._by_source("response")
        self._exclude_targets: dict[str, frozenset[str]] = self._by_source("exclude")
        self._include_targets: dict[str, frozenset[str]] = self._by_source("include")

    def _by_target(self, kind: str) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {}
        for rel in self.relations:
            if rel.type == kind:
                out.setdefault(rel.target, set()).add(rel.source)
        return {k: frozenset(v) for k, v in out.items()}

    def _by_source(self, kind: str) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {}
        for rel in self.relations:
            if rel.type == kind:
                out.setdefault(rel.source, set()).add(rel.target)
        return {k: frozenset(v) for k, v in out.items()}

    def declares(self, activity: str) -> bool:
        return activity in self.activities


def parse_dcr(document: str | Path | dict, end_symbol: str = END_SYMBOL) -> DcrGraph:
    """Load a DCR graph from a JSON document, file path, or parsed dict.

    Schema: ``{"activities": [...], "relations": [{"type", "source",
    "target"}, ...], "initialMarking": {"executed": [], "included": [],
    "pending": []}}`` where ``initialMarking`` is optional (default: all
    included, nothing executed or pending).
    """
    if isinstance(document, dict):
        data = document
    else:
        if isinstance(document, Path):
            text = document.read_text(encoding="utf-8")
        elif document.lstrip().startswith("{"):
            text = document
        else:
            path = Path(document)
            if not path.is_file():
                raise SchemaError(f"DCR document {document!r} is neither JSON nor a file")
            text = path.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed DCR document: {exc}") from None
    if "activities" not in data:
        raise SchemaError("DCR document lacks an 'activities' array")
    relations = []
    for i, rel in enumerate(data.get("relations", [])):
        try:
            relations.append(Relation(rel["type"], rel["source"], rel["target"]))
        except (KeyError, TypeError):
            raise SchemaError(f"relation #{i} must carry type/source/target") from None
    marking = None
    if "initialMarking" in data:
        raw = data["initialMarking"]
        declared = set(data["activities"]) | {end_symbol}
        marking = Marking(
            executed=frozenset(raw.get("executed", [])),
            included=frozenset(raw.get("included", sorted(declared))),
            pending=frozenset(raw.get("pending", [])),
        )
    return DcrGraph(data["activities"], relations, marking, end_symbol=end_symbol)


def load_asset(name: str) -> DcrGraph:
    """Load one of the DCR graphs shipped with the package."""
    path = Path(__file__).parent / "assets" / f"{name}.dcr.json"
    if not path.is_file():
        raise SchemaError(f"no shipped DCR graph named {name!r}")
    return parse_dcr(path)


def to_document(graph: DcrGraph) -> dict:
    """Dict form of a graph; parse_dcr reads it back equivalently."""
    return {
        "activities": sorted(graph.activities - {graph.end_symbol}),
        "relations": [
            {"type": r.type, "source": r.source, "target": r.target}
            for r in graph.relations
        ],
        "initialMarking": {
            "executed": sorted(graph.initial_marking.executed),
            "included": sorted(graph.initial_marking.included),
            "pending": sorted(graph.initial_marking.pending),
        },
    }


def _structurally_enabled(graph: DcrGraph, marking: Marking, activity: str) -> bool:
    """Enabledness from inclusion, conditions, and milestones alone."""
    if activity not in marking.included:
        return False
    for src in graph._condition_sources.get(activity, ()):
        if src in marking.included and src not in marking.executed:
            return False
    for src in graph._milestone_sources.get(activity, ()):
        if src in marking.included and src in marking.pending:
            return False
    return True


def enabled(graph: DcrGraph, marking: Marking, activity: str) -> bool:
    """True iff ``activity`` can execute in ``marking``.

    Requires the activity to be included, every included condition
    source executed, and every included milestone source not pending.
    The termination symbol additionally requires an accepting marking.
    """
    if not graph.declares(activity):
        raise DcrError(f"activity {activity!r} is not declared in the graph")
    if not _structurally_enabled(graph, marking, activity):
        return False
    if activity == graph.end_symbol and not is_accepting(marking):
        return False
    return True


def execute(graph: DcrGraph, marking: Marking, activity: str) -> Marking:
    """Execute an enabled activity, returning the successor marking.

    Effects: the activity joins executed and leaves pending; its
    response targets become pending; its exclude targets leave the
    included set and its include targets join it (includes applied
    last, so include wins when one execution does both).
    """
    if not enabled(graph, marking, activity):
        structurally_fine = _structurally_enabled(graph, marking, activity)
        raise ExecutionError(activity, NOT_ACCEPTING if structurally_fine else NOT_ENABLED)
    executed = marking.executed | {activity}
    pending = (marking.pending - {activity}) | graph._response_targets.get(activity, frozenset())
    included = (marking.included - graph._exclude_targets.get(activity, frozenset())) | (
        graph._include_targets.get(activity, frozenset())
    )
    return Marking(executed=executed, included=included, pending=pending)


def is_accepting(marking: Marking) -> bool:
    """True iff no included activity is pending."""
    return not (marking.pending & marking.included)


def replay(
    graph: DcrGraph, activities: Sequence[str], strict: bool = False
) -> Marking | ConformanceVerdict:
    """Fold :func:`execute` over a prefix from the initial marking.

    Returns the reached marking, or a non-conformance verdict at the
    first disabled step. Activities absent from the graph are treated
    as unconstrained no-ops unless ``strict`` is set, in which case
    they make the prefix non-conformant.
    """
    marking = graph.initial_marking
    for i, activity in enumerate(activities):
        if not graph.declares(activity):
            if strict:
                return ConformanceVerdict(False, failing_index=i, reason=NOT_ENABLED)
            continue
        if not enabled(graph, marking, activity):
            return ConformanceVerdict(False, failing_index=i, reason=NOT_ENABLED)
        marking = execute(graph, marking, activity)
    return marking


def simulate_suffix(
    graph: DcrGraph, marking: Marking, suffix: Sequence[str], strict: bool = False
) -> ConformanceVerdict:
    """Check a candidate continuation from a replayed state.

    Every step must be enabled in sequence; the termination symbol is
    not executed, but reaching it requires an accepting marking (plus
    its ordinary enabledness). Undeclared activities follow the same
    lenient/strict policy as :func:`replay`.
    """
    for i, activity in enumerate(suffix):
        if activity == graph.end_symbol:
            if not _structurally_enabled(graph, marking, activity):
                return ConformanceVerdict(False, failing_index=i, reason=NOT_ENABLED)
            if not is_accepting(marking):
                return ConformanceVerdict(False, failing_index=i, reason=NOT_ACCEPTING)
            return CONFORMANT
        if not graph.declares(activity):
            if strict:
                return ConformanceVerdict(False, failing_index=i, reason=NOT_ENABLED)
            continue
        if not enabled(graph, marking, activity):
            return ConformanceVerdict(False, failing_index=i, reason=NOT_ENABLED)
        marking = execute(graph, marking, activity)
    return CONFORMANT
