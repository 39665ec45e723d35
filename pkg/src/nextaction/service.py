"""HTTP API for steering live cases.

Artifacts (model, index, graph) are loaded once and shared read-only;
every response that depends on them is a pure function of the stored
case prefix, so concurrent readers need no coordination. Mutation is
serialized per case. An optional append-only journal replays the
store after a restart.

Error bodies are ``{"error": {"code", "message"}, "schema_version"}``
with machine-readable codes; clients branch on the code, never the
message text.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .candidate_index import SuffixIndex
from .dcr import DcrGraph, Marking, enabled, is_accepting, replay, simulate_suffix
from .errors import BoundsError, DataError, NextActionError, StateError
from .eventlog import END_SYMBOL
from .recommender import CaseEvent, Recommendation, RunningCase, recommend_next

SERVICE_SCHEMA_VERSION = 1


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _unknown_case(case_id: str) -> ApiError:
    return ApiError(404, "unknown-case", f"no case with id {case_id!r}")


class CreateCaseBody(BaseModel):
    case_id: str | None = None


class EventBody(BaseModel):
    activity: str
    kpi: float = 0.0
    timestamp: str | None = None


class WhatIfBody(BaseModel):
    events: list[EventBody]
    k: int | None = None


@dataclass
class CaseSession:
    """One running case plus everything derived from its prefix."""

    case: RunningCase
    created_at: str
    updated_at: str
    history: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _parse_event(body: EventBody) -> CaseEvent:
    timestamp = None
    if body.timestamp is not None:
        try:
            timestamp = datetime.fromisoformat(body.timestamp)
        except ValueError:
            raise ApiError(422, "invalid-events",
                           f"timestamp {body.timestamp!r} is not ISO 8601") from None
    try:
        return CaseEvent(body.activity, body.kpi, timestamp)
    except DataError as exc:
        raise ApiError(422, "invalid-events", str(exc)) from None


def _event_payload(event: CaseEvent) -> dict:
    return {
        "activity": event.activity,
        "kpi": event.kpi,
        "timestamp": event.timestamp.isoformat(sep=" ") if event.timestamp else None,
    }


def _recommendation_payload(case: RunningCase, rec: Recommendation,
                            threshold: float, k: int) -> dict:
    return {
        "schema_version": SERVICE_SCHEMA_VERSION,
        "case_id": case.case_id,
        "decision_path": rec.decision_path,
        "action": rec.action,
        "projected_suffix": [[a, kpi] for a, kpi in rec.projected_suffix],
        "projected_total_kpi": rec.projected_total_kpi,
        "threshold": threshold,
        "k": k,
        "retrieved": rec.retrieved,
        "simulated_out": rec.simulated_out,
    }


class CaseStore:
    """In-memory sessions keyed by case id; per-case serialized mutation."""

    def __init__(self, journal_path: Path | None = None):
        self._sessions: dict[str, CaseSession] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._journal_path = journal_path
        self._journal_lock = threading.Lock()
        if journal_path is not None and journal_path.is_file():
            self._recover(journal_path)

    def _recover(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry["op"] == "create":
                self._sessions[entry["case_id"]] = CaseSession(
                    case=RunningCase(entry["case_id"]),
                    created_at=entry["at"], updated_at=entry["at"],
                )
            else:
                session = self._sessions[entry["case_id"]]
                session.case = session.case.append(
                    entry["activity"], entry["kpi"],
                    datetime.fromisoformat(entry["timestamp"]) if entry["timestamp"] else None,
                )
                session.updated_at = entry["at"]

    def _journal(self, entry: dict) -> None:
        if self._journal_path is None:
            return
        with self._journal_lock:
            with self._journal_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")

    def create(self, case_id: str | None) -> CaseSession:
        with self._lock:
            if case_id is None:
                self._counter += 1
                case_id = f"case-{self._counter}"
                while case_id in self._sessions:
                    self._counter += 1
                    case_id = f"case-{self._counter}"
            elif case_id in self._sessions:
                raise ApiError(409, "case-exists", f"case {case_id!r} already exists")
            at = _now()
            session = CaseSession(case=RunningCase(case_id), created_at=at, updated_at=at)
            self._sessions[case_id] = session
        self._journal({"op": "create", "case_id": case_id, "at": at})
        return session

    def get(self, case_id: str) -> CaseSession:
        with self._lock:
            try:
                return self._sessions[case_id]
            except KeyError:
                raise _unknown_case(case_id) from None

    def append(self, case_id: str, event: CaseEvent) -> CaseSession:
        session = self.get(case_id)
        with session.lock:
            try:
                session.case = session.case.append(event.activity, event.kpi, event.timestamp)
            except StateError:
                raise ApiError(409, "case-terminated",
                               f"case {case_id!r} is terminated") from None
            except DataError as exc:
                raise ApiError(422, "invalid-events", str(exc)) from None
            session.updated_at = _now()
            self._journal({
                "op": "event", "case_id": case_id, "activity": event.activity,
                "kpi": event.kpi,
                "timestamp": event.timestamp.isoformat() if event.timestamp else None,
                "at": session.updated_at,
            })
        return session


def build_app(
    model,
    index: SuffixIndex,
    graph: DcrGraph,
    threshold: float,
    k: int = 10,
    meta: dict | None = None,
    strict: bool = False,
    journal_path: Path | None = None,
) -> FastAPI:
    threshold = float(threshold)
    default_k = k
    vocabulary = model.vocabulary
    store = CaseStore(journal_path)
    app = FastAPI(title="nextaction", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"schema_version": SERVICE_SCHEMA_VERSION,
                     "error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"schema_version": SERVICE_SCHEMA_VERSION,
                     "error": {"code": "validation", "message": str(exc.errors())}},
        )

    @app.exception_handler(NextActionError)
    async def handle_domain_error(request: Request, exc: NextActionError):
        return JSONResponse(
            status_code=500,
            content={"schema_version": SERVICE_SCHEMA_VERSION,
                     "error": {"code": "internal", "message": str(exc)}},
        )

    def snapshot(session: CaseSession) -> dict:
        case = session.case
        replayed = replay(graph, case.activities)
        conformant = isinstance(replayed, Marking)
        payload = {
            "schema_version": SERVICE_SCHEMA_VERSION,
            "case_id": case.case_id,
            "status": "open" if case.is_open else "terminated",
            "events": [_event_payload(e) for e in case.events],
            "total_kpi": case.total_kpi,
            "conformant": conformant,
            "unknown_activities": sorted(
                {a for a in case.activities if a not in vocabulary}
            ),
            "n_recommendations": len(session.history),
            "created_at": session.created_at,
            "updated_at": session.updated_at,
        }
        if conformant:
            payload["marking"] = {
                "executed": sorted(replayed.executed),
                "included": sorted(replayed.included),
                "pending": sorted(replayed.pending),
            }
            payload["accepting"] = is_accepting(replayed)
            payload["enabled"] = sorted(
                a for a in graph.activities
                if case.is_open and enabled(graph, replayed, a)
            )
        else:
            payload["marking"] = None
            payload["accepting"] = False
            payload["enabled"] = []
            payload["non_conformance"] = {
                "failing_index": replayed.failing_index,
                "reason": replayed.reason,
            }
        return payload

    def check_known(activity: str) -> None:
        if strict and activity not in vocabulary:
            raise ApiError(422, "unknown-activity",
                           f"activity {activity!r} is not in the vocabulary")

    def recommend_for(case: RunningCase, chosen_k: int) -> dict:
        if chosen_k < 1:
            raise ApiError(422, "validation", "k must be positive")
        try:
            rec = recommend_next(model, index, graph, case, k=chosen_k, t=threshold)
        except BoundsError as exc:
            raise ApiError(422, "prefix-too-short", str(exc)) from None
        except StateError as exc:
            raise ApiError(409, "case-terminated", str(exc)) from None
        return _recommendation_payload(case, rec, threshold, chosen_k)

    @app.get("/health")
    async def health():
        return {"schema_version": SERVICE_SCHEMA_VERSION, "status": "ok"}

    @app.get("/meta")
    async def meta_endpoint():
        return {
            "schema_version": SERVICE_SCHEMA_VERSION,
            "threshold": threshold,
            "k": default_k,
            "vocabulary": list(vocabulary.activities),
            "end_symbol": END_SYMBOL,
            "strict": strict,
            "artifacts": dict(meta or {}),
        }

    @app.post("/cases", status_code=201)
    async def create_case(body: CreateCaseBody):
        return snapshot(store.create(body.case_id))

    @app.get("/cases/{case_id}")
    async def get_case(case_id: str):
        return snapshot(store.get(case_id))

    @app.post("/cases/{case_id}/events")
    async def append_event(case_id: str, body: EventBody):
        check_known(body.activity)
        return snapshot(store.append(case_id, _parse_event(body)))

    @app.get("/cases/{case_id}/recommendation")
    async def get_recommendation(case_id: str, k: int | None = None):
        session = store.get(case_id)
        with session.lock:
            payload = recommend_for(session.case, k if k is not None else default_k)
            session.history.append(payload)
            session.updated_at = _now()
        return payload

    @app.post("/cases/{case_id}/what-if")
    async def what_if(case_id: str, body: WhatIfBody):
        session = store.get(case_id)
        for event in body.events:
            check_known(event.activity)
        hypothetical_events = tuple(_parse_event(e) for e in body.events)
        with session.lock:
            base = session.case
        try:
            combined = RunningCase(
                base.case_id, base.events + hypothetical_events
            )
        except (DataError, StateError) as exc:
            raise ApiError(422, "invalid-events", str(exc)) from None
        verdict = simulate_suffix(graph, graph.initial_marking, combined.activities)
        payload = {
            "schema_version": SERVICE_SCHEMA_VERSION,
            "case_id": case_id,
            "hypothetical": [_event_payload(e) for e in hypothetical_events],
            "conformant": verdict.conformant,
            "projected_total_kpi": combined.total_kpi,
            "recommendation": None,
        }
        if not verdict.conformant:
            payload["non_conformance"] = {
                "failing_index": verdict.failing_index,
                "reason": verdict.reason,
            }
        if combined.is_open and len(combined) >= 2:
            payload["recommendation"] = recommend_for(
                combined, body.k if body.k is not None else default_k
            )
        return payload

    return app
