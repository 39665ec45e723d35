from __future__ import annotations

from datetime import datetime

import pytest

from nextaction.eventlog import Event, Trace


def make_trace(case_id, rows):
    """rows: iterable of (activity, iso timestamp, kpi)."""
    return Trace(
        case_id,
        tuple(Event(case_id, a, datetime.fromisoformat(ts), kpi) for a, ts, kpi in rows),
    )


@pytest.fixture
def loan_trace():
    """Finished 4-event loan-application instance with explicit costs."""
    return make_trace(
        "1",
        [
            ("Create Application", "2011-09-30 16:20:00", 0.0),
            ("Concept", "2011-09-30 17:30:00", 10.0),
            ("Accepted", "2011-09-30 18:50:00", 20.0),
            ("Validating", "2011-09-30 19:10:00", 40.0),
        ],
    )


@pytest.fixture
def running_prefix():
    """Running 2-event instance of the same process, costs 20 + 20."""
    return make_trace(
        "2",
        [
            ("Create Application", "2012-09-30 18:00:00", 20.0),
            ("Concept", "2012-09-30 18:30:00", 20.0),
        ],
    )
