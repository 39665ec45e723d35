"""Evaluation protocol tests: distances, rates, aggregation, reports."""

import random
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextaction.candidate_index import SuffixRecord
from nextaction.dcr import DcrGraph, Marking, Relation, replay
from nextaction.errors import ConfigError, DataError
from nextaction.evaluation import (
    CSV_COLUMNS,
    EvalCell,
    EvalConfig,
    EvalReport,
    aggregate,
    damerau_levenshtein,
    evaluate,
    evaluate_instances,
    export_report,
    in_time_rate,
    read_report,
)
from nextaction.eventlog import ActivityVocabulary, Event, EventLog, Trace, append_termination
from nextaction.predictor import PredictedSuffix

from oracles import oracle_osa_distance


class RuleModel:
    """Predicts a continuation from a rule over the current activities."""

    def __init__(self, vocab, rule, max_rollout=10):
        self.vocabulary = vocab
        self.max_rollout = max_rollout
        self._rule = rule

    def predict_suffix(self, activities, max_len=None):
        return PredictedSuffix(steps=tuple(self._rule(tuple(activities))))


class FixedIndex:
    def __init__(self, records):
        self._records = list(records)

    def query_knn(self, steps, k):
        return [(r, float(i)) for i, r in enumerate(self._records[:k])]


def _trace(case_id, steps, start="2021-05-03 09:00:00"):
    t0 = datetime.fromisoformat(start)
    events = tuple(
        Event(case_id, a, t0 + timedelta(minutes=10 * i), kpi)
        for i, (a, kpi) in enumerate(steps)
    )
    return append_termination(Trace(case_id, events))


class TestDamerauLevenshtein:
    def test_identity(self):
        assert damerau_levenshtein(["A", "B", "C"], ["A", "B", "C"]) == 0

    def test_adjacent_transposition(self):
        assert damerau_levenshtein(["A", "B"], ["B", "A"]) == 1

    def test_insertion_deletion_substitution(self):
        assert damerau_levenshtein(["A"], ["A", "B"]) == 1
        assert damerau_levenshtein(["A", "B"], ["A"]) == 1
        assert damerau_levenshtein(["A", "B"], ["A", "C"]) == 1

    def test_empty_sides(self):
        assert damerau_levenshtein([], []) == 0
        assert damerau_levenshtein([], ["A", "B"]) == 2
        assert damerau_levenshtein(["A", "B", "C"], []) == 3

    def test_restricted_variant_does_not_edit_twice(self):
        # The unrestricted distance would reach 2 via transpose + insert.
        assert damerau_levenshtein(list("ca"), list("abc")) == 3

    def test_matches_edit_script_oracle(self):
        rng = random.Random(42)
        alphabet = ["a", "b", "c", "d", "e"]
        for _ in range(200):
            a = [rng.choice(alphabet) for _ in range(rng.randint(0, 6))]
            b = [rng.choice(alphabet) for _ in range(rng.randint(0, 6))]
            assert damerau_levenshtein(a, b) == oracle_osa_distance(a, b), (a, b)

    @given(
        st.lists(st.sampled_from("abcd"), max_size=8),
        st.lists(st.sampled_from("abcd"), max_size=8),
    )
    @settings(max_examples=150, deadline=None)
    def test_symmetry_identity_and_bound(self, a, b):
        d = damerau_levenshtein(a, b)
        assert d == damerau_levenshtein(b, a)
        assert d <= max(len(a), len(b))
        assert (d == 0) == (a == b)


class TestInTimeRate:
    def test_half_in_time(self):
        assert in_time_rate([90.0, 110.0], 100.0) == pytest.approx(50.0)

    def test_all_in_time(self):
        assert in_time_rate([10.0, 20.0, 30.0], 100.0) == pytest.approx(100.0)

    def test_boundary_counts_as_in_time(self):
        assert in_time_rate([100.0], 100.0) == pytest.approx(100.0)
        assert in_time_rate([100.0], 100.0, boundary_in_time=False) == pytest.approx(0.0)

    def test_empty_set_is_undefined(self):
        with pytest.raises(DataError):
            in_time_rate([], 100.0)

    @given(
        st.lists(st.floats(0, 1000), min_size=1, max_size=20),
        st.floats(0, 1000),
        st.floats(0, 1000),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_threshold(self, totals, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        assert in_time_rate(totals, lo) <= in_time_rate(totals, hi)


class TestEvalConfig:
    def test_defaults(self):
        config = EvalConfig()
        assert config.k_values == (5, 10, 15)
        assert (config.min_prefix, config.max_prefix) == (2, 12)

    @pytest.mark.parametrize("kwargs", [
        {"k_values": ()},
        {"k_values": (0,)},
        {"k_values": (5, 5)},
        {"min_prefix": 1},
        {"min_prefix": 5, "max_prefix": 4},
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ConfigError):
            EvalConfig(**kwargs)


class TestEvalCell:
    def test_rejects_out_of_range_rate(self):
        with pytest.raises(DataError):
            EvalCell("baseline", 0, 2, 101.0, 0.0, 0.0, 1)


@pytest.fixture
def straight_line():
    """Log, model, and index where predictions reproduce the truth."""
    vocab = ActivityVocabulary.from_activities(["A", "B", "C", "D"])
    path = ("A", "B", "C", "D")
    kpis = {"A": 10.0, "B": 10.0, "C": 10.0, "D": 10.0, "End": 0.0}
    traces = tuple(
        _trace(str(i), [(a, kpis[a]) for a in path]) for i in range(3)
    )
    log = EventLog(traces, vocab)

    def rule(activities):
        remaining = path[len(activities):] + ("End",)
        return [(a, kpis[a]) for a in remaining]

    def record(names):
        return SuffixRecord(
            tuple(vocab.ordinal_of(n) for n in names),
            tuple(kpis[n] for n in names),
            float(sum(kpis[n] for n in names)),
            "hist",
        )

    index = FixedIndex([record(["C", "D", "End"]), record(["D", "End"])])
    return log, RuleModel(vocab, rule), index


class TestEvaluate:
    def test_series_structure(self, straight_line):
        log, model, index = straight_line
        report = evaluate(log, model, index, DcrGraph(["A", "B", "C", "D"]), t=1e9,
                          config=EvalConfig(k_values=(5, 10), max_prefix=3))
        assert report.series() == (("baseline", 0), ("recommender", 5), ("recommender", 10))
        for p in (2, 3):
            assert report.cell("baseline", 0, p).n == 3
            assert report.cell("recommender", 5, p).n == 3

    def test_gate_keeps_recommender_equal_to_baseline(self, straight_line):
        log, model, index = straight_line
        report = evaluate(log, model, index, DcrGraph(["A", "B", "C", "D"]), t=1e9,
                          config=EvalConfig(k_values=(5,), max_prefix=3))
        for p in (2, 3):
            base = report.cell("baseline", 0, p)
            rec = report.cell("recommender", 5, p)
            assert rec.in_time_rate == base.in_time_rate
            assert rec.mean_dl == base.mean_dl == 0.0
            assert rec.n == base.n

    def test_prefixes_longer_than_trace_are_skipped(self, straight_line):
        log, model, index = straight_line
        report = evaluate(log, model, index, DcrGraph(["A", "B", "C", "D"]), t=1e9,
                          config=EvalConfig(k_values=(5,)))
        assert report.cell("baseline", 0, 3).n == 3
        assert report.cell("baseline", 0, 4) is None  # real length 4 is not > 4

    def test_determinism(self, straight_line):
        log, model, index = straight_line
        graph = DcrGraph(["A", "B", "C", "D"])
        config = EvalConfig(k_values=(5,), max_prefix=3)
        assert evaluate(log, model, index, graph, 50.0, config) == \
            evaluate(log, model, index, graph, 50.0, config)

    def test_worker_pool_matches_serial(self, straight_line):
        log, model, index = straight_line
        graph = DcrGraph(["A", "B", "C", "D"])
        config = EvalConfig(k_values=(5,), max_prefix=3)
        serial = evaluate(log, model, index, graph, 50.0, config, workers=1)
        threaded = evaluate(log, model, index, graph, 50.0, config, workers=4)
        assert serial == threaded


@pytest.fixture
def two_variant():
    """Expensive ground truth, cheap historical alternative, t between."""
    names = ["Start", "Detour", "Finish"]
    vocab = ActivityVocabulary.from_activities(names)
    kpis = {"Start": 10.0, "Detour": 40.0, "Finish": 10.0, "End": 0.0}
    expensive = ("Start", "Detour", "Detour", "Finish")
    traces = tuple(
        _trace(str(i), [(a, kpis[a]) for a in expensive]) for i in range(4)
    )
    log = EventLog(traces, vocab)

    def rule(activities):
        if activities[-1] == "Finish":
            return [("End", 0.0)]
        remaining = expensive[len(activities):] + ("End",)
        return [(a, kpis[a]) for a in remaining]

    def record(names_):
        return SuffixRecord(
            tuple(vocab.ordinal_of(n) for n in names_),
            tuple(kpis[n] for n in names_),
            float(sum(kpis[n] for n in names_)),
            "hist",
        )

    index = FixedIndex([record(["Finish", "End"]),
                        record(["Detour", "Finish", "End"])])
    graph = DcrGraph(names, [Relation("response", "Start", "Finish")])
    return log, RuleModel(vocab, rule), index, graph


class TestDirectionalImprovement:
    def test_recommender_beats_baseline_in_time(self, two_variant):
        log, model, index, graph = two_variant
        config = EvalConfig(k_values=(5,), max_prefix=2)
        report = evaluate(log, model, index, graph, t=70.0, config=config)
        base = report.cell("baseline", 0, 2)
        rec = report.cell("recommender", 5, 2)
        assert base.in_time_rate == pytest.approx(0.0)
        assert rec.in_time_rate == pytest.approx(100.0)
        assert base.mean_dl == 0.0  # the model predicts the true suffix

    def test_unattended_completions_replay_conformantly(self, two_variant):
        log, model, index, graph = two_variant
        config = EvalConfig(k_values=(5,), max_prefix=2)
        results = evaluate_instances(log, model, index, graph, 70.0, config)
        checked = 0
        for r in results:
            if r.method != "recommender":
                continue
            assert not any(p in ("fallback-predicted-activity", "intervention")
                           for p in r.decision_paths)
            prefix = log.traces[int(r.case_id)].activities[:r.prefix_size]
            marking = replay(graph, prefix + r.completion)
            assert isinstance(marking, Marking)
            checked += 1
        assert checked == 4

    def test_interventions_are_counted(self, two_variant):
        log, model, index, _ = two_variant
        blocking = DcrGraph(["Start", "Detour", "Finish"],
                            [Relation("condition", "Finish", "Detour")])
        config = EvalConfig(k_values=(5,), max_prefix=2)
        report = evaluate(log, model, index, blocking, t=1.0, config=config)
        assert report.metadata["diagnostics"]["recommender@5"] == {"intervention": 4}
        assert report.cell("recommender", 5, 2).in_time_rate == pytest.approx(0.0)


class TestReportFiles:
    def test_csv_round_trip(self, two_variant, tmp_path):
        log, model, index, graph = two_variant
        report = evaluate(log, model, index, graph, 70.0,
                          EvalConfig(k_values=(5,), max_prefix=2))
        written = export_report(report, tmp_path)
        parsed = read_report(written["csv"])
        assert parsed.cells == report.cells

    def test_json_round_trip(self, two_variant, tmp_path):
        log, model, index, graph = two_variant
        report = evaluate(log, model, index, graph, 70.0,
                          EvalConfig(k_values=(5,), max_prefix=2))
        written = export_report(report, tmp_path)
        parsed = read_report(written["json"])
        assert parsed == report

    def test_csv_column_schema(self, tmp_path):
        report = EvalReport(cells=(), metadata={})
        written = export_report(report, tmp_path, formats=("csv",))
        header = written["csv"].read_text().strip()
        assert header == "method,k,prefix_size,in_time_rate,mean_dl,n,mean_dl_norm"
        assert ",".join(CSV_COLUMNS) == header

    def test_empty_report_is_header_only(self, tmp_path):
        written = export_report(EvalReport(cells=(), metadata={}), tmp_path)
        parsed = read_report(written["csv"])
        assert parsed.cells == ()

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            export_report(EvalReport(cells=(), metadata={}), tmp_path, formats=("xml",))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError):
            read_report(tmp_path / "nope.csv")

    def test_corrupt_header_rejected(self, tmp_path):
        bad = tmp_path / "report.csv"
        bad.write_text("method,k\nbaseline,0\n")
        with pytest.raises(DataError):
            read_report(bad)


class TestAggregate:
    def test_orders_and_counts(self):
        from nextaction.evaluation import InstanceResult

        rows = [
            InstanceResult("1", "recommender", 5, 2, 50.0, True, 1, 0.5, ("X",)),
            InstanceResult("2", "baseline", 0, 2, 120.0, False, 0, 0.0, ("X",)),
            InstanceResult("1", "baseline", 0, 2, 80.0, True, 2, 1.0, ("X",)),
        ]
        cells = aggregate(rows)
        assert [(c.method, c.k, c.n) for c in cells] == [
            ("baseline", 0, 2), ("recommender", 5, 1)]
        assert cells[0].in_time_rate == pytest.approx(50.0)
        assert cells[0].mean_dl == pytest.approx(1.0)
