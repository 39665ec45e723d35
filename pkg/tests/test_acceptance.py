"""Acceptance gate: the headline product criteria, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL
line per criterion alongside the assertions. The heavy end-to-end
criteria (directional gain, helpdesk smoke) train real models and take
a few minutes combined; their stated runtime budgets are asserted.
"""

import itertools
import random
import time

import numpy as np
import pytest

from oracles import (
    oracle_enabled,
    oracle_execute,
    oracle_knn,
    oracle_marking,
    oracle_osa_distance,
)

from nextaction.candidate_index import BallTree, SuffixIndex, SuffixRecord
from nextaction.datasets import directional_log, helpdesk_log
from nextaction.dcr import (
    DcrGraph,
    Marking,
    Relation,
    enabled,
    execute,
    is_accepting,
    replay,
)
from nextaction.evaluation import (
    BASELINE,
    RECOMMENDER,
    EvalConfig,
    aggregate,
    damerau_levenshtein,
    evaluate_instances,
)
from nextaction.eventlog import (
    ActivityVocabulary,
    EventLog,
    append_termination,
    build_prediction_samples,
    encode_activities,
    split_log,
)
from nextaction.predictor import (
    PredictedSuffix,
    TrainConfig,
    compute_gradients,
    init_params,
    train,
)
from nextaction.recommender import CaseEvent, RunningCase, apply_action, recommend_next


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


# --- DCR semantics against a rule-interpretation oracle ----------------


RELATION_TYPES = ("condition", "response", "include", "exclude", "milestone")


def _relation_space(activities):
    symbols = [*activities, "End"]
    return [
        Relation(rel_type, source, target)
        for rel_type in RELATION_TYPES
        for source in symbols
        for target in symbols
    ]


def _graph_family():
    """Exhaustive where tractable, seeded samples for the larger spaces."""
    rng = random.Random(2024)
    two = _relation_space(("a", "b"))
    for size in (0, 1):
        for rels in itertools.combinations(two, size):
            yield ("a", "b"), rels
    for rels in itertools.combinations(two, 2):
        yield ("a", "b"), rels

    three = _relation_space(("a", "b", "c"))
    for rel in three:
        yield ("a", "b", "c"), (rel,)
    for _ in range(400):
        size = rng.randint(2, 6)
        yield ("a", "b", "c"), tuple(rng.sample(three, size))

    four = _relation_space(("a", "b", "c", "d"))
    for _ in range(400):
        size = rng.randint(1, 6)
        yield ("a", "b", "c", "d"), tuple(rng.sample(four, size))


def _compare_reachable(graph, oracle_graph, depth):
    """Walk all executable sequences up to ``depth``, comparing behaviour."""
    symbols = sorted(graph.activities)
    disagreements = 0
    checks = 0
    stack = [(graph.initial_marking, oracle_marking(oracle_graph), 0)]
    while stack:
        marking, oracle_mark, level = stack.pop()
        checks += 1
        accepting = is_accepting(marking)
        oracle_accepting = not (oracle_mark[2] & oracle_mark[1])
        if accepting != oracle_accepting:
            disagreements += 1
            continue
        for activity in symbols:
            can = enabled(graph, marking, activity)
            oracle_can = oracle_enabled(oracle_graph, oracle_mark, activity)
            if can != oracle_can:
                disagreements += 1
                continue
            if not can or level >= depth:
                continue
            nxt = execute(graph, marking, activity)
            o_exec, o_incl, o_pend = oracle_execute(oracle_graph, oracle_mark, activity)
            if (set(nxt.executed), set(nxt.included), set(nxt.pending)) != (
                o_exec, o_incl, o_pend
            ):
                disagreements += 1
                continue
            stack.append((nxt, (o_exec, o_incl, o_pend), level + 1))
    return checks, disagreements


def test_dcr_semantics_oracle():
    started = time.perf_counter()
    graphs = 0
    markings = 0
    disagreements = 0
    for activities, relations in _graph_family():
        graph = DcrGraph(activities, relations)
        oracle_graph = {
            "activities": list(activities),
            "relations": [
                {"type": r.type, "source": r.source, "target": r.target}
                for r in relations
            ],
        }
        checked, bad = _compare_reachable(graph, oracle_graph, depth=5)
        graphs += 1
        markings += checked
        disagreements += bad
    elapsed = time.perf_counter() - started
    report(
        "dcr-semantics-oracle",
        disagreements == 0 and elapsed < 60.0,
        f"{graphs} graphs, {markings} reachable markings, "
        f"{disagreements} disagreements ({elapsed:.1f}s, budget 60s)",
    )


# --- Ball tree exactness ------------------------------------------------


def test_ball_tree_exactness():
    started = time.perf_counter()
    rng = np.random.default_rng(7)
    vectors = np.round(rng.normal(size=(500, 12)), 1)
    vectors[480:] = vectors[:20]  # exact duplicates force index tie-breaks
    tree = BallTree(vectors, leaf_size=8)
    queries = np.round(rng.normal(size=(100, 12)), 1)
    queries[90:] = vectors[40:50]  # zero-distance hits
    mismatches = 0
    for k in (5, 10, 15):
        for q in queries:
            distances, indices = tree.query(q, k)
            expected = oracle_knn(vectors, q, k)
            got = [(int(i), float(d)) for d, i in zip(distances, indices)]
            want = [(i, pytest.approx(d)) for i, d in expected]
            if got != want:
                mismatches += 1
    elapsed = time.perf_counter() - started
    report(
        "ball-tree-exactness",
        mismatches == 0 and elapsed < 10.0,
        f"300 queries over 500 points with duplicates, {mismatches} mismatches "
        f"({elapsed:.1f}s, budget 10s)",
    )


# --- Gradient check -----------------------------------------------------


def test_predictor_gradient_check():
    rng = np.random.default_rng(4)
    vocab = ActivityVocabulary.from_activities(["A", "B"])
    params = init_params(vocab.size, 4, rng)
    x = np.stack([
        encode_activities(["A", "B", "A"], vocab),
        encode_activities(["B", "B", "A"], vocab),
        encode_activities(["A", "A", "B"], vocab),
    ])
    label_idx = np.array([
        vocab.onehot_column("B"), vocab.onehot_column("End"), vocab.onehot_column("A"),
    ])
    label_kpi = np.array([0.4, -1.2, 0.9])
    eps = 1e-5
    _, grads = compute_gradients(params, x, label_idx, label_kpi, 1.0)
    worst_by_tensor = {}
    for name, tensor in params.items():
        fd = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = tensor[idx]
            tensor[idx] = saved + eps
            up, _ = compute_gradients(params, x, label_idx, label_kpi, 1.0)
            tensor[idx] = saved - eps
            down, _ = compute_gradients(params, x, label_idx, label_kpi, 1.0)
            tensor[idx] = saved
            fd[idx] = (up - down) / (2 * eps)
        analytic = grads[name]
        worst_by_tensor[name] = float(
            np.linalg.norm(fd - analytic)
            / max(np.linalg.norm(fd), np.linalg.norm(analytic), 1e-12)
        )
    worst = max(worst_by_tensor.values())
    report(
        "predictor-gradient-check",
        worst < 1e-4,
        f"max per-tensor relative error {worst:.2e} over "
        f"{len(worst_by_tensor)} tensors (tolerance 1e-4)",
    )


# --- Edit distance oracle -----------------------------------------------


def test_edit_distance_oracle():
    rng = random.Random(99)
    alphabet = "abcde"
    pairs = [
        (
            "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 6))),
            "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 6))),
        )
        for _ in range(200)
    ]
    mismatches = sum(
        damerau_levenshtein(a, b) != oracle_osa_distance(a, b) for a, b in pairs
    )
    asymmetries = sum(
        damerau_levenshtein(a, b) != damerau_levenshtein(b, a) for a, b in pairs
    )
    identities = sum(
        damerau_levenshtein(s, s) != 0 for pair in pairs for s in pair
    )
    report(
        "edit-distance-oracle",
        mismatches == 0 and asymmetries == 0 and identities == 0,
        f"200 pairs: {mismatches} oracle mismatches, {asymmetries} symmetry "
        f"violations, {identities} identity violations",
    )


# --- Worked example -----------------------------------------------------


class _FixedModel:
    def __init__(self, vocab, steps):
        self.vocabulary = vocab
        self.max_rollout = 10
        self._steps = tuple(steps)

    def predict_suffix(self, activities, max_len=None):
        return PredictedSuffix(steps=self._steps)


class _FixedIndex:
    def __init__(self, records):
        self._records = list(records)

    def query_knn(self, steps, k):
        return [(r, float(i)) for i, r in enumerate(self._records[:k])]


def test_worked_example_update():
    vocab = ActivityVocabulary.from_activities(
        ["Create Application", "Concept", "Accepted", "Validating"]
    )
    case = RunningCase(
        "2", (CaseEvent("Create Application", 20.0), CaseEvent("Concept", 20.0))
    )
    model = _FixedModel(
        vocab, [("Accepted", 20.0), ("Validating", 40.0), ("End", 10.0)]
    )

    def record(names, kpis):
        ordinals = tuple(vocab.ordinal_of(n) for n in names)
        return SuffixRecord(ordinals, tuple(kpis), float(sum(kpis)), "h")

    index = _FixedIndex([
        record(["End"], [10.0]),
        record(["Accepted", "Validating", "End"], [20.0, 40.0, 10.0]),
        record(["Validating", "Accepted", "Validating", "End"],
               [20.0, 10.0, 10.0, 10.0]),
    ])
    graph = DcrGraph(
        ["Create Application", "Concept", "Accepted", "Validating"],
        [Relation("response", "Concept", "Validating")],
    )

    predicted_total = case.total_kpi + sum(k for _, k in model._steps)
    rec = recommend_next(model, index, graph, case, k=3, t=100.0)
    updated = apply_action(case, rec)
    ok = (
        predicted_total == 110.0
        and rec.decision_path == "optimized-candidate"
        and rec.action == "Validating"
        and rec.projected_suffix[0] == ("Validating", 20.0)
        and rec.projected_total_kpi == 90.0
        and rec.retrieved == 3
        and rec.simulated_out == 1
        and updated.activities[-1] == "Validating"
        and updated.kpi_values[-1] == 20.0
    )
    report(
        "worked-example-update",
        ok,
        f"prediction total {predicted_total:.0f}, cheapest candidate 50 simulated "
        f"out, chose {rec.action!r} (kpi {rec.projected_suffix[0][1]:.0f}) with "
        f"total {rec.projected_total_kpi:.0f}",
    )


# --- Threshold-gate identity --------------------------------------------


def _train_pipeline(dataset, train_config, seed):
    train_raw, test_raw = split_log(dataset.log, 2 / 3, seed)
    train_log = EventLog(
        tuple(append_termination(t) for t in train_raw.traces), train_raw.vocabulary
    )
    test_log = EventLog(
        tuple(append_termination(t) for t in test_raw.traces), test_raw.vocabulary
    )
    model = train(
        build_prediction_samples(train_log), train_log.vocabulary, train_config,
        seed=seed,
    )
    index = SuffixIndex.build(train_log, train_log.vocabulary, w_kpi=0.0)
    return model, index, test_log


def test_threshold_gate_identity():
    dataset = directional_log(n_traces=60, seed=3)
    model, index, test_log = _train_pipeline(
        dataset, TrainConfig(hidden_size=8, epochs=3, batch_size=32), seed=3
    )
    config = EvalConfig(k_values=(5,), min_prefix=2, max_prefix=3)
    never_exceeded = 1e9  # every projected total stays under the threshold
    results = evaluate_instances(
        test_log, model, index, dataset.graph, never_exceeded, config
    )
    by_key = {}
    for r in results:
        by_key[(r.method, r.case_id, r.prefix_size)] = r
    differing = 0
    compared = 0
    for (method, case_id, p), r in by_key.items():
        if method != RECOMMENDER:
            continue
        base = by_key[(BASELINE, case_id, p)]
        compared += 1
        if (r.total_kpi, r.in_time, r.dl, r.dl_norm, r.completion) != (
            base.total_kpi, base.in_time, base.dl, base.dl_norm, base.completion
        ):
            differing += 1
    cells = aggregate(results)
    rows = {
        (c.method, c.prefix_size): (c.in_time_rate, c.mean_dl, c.mean_dl_norm, c.n)
        for c in cells
    }
    row_mismatch = sum(
        rows[(RECOMMENDER, p)] != rows[(BASELINE, p)]
        for method, p in rows if method == RECOMMENDER
    )
    report(
        "threshold-gate-identity",
        compared > 0 and differing == 0 and row_mismatch == 0,
        f"{compared} instances under a never-exceeded threshold: "
        f"{differing} per-instance deviations, {row_mismatch} report row mismatches",
    )


# --- Directional end-to-end gain ----------------------------------------


def test_directional_in_time_gain():
    started = time.perf_counter()
    dataset = directional_log(n_traces=300, seed=11)
    model, index, test_log = _train_pipeline(
        dataset, TrainConfig(hidden_size=24, epochs=20, batch_size=64), seed=11
    )
    config = EvalConfig(k_values=(5, 10, 15), min_prefix=2, max_prefix=3)
    results = evaluate_instances(
        test_log, model, index, dataset.graph, dataset.threshold, config
    )
    elapsed = time.perf_counter() - started

    base = [r for r in results if r.method == BASELINE]
    base_rate = 100.0 * sum(r.in_time for r in base) / len(base)
    base_by_key = {(r.case_id, r.prefix_size): r for r in base}

    lines = []
    ok = elapsed < 600.0
    for k in config.k_values:
        rec = [r for r in results if r.method == RECOMMENDER and r.k == k]
        rec_rate = 100.0 * sum(r.in_time for r in rec) / len(rec)
        both_over = [
            (r, base_by_key[(r.case_id, r.prefix_size)])
            for r in rec
            if r.total_kpi > dataset.threshold
            and base_by_key[(r.case_id, r.prefix_size)].total_kpi > dataset.threshold
        ]
        if both_over:
            rec_dl = sum(r.dl for r, _ in both_over) / len(both_over)
            base_dl = sum(b.dl for _, b in both_over) / len(both_over)
            dl_ok = rec_dl <= base_dl
            dl_note = f"dl {rec_dl:.2f}<={base_dl:.2f} on {len(both_over)} over-threshold"
        else:
            dl_ok = True
            dl_note = "no prefixes where both exceed t"
        gain_ok = rec_rate >= base_rate + 20.0
        ok = ok and gain_ok and dl_ok
        lines.append(f"k={k}: {rec_rate:.0f}% vs {base_rate:.0f}% (+{rec_rate - base_rate:.0f}pp), {dl_note}")
    report(
        "directional-in-time-gain",
        ok,
        "; ".join(lines) + f" ({elapsed:.0f}s, budget 600s)",
    )


# --- Helpdesk-style smoke run -------------------------------------------


def test_helpdesk_smoke_run():
    started = time.perf_counter()
    dataset = helpdesk_log(n_cases=600, seed=19)
    model, index, test_log = _train_pipeline(
        dataset, TrainConfig(hidden_size=32, epochs=12, batch_size=64), seed=19
    )
    config = EvalConfig(k_values=(10,), min_prefix=2, max_prefix=12)
    results = evaluate_instances(
        test_log, model, index, dataset.graph, dataset.threshold, config,
        workers=2,
    )
    elapsed = time.perf_counter() - started

    cells = aggregate(results)
    traces = {t.case_id: t for t in test_log.traces}
    applicable = {
        p for p in range(2, 13)
        if any(len([a for a in t.activities if a != "End"]) > p
               for t in test_log.traces)
    }
    have = {(c.method, c.prefix_size) for c in cells}
    missing = [
        (method, p)
        for p in sorted(applicable)
        for method in (BASELINE, RECOMMENDER)
        if (method, p) not in have
    ]
    thin = [c for c in cells if c.n < 1]

    nonconformant = 0
    optimized = 0
    for r in results:
        if r.method != RECOMMENDER or "optimized-candidate" not in r.decision_paths:
            continue
        optimized += 1
        prefix = traces[r.case_id].activities[: r.prefix_size]
        if not isinstance(replay(dataset.graph, prefix + r.completion), Marking):
            nonconformant += 1

    ok = (
        elapsed < 3600.0
        and not missing
        and not thin
        and optimized > 0
        and nonconformant == 0
    )
    report(
        "helpdesk-smoke-run",
        ok,
        f"{len(cells)} cells over prefixes {min(applicable)}..{max(applicable)}, "
        f"missing {len(missing)}, {optimized} optimized completions with "
        f"{nonconformant} replay failures ({elapsed:.0f}s, budget 3600s)",
    )
