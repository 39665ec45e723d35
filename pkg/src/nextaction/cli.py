"""Command line entry point: train, evaluate, recommend, serve, demo-data.

Every command works off one declarative config file; a few flags
(--k, --seed, --workers, --out) override it. Exit codes: 0 success,
1 usage or configuration, 2 data, 3 artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .candidate_index import SuffixIndex
from .config import RunConfig, config_hash, load_config
from .datasets import directional_log, helpdesk_log, write_csv
from .dcr import to_document
from .errors import ArtifactError, ConfigError, DataError, NextActionError
from .evaluation import EvalReport, evaluate, export_report
from .eventlog import (
    EventLog,
    LogSchema,
    append_termination,
    build_prediction_samples,
    derive_kpi,
    parse_log,
    split_log,
)
from .figures import render_figures
from .predictor import MultiTaskModel, train
from .recommender import CaseEvent, RunningCase, derive_threshold, recommend_next

logger = logging.getLogger("nextaction.cli")

MODEL_FILE = "model.npz"
INDEX_FILE = "index.npz"
VOCABULARY_FILE = "vocabulary.json"
RUN_META_FILE = "run_meta.json"
META_SCHEMA_VERSION = 1


def _terminate(log: EventLog) -> EventLog:
    traces = tuple(append_termination(t) for t in log.traces)
    return EventLog(traces, log.vocabulary)


def prepare_logs(config: RunConfig) -> tuple[EventLog, EventLog]:
    """Parse, attach KPI values, split, and append terminations."""
    log = parse_log(config.log_path, config.schema)
    traces = tuple(derive_kpi(t, config.kpi_mode) for t in log.traces)
    log = EventLog(traces, log.vocabulary)
    train_raw, test_raw = split_log(log, config.train_fraction, config.seed)
    return _terminate(train_raw), _terminate(test_raw)


def _vocab_hash(vocab_json: str) -> str:
    return hashlib.sha256(vocab_json.encode("utf-8")).hexdigest()[:16]


def cmd_train(config: RunConfig) -> int:
    train_log, test_log = prepare_logs(config)
    samples = build_prediction_samples(train_log)
    model = train(samples, train_log.vocabulary, config.predictor, seed=config.seed)
    index = SuffixIndex.build(train_log, train_log.vocabulary,
                              w_kpi=config.w_kpi, leaf_size=config.leaf_size)
    if config.threshold is not None:
        threshold, origin = config.threshold, "config"
    else:
        threshold, origin = float(derive_threshold(train_log)), "derived-from-log"

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / MODEL_FILE)
    index.save(out / INDEX_FILE)
    vocab_json = train_log.vocabulary.to_json()
    (out / VOCABULARY_FILE).write_text(vocab_json + "\n", encoding="utf-8")
    meta = {
        "schema_version": META_SCHEMA_VERSION,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "threshold": threshold,
        "threshold_origin": origin,
        "k": config.k,
        "n_train_traces": len(train_log),
        "n_test_traces": len(test_log),
        "n_samples": len(samples),
        "vocab_hash": _vocab_hash(vocab_json),
        "epochs_run": len(model.history.get("train_loss", [])),
        "best_epoch": model.history.get("best_epoch"),
    }
    (out / RUN_META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    print(f"trained on {len(train_log)} traces ({len(samples)} samples), "
          f"{meta['epochs_run']} epochs (best {meta['best_epoch']})")
    print(f"threshold {threshold:.2f} ({origin}); vocabulary size "
          f"{train_log.vocabulary.size}")
    print(f"artifacts written to {out}")
    return 0


def _load_artifacts(config: RunConfig):
    out = config.out_dir
    for name in (MODEL_FILE, INDEX_FILE, VOCABULARY_FILE, RUN_META_FILE):
        if not (out / name).is_file():
            raise ArtifactError(f"missing artifact {name} in {out}; run train first")
    model = MultiTaskModel.load(out / MODEL_FILE)
    index = SuffixIndex.load(out / INDEX_FILE)
    vocab_json = (out / VOCABULARY_FILE).read_text(encoding="utf-8").strip()
    meta = json.loads((out / RUN_META_FILE).read_text(encoding="utf-8"))
    if _vocab_hash(vocab_json) != meta.get("vocab_hash"):
        raise ArtifactError("vocabulary file does not match run metadata")
    if vocab_json != model.vocabulary.to_json():
        raise ArtifactError("model was trained with a different vocabulary")
    if meta.get("config_hash") != config_hash(config):
        logger.warning("config differs from the one used at training time")
    threshold = config.threshold if config.threshold is not None else float(meta["threshold"])
    return model, index, config.load_graph(), threshold, meta


def cmd_evaluate(config: RunConfig) -> int:
    model, index, graph, threshold, meta = _load_artifacts(config)
    _, test_log = prepare_logs(config)
    report = evaluate(test_log, model, index, graph, threshold,
                      config.evaluation, workers=config.workers)
    metadata = dict(report.metadata)
    metadata["config_hash"] = config_hash(config)
    metadata["trained_config_hash"] = meta.get("config_hash")
    report = EvalReport(cells=report.cells, metadata=metadata)

    written = export_report(report, config.out_dir)
    figures = render_figures(report, config.out_dir)
    for c in report.cells:
        print(f"{c.method} k={c.k} p={c.prefix_size}: "
              f"in-time {c.in_time_rate:.1f}% dl {c.mean_dl:.3f} (n={c.n})")
    for path in list(written.values()) + figures:
        print(f"wrote {path}")
    return 0


def _read_case(stream) -> RunningCase:
    try:
        payload = json.load(stream)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed case JSON on standard input: {exc}") from None
    if not isinstance(payload, dict) or "events" not in payload:
        raise DataError('case input needs {"events": [{"activity", "kpi"}, ...]}')
    events = []
    for i, raw in enumerate(payload["events"]):
        if not isinstance(raw, dict) or "activity" not in raw:
            raise DataError(f"event #{i} needs an 'activity' field")
        events.append(CaseEvent(str(raw["activity"]), float(raw.get("kpi", 0.0))))
    return RunningCase(str(payload.get("case_id", "stdin")), tuple(events))


def cmd_recommend(config: RunConfig, stream=None) -> int:
    model, index, graph, threshold, _ = _load_artifacts(config)
    case = _read_case(stream if stream is not None else sys.stdin)
    rec = recommend_next(model, index, graph, case, k=config.k, t=threshold)
    print(json.dumps({
        "schema_version": META_SCHEMA_VERSION,
        "case_id": case.case_id,
        "decision_path": rec.decision_path,
        "action": rec.action,
        "projected_suffix": [[a, kpi] for a, kpi in rec.projected_suffix],
        "projected_total_kpi": rec.projected_total_kpi,
        "threshold": threshold,
        "k": config.k,
        "retrieved": rec.retrieved,
        "simulated_out": rec.simulated_out,
    }, indent=2))
    return 0


def cmd_serve(config: RunConfig) -> int:
    import socket

    import uvicorn

    from .service import build_app

    model, index, graph, threshold, meta = _load_artifacts(config)
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        try:
            probe.bind((config.host, config.port))
        except OSError as exc:
            raise ConfigError(f"cannot bind {config.host}:{config.port}: {exc}") from None
    app = build_app(model, index, graph, threshold, k=config.k, meta=meta)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def cmd_demo_data(out_dir: Path, dataset: str, seed: int | None, traces: int | None) -> int:
    generators = {"directional": directional_log, "helpdesk": helpdesk_log}
    if dataset not in generators:
        raise ConfigError(f"unknown dataset {dataset!r}")
    kwargs = {}
    if seed is not None:
        kwargs["seed"] = seed
    if traces is not None:
        kwargs["n_traces" if dataset == "directional" else "n_cases"] = traces
    data = generators[dataset](**kwargs)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(data.log, out_dir / "log.csv")
    (out_dir / "graph.json").write_text(
        json.dumps(to_document(data.graph), indent=2) + "\n", encoding="utf-8")
    if dataset == "directional":
        predictor = {"hidden_size": 24, "epochs": 20, "batch_size": 64}
        evaluation = {"k_values": [5, 10, 15], "min_prefix": 2, "max_prefix": 3}
    else:
        predictor = {"hidden_size": 32, "epochs": 12, "batch_size": 64}
        evaluation = {"k_values": [10], "min_prefix": 2, "max_prefix": 12}
    document = {
        "log": {"path": "log.csv", "kpi_column": "kpi"},
        "graph": {"path": "graph.json"},
        "split": {"train_fraction": 0.667, "seed": 11},
        "predictor": predictor,
        # Retrieval on control flow only; ranking weighs the costs.
        "index": {"w_kpi": 0.0},
        "recommend": {"k": 10, "threshold": data.threshold},
        "evaluation": evaluation,
        "out_dir": "run",
    }
    (out_dir / "config.json").write_text(
        json.dumps(document, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out_dir / 'log.csv'} ({len(data.log)} traces)")
    print(f"wrote {out_dir / 'graph.json'}")
    print(f"wrote {out_dir / 'config.json'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nextaction",
        description="KPI-aware next-best-action recommendations for running process instances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "fit the predictor and build the suffix index"),
        ("evaluate", "score recommendations against the held-out split"),
        ("recommend", "read one case from stdin, print a recommendation"),
        ("serve", "run the HTTP recommendation service"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", type=Path, help="artifact directory override")
    demo = sub.add_parser("demo-data", help="generate a synthetic log, graph, and config")
    demo.add_argument("--out", required=True, type=Path)
    demo.add_argument("--dataset", choices=("directional", "helpdesk"), default="directional")
    demo.add_argument("--seed", type=int)
    demo.add_argument("--traces", type=int)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        if args.command == "demo-data":
            return cmd_demo_data(args.out, args.dataset, args.seed, args.traces)
        overrides = {key: value for key, value in (
            ("k", args.k), ("seed", args.seed), ("workers", args.workers),
            ("out_dir", args.out),
        ) if value is not None}
        config = load_config(args.config, overrides)
        handler = {"train": cmd_train, "evaluate": cmd_evaluate,
                   "recommend": cmd_recommend, "serve": cmd_serve}[args.command]
        return handler(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NextActionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
