"""Declarative run configuration shared by every command.

One JSON document describes a run end to end: where the log lives and
how its columns map, how to split and train, how the index is built,
and what the recommendation and evaluation steps should use. Artifacts
embed a hash of the document so reports can be traced to their config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dcr import DcrGraph, load_asset, parse_dcr
from .errors import ConfigError
from .evaluation import EvalConfig
from .eventlog import KpiMode, LogSchema
from .predictor import TrainConfig

SERVE_DEFAULT_PORT = 8000


@dataclass(frozen=True)
class RunConfig:
    log_path: Path
    schema: LogSchema
    kpi_mode: KpiMode
    graph_path: Path | None
    graph_asset: str | None
    out_dir: Path
    train_fraction: float
    seed: int
    predictor: TrainConfig
    w_kpi: float
    leaf_size: int
    k: int
    threshold: float | None
    recheck_threshold: bool
    evaluation: EvalConfig
    workers: int
    host: str = "127.0.0.1"
    port: int = SERVE_DEFAULT_PORT

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.w_kpi < 0:
            raise ConfigError("w_kpi cannot be negative")
        if self.leaf_size < 1:
            raise ConfigError("leaf_size must be positive")
        if self.threshold is not None and self.threshold <= 0:
            raise ConfigError("threshold must be positive when given")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if not 0 < self.port < 65536:
            raise ConfigError("port out of range")
        if (self.graph_path is None) == (self.graph_asset is None):
            raise ConfigError("exactly one of graph path or graph asset is required")

    def load_graph(self) -> DcrGraph:
        if self.graph_asset is not None:
            return load_asset(self.graph_asset)
        return parse_dcr(self.graph_path)


def _section(document: dict, name: str) -> dict:
    value = document.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(value)


def _take(section: dict, key: str, default):
    return section.pop(key, default)


def _reject_unknown(section: dict, name: str) -> None:
    if section:
        raise ConfigError(f"unknown key(s) in config section {name!r}: {sorted(section)}")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file; referenced paths must exist.

    ``overrides`` maps a handful of flag names (k, seed, workers,
    out_dir) over the document, so command-line switches win.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("config root must be a JSON object")
    overrides = overrides or {}

    log = _section(document, "log")
    log_path = _take(log, "path", None)
    if not log_path:
        raise ConfigError("log.path is required")
    log_path = (path.parent / log_path).resolve()
    if not log_path.is_file():
        raise ConfigError(f"log file not found: {log_path}")
    schema = LogSchema(
        case_id_column=_take(log, "case_id_column", "case_id"),
        activity_column=_take(log, "activity_column", "activity"),
        timestamp_column=_take(log, "timestamp_column", "timestamp"),
        kpi_column=_take(log, "kpi_column", None),
        delimiter=_take(log, "delimiter", ","),
    )
    kpi_mode: KpiMode = _take(log, "kpi_mode", "explicit-column" if schema.kpi_column else "inter-event-duration")
    if kpi_mode not in ("explicit-column", "inter-event-duration"):
        raise ConfigError(f"unknown kpi_mode {kpi_mode!r}")
    if kpi_mode == "explicit-column" and schema.kpi_column is None:
        raise ConfigError("kpi_mode explicit-column needs log.kpi_column")
    _reject_unknown(log, "log")

    graph = _section(document, "graph")
    graph_path = _take(graph, "path", None)
    graph_asset = _take(graph, "asset", None)
    _reject_unknown(graph, "graph")
    if graph_path is not None:
        graph_path = (path.parent / graph_path).resolve()
        if not graph_path.is_file():
            raise ConfigError(f"graph file not found: {graph_path}")

    split = _section(document, "split")
    train_fraction = float(_take(split, "train_fraction", 2 / 3))
    seed = int(overrides.get("seed", _take(split, "seed", 0)))
    _reject_unknown(split, "split")

    predictor_doc = _section(document, "predictor")
    try:
        predictor = TrainConfig(**predictor_doc)
    except TypeError as exc:
        raise ConfigError(f"bad predictor section: {exc}") from None

    index = _section(document, "index")
    w_kpi = float(_take(index, "w_kpi", 1.0))
    leaf_size = int(_take(index, "leaf_size", 16))
    _reject_unknown(index, "index")

    recommend = _section(document, "recommend")
    k = int(overrides.get("k", _take(recommend, "k", 10)))
    threshold = _take(recommend, "threshold", None)
    threshold = float(threshold) if threshold is not None else None
    recheck = bool(_take(recommend, "recheck_threshold", True))
    _reject_unknown(recommend, "recommend")

    eval_doc = _section(document, "evaluation")
    workers = int(overrides.get("workers", _take(eval_doc, "workers", 1)))
    try:
        evaluation = EvalConfig(
            k_values=tuple(_take(eval_doc, "k_values", (5, 10, 15))),
            min_prefix=int(_take(eval_doc, "min_prefix", 2)),
            max_prefix=int(_take(eval_doc, "max_prefix", 12)),
            boundary_in_time=bool(_take(eval_doc, "boundary_in_time", True)),
            recheck_threshold=recheck,
            seed=seed,
        )
    except TypeError as exc:
        raise ConfigError(f"bad evaluation section: {exc}") from None
    _reject_unknown(eval_doc, "evaluation")

    serve = _section(document, "serve")
    host = str(_take(serve, "host", "127.0.0.1"))
    port = int(_take(serve, "port", SERVE_DEFAULT_PORT))
    _reject_unknown(serve, "serve")

    out_dir = Path(overrides.get("out_dir", document.get("out_dir", "run")))
    if not out_dir.is_absolute():
        out_dir = (path.parent / out_dir).resolve()

    known = {"log", "graph", "split", "predictor", "index", "recommend",
             "evaluation", "serve", "out_dir"}
    unknown = set(document) - known
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")

    return RunConfig(
        log_path=log_path,
        schema=schema,
        kpi_mode=kpi_mode,
        graph_path=graph_path,
        graph_asset=graph_asset,
        out_dir=out_dir,
        train_fraction=train_fraction,
        seed=seed,
        predictor=predictor,
        w_kpi=w_kpi,
        leaf_size=leaf_size,
        k=k,
        threshold=threshold,
        recheck_threshold=recheck,
        evaluation=evaluation,
        workers=workers,
        host=host,
        port=port,
    )


def config_hash(config: RunConfig) -> str:
    """Stable short digest of everything that shapes the artifacts.

    Use-time knobs (k, thresholds, evaluation ranges, workers) are
    excluded on purpose: overriding them must not look like a mismatch
    against the artifacts a train run produced.
    """
    payload = {
        "log_path": str(config.log_path),
        "schema": [config.schema.case_id_column, config.schema.activity_column,
                   config.schema.timestamp_column, config.schema.kpi_column,
                   config.schema.delimiter],
        "kpi_mode": config.kpi_mode,
        "graph": str(config.graph_path) if config.graph_path else f"asset:{config.graph_asset}",
        "train_fraction": config.train_fraction,
        "seed": config.seed,
        "predictor": config.predictor.to_json(),
        "index": [config.w_kpi, config.leaf_size],
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()[:16]
