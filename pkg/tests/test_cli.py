"""Command line behaviour: artifacts, reports, stdin cases, exit codes."""

import io
import json

import pytest

from nextaction.cli import (
    INDEX_FILE,
    MODEL_FILE,
    RUN_META_FILE,
    VOCABULARY_FILE,
    main,
)
from nextaction.config import load_config
from nextaction.datasets import directional_log, write_csv
from nextaction.dcr import to_document

ARTIFACTS = (MODEL_FILE, INDEX_FILE, VOCABULARY_FILE, RUN_META_FILE)


def write_workspace(root, n_traces=30):
    data = directional_log(n_traces=n_traces, seed=5)
    write_csv(data.log, root / "log.csv")
    (root / "graph.json").write_text(
        json.dumps(to_document(data.graph)), encoding="utf-8"
    )
    document = {
        "log": {"path": "log.csv", "kpi_column": "kpi"},
        "graph": {"path": "graph.json"},
        "split": {"train_fraction": 0.667, "seed": 11},
        "predictor": {"hidden_size": 8, "epochs": 3, "batch_size": 16},
        "index": {"w_kpi": 0.0},
        "recommend": {"k": 5, "threshold": 85.0},
        "evaluation": {"k_values": [5], "min_prefix": 2, "max_prefix": 3},
        "out_dir": "run",
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(document), encoding="utf-8")
    return config_path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One trained artifact set shared by the read-only command tests."""
    root = tmp_path_factory.mktemp("cli")
    config_path = write_workspace(root)
    assert main(["train", "--config", str(config_path)]) == 0
    return root, config_path


def run_case(monkeypatch, capsys, config_path, events, case_id="c"):
    payload = {"case_id": case_id, "events": events}
    monkeypatch.setattr("sys.stdin", io.StringIO(json.dumps(payload)))
    code = main(["recommend", "--config", str(config_path)])
    captured = capsys.readouterr()
    return code, captured


class TestTrain:
    def test_writes_all_artifacts(self, trained):
        root, _ = trained
        for name in ARTIFACTS:
            assert (root / "run" / name).is_file()

    def test_run_meta_contents(self, trained):
        root, config_path = trained
        meta = json.loads((root / "run" / RUN_META_FILE).read_text("utf-8"))
        int(meta["config_hash"], 16)
        assert len(meta["config_hash"]) == 16
        assert meta["threshold"] == 85.0
        assert meta["threshold_origin"] == "config"
        assert meta["n_train_traces"] + meta["n_test_traces"] == 30
        assert meta["epochs_run"] >= 1
        assert len(meta["vocab_hash"]) == 16

    def test_threshold_derived_when_absent(self, tmp_path, capsys):
        config_path = write_workspace(tmp_path)
        document = json.loads(config_path.read_text("utf-8"))
        del document["recommend"]["threshold"]
        config_path.write_text(json.dumps(document), encoding="utf-8")
        assert main(["train", "--config", str(config_path)]) == 0
        meta = json.loads((tmp_path / "run" / RUN_META_FILE).read_text("utf-8"))
        assert meta["threshold_origin"] == "derived-from-log"
        assert meta["threshold"] > 0


class TestEvaluate:
    def test_report_and_figures(self, trained, capsys):
        root, config_path = trained
        assert main(["evaluate", "--config", str(config_path)]) == 0
        out = root / "run"
        assert (out / "report.csv").is_file()
        assert (out / "report.json").is_file()
        for name in ("eval_in_time_rate.png", "eval_mean_dl.png",
                     "eval_mean_dl_norm.png"):
            assert (out / name).stat().st_size > 0
        header = (out / "report.csv").read_text("utf-8").splitlines()[0]
        assert header == "method,k,prefix_size,in_time_rate,mean_dl,n,mean_dl_norm"
        captured = capsys.readouterr()
        assert "baseline" in captured.out
        assert "recommender" in captured.out

    def test_missing_artifacts_exit_3(self, tmp_path, capsys):
        config_path = write_workspace(tmp_path)
        assert main(["evaluate", "--config", str(config_path)]) == 3
        assert "train first" in capsys.readouterr().err

    def test_tampered_vocabulary_exit_3(self, tmp_path, capsys):
        config_path = write_workspace(tmp_path)
        assert main(["train", "--config", str(config_path)]) == 0
        vocab_path = tmp_path / "run" / VOCABULARY_FILE
        vocab_path.write_text(
            vocab_path.read_text("utf-8").replace("Register", "Enregister"),
            encoding="utf-8",
        )
        assert main(["evaluate", "--config", str(config_path)]) == 3
        assert "vocabulary" in capsys.readouterr().err


class TestRecommend:
    def test_open_case_round_trip(self, trained, monkeypatch, capsys):
        _, config_path = trained
        code, captured = run_case(
            monkeypatch, capsys, config_path,
            [{"activity": "Register", "kpi": 5}, {"activity": "Triage", "kpi": 10}],
        )
        assert code == 0
        payload = json.loads(captured.out)
        assert payload["case_id"] == "c"
        assert payload["threshold"] == 85.0
        assert payload["k"] == 5
        assert payload["decision_path"] in (
            "below-threshold-prediction", "optimized-candidate",
            "fallback-predicted-activity",
        )
        assert payload["action"] == payload["projected_suffix"][0][0]

    def test_single_event_rejected(self, trained, monkeypatch, capsys):
        _, config_path = trained
        code, captured = run_case(
            monkeypatch, capsys, config_path, [{"activity": "Register", "kpi": 5}]
        )
        assert code == 2
        assert "at least 2 events" in captured.err

    def test_terminated_case_rejected(self, trained, monkeypatch, capsys):
        _, config_path = trained
        code, captured = run_case(
            monkeypatch, capsys, config_path,
            [{"activity": "Register", "kpi": 5}, {"activity": "End", "kpi": 0}],
        )
        assert code == 2

    def test_malformed_stdin(self, trained, monkeypatch, capsys):
        _, config_path = trained
        monkeypatch.setattr("sys.stdin", io.StringIO("{oops"))
        assert main(["recommend", "--config", str(config_path)]) == 2
        assert "standard input" in capsys.readouterr().err

    def test_missing_events_key(self, trained, monkeypatch, capsys):
        _, config_path = trained
        monkeypatch.setattr("sys.stdin", io.StringIO('{"case_id": "x"}'))
        assert main(["recommend", "--config", str(config_path)]) == 2


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_invalid_fraction(self, tmp_path, capsys):
        config_path = write_workspace(tmp_path)
        document = json.loads(config_path.read_text("utf-8"))
        document["split"]["train_fraction"] = 2.0
        config_path.write_text(json.dumps(document), encoding="utf-8")
        assert main(["train", "--config", str(config_path)]) == 1

    def test_unknown_command(self, capsys):
        assert main(["transmogrify"]) == 1

    def test_help(self, capsys):
        assert main(["--help"]) == 0
        assert "demo-data" in capsys.readouterr().out


class TestDemoData:
    def test_written_config_loads(self, tmp_path, capsys):
        assert main([
            "demo-data", "--out", str(tmp_path), "--dataset", "directional",
            "--traces", "20", "--seed", "3",
        ]) == 0
        for name in ("log.csv", "graph.json", "config.json"):
            assert (tmp_path / name).is_file()
        config = load_config(tmp_path / "config.json")
        assert config.threshold == 85.0
        assert config.w_kpi == 0.0

    def test_helpdesk_variant(self, tmp_path, capsys):
        assert main([
            "demo-data", "--out", str(tmp_path), "--dataset", "helpdesk",
            "--traces", "40",
        ]) == 0
        config = load_config(tmp_path / "config.json")
        assert config.evaluation.k_values == (10,)
        assert config.threshold > 0

    def test_deterministic_per_seed(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["demo-data", "--out", str(a), "--traces", "20", "--seed", "9"])
        main(["demo-data", "--out", str(b), "--traces", "20", "--seed", "9"])
        assert (a / "log.csv").read_text("utf-8") == (b / "log.csv").read_text("utf-8")


class TestOverrides:
    def test_out_override_redirects_artifacts(self, tmp_path, capsys):
        config_path = write_workspace(tmp_path)
        target = tmp_path / "elsewhere"
        assert main(["train", "--config", str(config_path),
                     "--out", str(target)]) == 0
        assert (target / MODEL_FILE).is_file()
        assert not (tmp_path / "run" / MODEL_FILE).exists()

    def test_k_override_reaches_recommendation(self, trained, monkeypatch, capsys):
        _, config_path = trained
        payload = {"events": [
            {"activity": "Register", "kpi": 5}, {"activity": "Triage", "kpi": 10},
        ]}
        monkeypatch.setattr("sys.stdin", io.StringIO(json.dumps(payload)))
        assert main(["recommend", "--config", str(config_path), "--k", "3"]) == 0
        assert json.loads(capsys.readouterr().out)["k"] == 3
