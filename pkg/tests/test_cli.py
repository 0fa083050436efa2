import json
import os
import shutil

from scenario_understanding.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, main
from scenario_understanding.config import CONFIG_ENV
from scenario_understanding.fixtures import fixture_path, read_fixture


def run(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    return code, out, err


def test_derive_reproduces_fixture(capsys):
    code, out, _ = run(capsys, "derive", fixture_path("scenario1", "trajectory_log"), fixture_path("scenario1", "context"), "--id", "scenario1")
    assert code == EXIT_OK and out == read_fixture("scenario1", "description")


def test_derive_dsl_output(capsys):
    code, out, _ = run(capsys, "derive", fixture_path("scenario2", "trajectory_log"), fixture_path("scenario2", "context"), "--id", "scenario2", "--format", "dsl")
    assert code == EXIT_OK and out.startswith("[SCENARIO] scenario2\n")


def test_derive_empty_log(capsys, tmp_path):
    log = tmp_path / "empty.csv"
    log.write_text("#ego=ego rate=10\nt,id,class,x,y,z,yaw,speed\n")
    code, out, _ = run(capsys, "derive", str(log))
    assert code == EXIT_OK and json.loads(out)["elements"] == []


def test_predict_reproduces_fixture(capsys, tmp_path):
    out_file = tmp_path / "ant.json"
    code, _, _ = run(capsys, "predict", fixture_path("scenario2", "description"), "--horizon", "6", "--dt", "0.1", "-o", str(out_file))
    assert code == EXIT_OK and out_file.read_text() == read_fixture("scenario2", "anticipation")


def test_predict_finer_step_keeps_reappearance(capsys):
    code, out, _ = run(capsys, "predict", fixture_path("scenario2", "description"), "--dt", "0.05")
    events = [e for e in json.loads(out)["predicted_events"] if e["tag"] == "reappears"]
    assert code == EXIT_OK and events and abs(events[0]["t"] - 2.2) <= 0.1


def test_score_self_and_golden(capsys):
    desc = fixture_path("scenario1", "description")
    code, out, _ = run(capsys, "score", desc, desc, "--format", "json")
    assert code == EXIT_OK and json.loads(out)["aggregate"] == 1.0
    code, out, _ = run(capsys, "score", desc, fixture_path("scenario1", "candidate"), "--gt-anticipation", fixture_path("scenario1", "anticipation"), "--format", "json")
    assert code == EXIT_OK and out == read_fixture("scenario1", "score_report")


def test_score_batch_with_csv(capsys, tmp_path):
    for sid in ("scenario1", "scenario2"):
        shutil.copytree(os.path.dirname(fixture_path(sid, "description")), tmp_path / sid)
    csv_path = tmp_path / "scores.csv"
    code, out, _ = run(capsys, "score", "--dir", str(tmp_path), "--workers", "2", "--csv", str(csv_path))
    assert code == EXIT_OK
    rows = csv_path.read_text().splitlines()
    assert rows[0].startswith("scenario,dimension,precision")
    assert {r.split(",")[0] for r in rows[1:]} == {"scenario1", "scenario2"}


def test_unparseable_candidate_exits_one(capsys, tmp_path):
    bad = tmp_path / "bad.dsl"
    bad.write_text("[FOO] x\n")
    code, _, err = run(capsys, "score", fixture_path("scenario1", "description"), str(bad))
    assert code == EXIT_DOMAIN and "unknown dimension tag" in err


def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", fixture_path("scenario1", "description"))
    assert code == EXIT_OK and out == "valid\n"
    tree = json.loads(read_fixture("scenario1", "description"))
    tree["semantic"][0]["visibility"] = "visible"
    mutant = tmp_path / "mutant.json"
    mutant.write_text(json.dumps(tree))
    code, out, _ = run(capsys, "validate", str(mutant), "--format", "json")
    assert code == EXIT_DOMAIN and json.loads(out)["violations"][0]["code"] == "DIM_PARTITION"


def test_decide(capsys):
    code, out, _ = run(capsys, "decide", fixture_path("scenario2", "description"), fixture_path("scenario2", "anticipation"), "--task", "interaction", "--format", "json")
    assert code == EXIT_OK and out == read_fixture("scenario2", "actions")
    code, _, err = run(capsys, "decide", fixture_path("scenario2", "description"), "--task", "decision")
    assert code == EXIT_DOMAIN and "anticipation" in err


def test_fixtures_command(capsys, tmp_path):
    code, out, _ = run(capsys, "fixtures", "all", str(tmp_path))
    assert code == EXIT_OK and out.count("9 files") == 2
    assert (tmp_path / "scenario1" / "manifest.json").exists()


def test_io_and_usage_errors(capsys, tmp_path):
    assert run(capsys, "derive", str(tmp_path / "missing.csv"))[0] == EXIT_IO
    assert run(capsys, "frobnicate")[0] == EXIT_IO
    assert run(capsys, "score")[0] == EXIT_IO
    assert run(capsys, "score", "--dir", str(tmp_path), "--workers", "0")[0] == EXIT_IO
    bad_log = tmp_path / "bad.csv"
    bad_log.write_text("nope\n")
    code, out, _ = run(capsys, "derive", str(bad_log))
    assert code == EXIT_DOMAIN and json.loads(out)["errors"][0].endswith(":1:1: missing header '#ego=<id> rate=<hz>'")


def test_config_file_and_environment(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"horizon": 2.0}))
    code, out, _ = run(capsys, "config", "--config", str(cfg), "--format", "json")
    assert code == EXIT_OK and json.loads(out)["config"]["horizon"] == 2.0
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    code, out, _ = run(capsys, "predict", fixture_path("scenario1", "description"))
    assert code == EXIT_OK and json.loads(out)["horizon"] == 2.0
    code, out, _ = run(capsys, "predict", fixture_path("scenario1", "description"), "--horizon", "3")
    assert json.loads(out)["horizon"] == 3.0
    cfg.write_text("{not json")
    assert run(capsys, "config")[0] != EXIT_OK


def test_help_exits_zero(capsys):
    try:
        code = main(["--help"])
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_OK and "derive" in capsys.readouterr().out
