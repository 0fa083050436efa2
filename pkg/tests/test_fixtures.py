import json
import os

import pytest

from scenario_understanding import TaskSpec, anticipate, decide, derive
from scenario_understanding.dsl import parse_trajectory_log
from scenario_understanding.evaluation import actions_to_tree
from scenario_understanding.fixtures import (
    FILES,
    SCENARIO_IDS,
    emit_fixture,
    fixture_dir,
    read_fixture,
    scenario_spec,
    task_for,
    verify_fixture,
)
from scenario_understanding.schema import anticipation_to_json, context_from_tree, description_to_json, dumps_json


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_packaged_fixture_checksums(sid):
    assert verify_fixture(fixture_dir(sid)) == []


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_emission_reproduces_packaged_files(sid, tmp_path):
    emit_fixture(sid, str(tmp_path))
    for name in list(FILES.values()) + ["manifest.json"]:
        with open(os.path.join(fixture_dir(sid), name), "rb") as a, open(tmp_path / name, "rb") as b:
            assert a.read() == b.read(), name


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_files_are_consistent_with_the_pipeline(sid):
    log = parse_trajectory_log(read_fixture(sid, "trajectory_log"))
    ctx = context_from_tree(json.loads(read_fixture(sid, "context")))
    desc = derive(log, ctx, scenario_id=sid)
    assert description_to_json(desc) == read_fixture(sid, "description")
    ant = anticipate(desc, 6.0, 0.1)
    assert anticipation_to_json(ant) == read_fixture(sid, "anticipation")
    actions = decide(desc, ant, task_for(sid))
    assert dumps_json(actions_to_tree(actions)) == read_fixture(sid, "actions")


def test_tampering_is_detected(tmp_path):
    emit_fixture("scenario1", str(tmp_path))
    with open(tmp_path / "candidate.dsl", "a", encoding="utf-8") as fh:
        fh.write("\n")
    os.remove(tmp_path / "context.json")
    problems = verify_fixture(str(tmp_path))
    assert problems == ["candidate: checksum mismatch for candidate.dsl", "context: missing file context.json"]
    assert verify_fixture(str(tmp_path / "nowhere"))[0].startswith("manifest unreadable")


def test_manifest_contents():
    manifest = json.loads(read_fixture_manifest("scenario2"))
    assert manifest["task"] == "interaction" and manifest["version"] == "v1"
    assert set(manifest["checksums"]) == set(FILES)
    assert any("several seconds" in n for n in manifest["notes"])


def read_fixture_manifest(sid):
    with open(os.path.join(fixture_dir(sid), "manifest.json"), encoding="utf-8") as fh:
        return fh.read()


def test_tasks_and_unknown_ids():
    assert task_for("scenario1") == TaskSpec("decision")
    assert task_for("scenario2") == TaskSpec("interaction")
    with pytest.raises(KeyError):
        scenario_spec("scenario9")


def test_scenario_two_story():
    desc = json.loads(read_fixture("scenario2", "description"))
    cyclist = [a for a in desc["spatial"] if a["element_id"] == "cyclist_1" and a["t"] == 0.0][0]
    assert cyclist["visibility"] == "occluded" and cyclist["occluded_by"] == ["bus_1"]
    car = [a for a in desc["semantic"] if a["element_id"] == "car_1" and a["t"] == 0.0][0]
    assert car["state"] == "yielding" and "mint-green" in car["attributes"]
    bus = [a for a in desc["physical"] if a["element_id"] == "bus_1"][0]
    assert bus["model"] == "kinematic_bicycle"
