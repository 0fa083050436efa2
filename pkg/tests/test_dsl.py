import copy
import json

import numpy as np
import pytest

from generators import random_anticipation, random_description
from test_acceptance import _fuzz_inputs
from scenario_understanding.dsl import (
    format_trajectory_log,
    matrix_to_rpy,
    parse_annotation_text,
    parse_trajectory_log,
    rpy_to_matrix,
    serialize,
)
from scenario_understanding.evaluation import actions_from_tree
from scenario_understanding.fixtures import read_fixture
from scenario_understanding.model import Element, ScenarioDescription, StateSample, yaw_matrix
from scenario_understanding.schema import anticipation_from_tree, canonical, description_from_json, descriptions_close

HEAD = "[SCENARIO] s\n  window: [-6, 0] s\n  ego: ego\n\n"


def _errors(text):
    result = parse_annotation_text(text)
    assert not result.ok and result.description is None
    return [str(e) for e in result.errors]


def test_spatial_block_example():
    result = parse_annotation_text("[SPAT] pedestrian_1 @ t=0.0\n distance_to_ego: 3.42 m\n relation: front_of ego\n")
    assert result.ok
    ann = result.description.spatial[0]
    assert ann.distance_to_ego == 3.42 and ann.topology == [("ego", "front_of")]


def test_empty_document_is_an_empty_candidate():
    result = parse_annotation_text("")
    assert result.ok and not result.errors
    assert result.description.elements == [] and result.description.semantic == []


def test_block_errors_carry_positions():
    assert _errors("[FOO] x\n") == ["1:2: unknown dimension tag 'FOO'"]
    assert _errors(HEAD + "[SPAT] ped @ t=0\n  distance_to_ego: 3 s\n") == ["6:20: unit mismatch: expected m, got s"]
    assert _errors("[SPAT] ped @ t=0\n  distance_to_ego: 3.42\n") == ["2:20: missing unit (expected m)"]
    assert _errors(HEAD + "[SPAT] ped @ t=0\n  relation: front_of ghost\n") == ["6:22: dangling element reference 'ghost'"]
    dup = "[SEM] ped @ t=0\n  class: pedestrian\n  state: walking\n\n"
    assert _errors(dup + dup) == ["5:1: duplicate block for SEM ped (first at line 1)"]
    assert _errors("  class: pedestrian\n") == ["1:1: field outside of a block"]


def test_semantic_blocks_need_a_timestamp():
    assert _errors("[SEM] ped @ t=[-1, 0]\n  class: pedestrian\n  state: walking\n") == ["1:1: [SEM] needs '@ t=<seconds>'"]


def test_unknown_keys_warn_and_are_dropped():
    result = parse_annotation_text("[SEM] ped @ t=0\n  class: pedestrian\n  state: walking\n  colour: red\n")
    assert result.ok
    assert [str(w) for w in result.warnings] == ["4:3: unknown key 'colour' ignored"]
    assert not hasattr(result.description.semantic[0], "colour")


def test_fixture_candidates_parse():
    for sid in ("scenario1", "scenario2"):
        result = parse_annotation_text(read_fixture(sid, "candidate"))
        assert result.ok, result.errors
        assert result.actions


def test_fixture_description_dsl_matches_json():
    for sid in ("scenario1", "scenario2"):
        gt = description_from_json(read_fixture(sid, "description"))
        ant = anticipation_from_tree(json.loads(read_fixture(sid, "anticipation")))
        actions = actions_from_tree(json.loads(read_fixture(sid, "actions")))
        text = read_fixture(sid, "description_dsl")
        assert serialize(gt, ant, actions) == text
        parsed = parse_annotation_text(text)
        assert parsed.ok and descriptions_close(gt, parsed.description)
        assert [a.verb for a in parsed.actions] == [a.verb for a in actions]


def test_minimal_document():
    desc = ScenarioDescription("s", (-1.0, 0.0), "ego")
    assert serialize(desc) == "[SCENARIO] s\nwindow: [-1, 0] s\nego: ego\n"
    one = ScenarioDescription("s", (-1.0, 0.0), "ego", elements=[Element("ego", [StateSample(0.0, (0, 0, 0), yaw_matrix(0), 0.0)])])
    assert serialize(one).count("\n[") == 1


def test_serialize_ignores_list_order():
    rng = np.random.default_rng(4)
    desc = canonical(random_description(rng))
    shuffled = copy.deepcopy(desc)
    shuffled.elements.reverse()
    shuffled.semantic.reverse()
    shuffled.spatial.reverse()
    for ann in shuffled.spatial:
        ann.topology.reverse()
    assert serialize(desc) == serialize(shuffled)


def test_six_significant_digits():
    desc = ScenarioDescription("s", (-1.0, 0.0), "ego", elements=[Element("ego", [StateSample(0.0, (1.23456789, 0, 0), yaw_matrix(0), 0.0)])])
    assert "1.23457" in serialize(desc)


def test_round_trip_generated_documents():
    rng = np.random.default_rng(9)
    for _ in range(150):
        desc = canonical(random_description(rng))
        ant = random_anticipation(rng, desc)
        text = serialize(desc, ant)
        parsed = parse_annotation_text(text)
        assert parsed.ok, parsed.errors[:3]
        assert descriptions_close(desc, parsed.description)
        again = serialize(parsed.description, parsed.anticipation)
        assert again == text
        assert serialize(parse_annotation_text(again).description, parse_annotation_text(again).anticipation) == again


def test_rpy_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        rpy = tuple(rng.uniform(-1.2, 1.2, size=3))
        assert matrix_to_rpy(rpy_to_matrix(rpy)) == pytest.approx(rpy, abs=1e-9)


def test_fuzz_errors_stay_in_bounds():
    import test_acceptance

    rng = np.random.default_rng(21)
    seeds = [serialize(random_description(rng, 2)).splitlines() for _ in range(10)]
    saved = test_acceptance.N_FUZZ
    test_acceptance.N_FUZZ = 3000
    try:
        for text in _fuzz_inputs(rng, seeds):
            result = parse_annotation_text(text)
            lines = text.split("\n")
            for e in result.errors + result.warnings:
                assert 1 <= e.line <= max(1, len(lines)), (text, e)
                assert 1 <= e.column <= len(lines[e.line - 1]) + 1, (text, e)
    finally:
        test_acceptance.N_FUZZ = saved


def test_non_text_input():
    result = parse_annotation_text(b"[SEM]")
    assert not result.ok and result.errors[0].line == 1


# -- trajectory logs ----------------------------------------------------------------

LOG = "#ego=ego rate=10\nt,id,class,x,y,z,yaw,speed\n"


def test_static_element_log():
    text = LOG + "".join(f"{t},box,static_object,1.5,2,0,0,0\n" for t in ("-0.2", "-0.1", "0"))
    log = parse_trajectory_log(text)
    (element,) = log.to_elements()
    assert element.positions().tolist() == [[1.5, 2.0, 0.0]] * 3
    assert log.class_hints() == {"box": "static_object"}


def test_log_errors():
    assert [str(e) for e in parse_trajectory_log("nope")] == ["1:1: missing header '#ego=<id> rate=<hz>'"]
    assert [str(e) for e in parse_trajectory_log("#ego=ego rate=0\n")][0].startswith("1:")
    shuffled = LOG + "0.1,ego,vehicle,0,0,0,0,0\n0,ego,vehicle,0,0,0,0,0\n"
    assert [str(e) for e in parse_trajectory_log(shuffled)] == ["4:1: rows must be sorted by (t, id) without duplicates"]
    short = LOG + "0,ego,vehicle,0,0,0\n"
    assert "expected 8 columns" in str(parse_trajectory_log(short)[0])
    bad = LOG + "0,ego,vehicle,0,0,0,0,x\n"
    assert str(parse_trajectory_log(bad)[0]).startswith("3:")


def test_log_round_trip():
    text = read_fixture("scenario1", "trajectory_log")
    log = parse_trajectory_log(text)
    assert format_trajectory_log(log) == text


def test_log_fuzz_never_raises():
    rng = np.random.default_rng(8)
    base = read_fixture("scenario2", "trajectory_log").splitlines()[:12]
    for _ in range(2000):
        lines = list(base)
        k = int(rng.integers(0, len(lines)))
        pos = int(rng.integers(0, len(lines[k]) + 1))
        lines[k] = lines[k][:pos] + chr(int(rng.integers(0, 200))) + lines[k][pos + 1 :]
        out = parse_trajectory_log("\n".join(lines))
        if isinstance(out, list):
            assert out and all(e.line >= 1 and e.column >= 1 for e in out)
