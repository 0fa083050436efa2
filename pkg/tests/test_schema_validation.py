import copy
import json

import numpy as np
import pytest

from generators import random_description
from scenario_understanding.dsl import parse_annotation_text, serialize
from scenario_understanding.fixtures import SCENARIO_IDS, read_fixture
from scenario_understanding.model import SemanticAnnotation
from scenario_understanding.schema import (
    PAYLOAD_KEYS,
    SchemaError,
    canonical,
    description_from_json,
    description_from_tree,
    description_to_json,
    description_to_tree,
)
from scenario_understanding.validation import dimension_partition_check, schemas_disjoint, validate_description


@pytest.fixture(scope="module")
def tree():
    return json.loads(read_fixture("scenario1", "description"))


def _codes(tree, mutate):
    t = copy.deepcopy(tree)
    mutate(t)
    return validate_description(t).codes()


def test_fixture_descriptions_are_valid_and_round_trip():
    for sid in SCENARIO_IDS:
        text = read_fixture(sid, "description")
        desc = description_from_json(text)
        assert validate_description(desc).ok
        assert validate_description(json.loads(text)).ok
        assert description_to_json(desc) == text


def test_payload_schemas_are_disjoint():
    assert schemas_disjoint()
    assert not (PAYLOAD_KEYS["semantic"] & PAYLOAD_KEYS["spatial"])


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda t: t["semantic"][0].__setitem__("visibility", "visible"), "DIM_PARTITION"),
        (lambda t: t["spatial"][0].__setitem__("state", "moving"), "DIM_PARTITION"),
        (lambda t: t["temporal"][0].__setitem__("class", "vehicle"), "DIM_PARTITION"),
        (lambda t: t["semantic"][0].__setitem__("interval", [-1.0, 0.0]), "TIME_KIND"),
        (lambda t: t["physical"][0].__setitem__("t", 0.0), "TIME_KIND"),
        (lambda t: t["semantic"][0].__setitem__("class", "spaceship"), "VOCAB"),
        (lambda t: t["semantic"][0].__setitem__("state", "flying"), "VOCAB"),
        (lambda t: t["spatial"][1].__setitem__("distance_to_ego", -1.0), "RANGE"),
        (lambda t: t["spatial"][1].__setitem__("topology", [["ghost", "near"]]), "DANGLING_REF"),
        (lambda t: t["spatial"][1].__setitem__("topology", [[t["spatial"][1]["element_id"], "near"]]), "SELF_RELATION"),
        (lambda t: t.__setitem__("window", [-6.0, 1.0]), "WINDOW"),
        (lambda t: t["semantic"][0].__setitem__("colour", "red"), "UNKNOWN_FIELD"),
        (lambda t: t.__setitem__("bogus", 1), "UNKNOWN_FIELD"),
        (lambda t: t["spatial"][0].__setitem__("orientation", [[2, 0, 0], [0, 1, 0], [0, 0, 1]]), "ROTATION"),
        (lambda t: t["semantic"].append(copy.deepcopy(t["semantic"][0])), "DUPLICATE"),
    ],
)
def test_mutants_are_rejected(tree, mutate, code):
    assert code in _codes(tree, mutate)


def test_other_prefix_extends_vocabularies(tree):
    assert _codes(tree, lambda t: t["semantic"][0].__setitem__("class", "other:animal")) == []


def test_partition_on_typed_descriptions():
    rng = np.random.default_rng(0)
    desc = random_description(rng)
    assert dimension_partition_check(desc)
    twice = copy.deepcopy(desc)
    twice.semantic.append(twice.semantic[0])
    assert not dimension_partition_check(twice)
    wrong = copy.deepcopy(desc)
    wrong.spatial.append(SemanticAnnotation("ego", 0.0, "vehicle"))
    assert not dimension_partition_check(wrong)


def test_generated_descriptions_validate_in_both_forms():
    rng = np.random.default_rng(1)
    for _ in range(100):
        desc = canonical(random_description(rng))
        assert validate_description(desc).ok
        assert validate_description(description_to_tree(desc)).ok
        parsed = parse_annotation_text(serialize(desc)).description
        # Writing and reading the block language keeps the verdict.
        assert validate_description(parsed).ok


def test_invalid_verdict_survives_block_round_trip():
    rng = np.random.default_rng(2)
    desc = canonical(random_description(rng))
    desc.spatial[0].distance_to_ego = -3.0
    assert "RANGE" in validate_description(desc).codes()
    parsed = parse_annotation_text(serialize(desc))
    assert parsed.ok and "RANGE" in validate_description(parsed.description).codes()


def test_schema_errors_name_the_path(tree):
    bad = copy.deepcopy(tree)
    bad["spatial"][0]["position"] = "here"
    with pytest.raises(SchemaError) as info:
        description_from_tree(bad)
    assert "spatial[0]" in str(info.value)


def test_json_is_canonical_regardless_of_list_order():
    rng = np.random.default_rng(3)
    desc = random_description(rng)
    shuffled = copy.deepcopy(desc)
    shuffled.elements.reverse()
    shuffled.temporal.reverse()
    assert description_to_json(desc) == description_to_json(shuffled)


def test_render_lists_codes(tree):
    t = copy.deepcopy(tree)
    t["window"] = [-6.0, 1.0]
    assert validate_description(t).render().startswith("WINDOW\t")
    assert validate_description(tree).render() == "valid\n"
