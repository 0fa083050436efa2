"""The two reference scenarios at an urban intersection, as canonical data files.

Both scenarios are observed for 6 s at 10 Hz from a stationary ego at the
origin heading +x.  Geometry is chosen so that the annotated values hold
exactly; docs/fixtures.md has the plan-view layout.

scenario1 (taxi pick-up at the roadside): a pedestrian crosses 3.42 m in
front of the ego towards a parked taxi whose open back door widens its
footprint by 0.9 m; a 10 cm plastic bottle lies 1.98 m ahead.

scenario2 (dynamic occlusion of a cyclist): a turning bus hides a crossing
cyclist from the ego at the present instant; a mint-green car on the far side
waits for the cyclist.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .config import RunConfig, config_hash
from .description import derive
from .dsl import LogRow, TrajectoryLog, format_trajectory_log, parse_annotation_text, serialize
from .evaluation import actions_to_tree, decide, score_to_tree, score_understanding
from .model import Context, LayerEntry, Rule, TaskSpec
from .physics import anticipate
from .schema import anticipation_to_json, context_to_tree, description_to_json, dumps_json

SCENARIO_IDS = ("scenario1", "scenario2")
FIXTURE_VERSION = "v1"
DATA_DIR = os.path.join(os.path.dirname(__file__), "data", "fixtures", FIXTURE_VERSION)

DURATION = 6.0  # s of observation; stands in for "several seconds"
RATE = 10.0  # Hz

FILES = {
    "trajectory_log": "trajectory_log.csv",
    "context": "context.json",
    "description": "description.json",
    "description_dsl": "description.dsl",
    "anticipation": "anticipation.json",
    "actions": "actions.json",
    "candidate": "candidate.dsl",
    "score_report": "score_report.json",
}

Pose = Tuple[float, float, float, float]  # x, y, yaw, speed


@dataclass
class Track:
    id: str
    class_: str
    pose: Callable[[float], Pose]  # time relative to the present (t <= 0)


@dataclass
class ScenarioSpec:
    id: str
    ego_id: str
    tracks: List[Track]
    context: Context
    task: TaskSpec
    candidate: str
    notes: List[str] = field(default_factory=list)


def _still(x: float, y: float, yaw: float = 0.0) -> Callable[[float], Pose]:
    return lambda t: (x, y, yaw, 0.0)


def _straight(x0: float, y0: float, yaw: float, speed: float) -> Callable[[float], Pose]:
    """Constant-velocity track through (x0, y0) at t = 0."""
    return lambda t: (x0 + speed * t * math.cos(yaw), y0 + speed * t * math.sin(yaw), yaw, speed)


def _arc(cx: float, cy: float, radius: float, phase0: float, omega: float) -> Callable[[float], Pose]:
    """Counter-clockwise circular track; ``phase0`` is the polar angle about the centre at t = 0."""

    def pose(t: float) -> Pose:
        phase = phase0 + omega * t
        return (cx + radius * math.cos(phase), cy + radius * math.sin(phase), phase + math.pi / 2, radius * omega)

    return pose


def _entry(eid: str, label: str, **properties) -> LayerEntry:
    return LayerEntry(eid, "element", label, properties)


def _yield_rule(rule_id: str, yielder: str, priority: str) -> Rule:
    return Rule(rule_id, "traffic", {"type": "yield_to", "yielder": yielder, "priority": priority})


# -- scenario 1 ---------------------------------------------------------------------

# Ego box front sits at x = 2.25 (length 4.5).  Bottle back face at 4.28 - 0.05
# gives 1.98 m; pedestrian back face at 5.92 - 0.25 gives 3.42 m.  The taxi
# box spans y in [-4.05, -1.5] with the door side towards the road.
_SCENARIO1_CANDIDATE = """\
[SCENARIO] scenario1
  window: [-6, 0] s
  ego: ego

[SEM] ego @ t=0
  class: vehicle
  state: yielding

[SEM] pedestrian_1 @ t=0
  class: pedestrian
  state: walking
  attributes: "green shirt"
  affordances: can_cross, can_signal

[SPAT] pedestrian_1 @ t=0
  distance_to_ego: 3.9 m
  relation: front_of ego
  visibility: visible

[SEM] taxi_1 @ t=0
  class: vehicle
  state: parked
  attributes: yellow, "back door open"
  affordances: can_occlude

[SPAT] taxi_1 @ t=0
  distance_to_ego: 4.5 m
  relation: front_of ego, right_of ego
  visibility: visible

[SEM] dog_1 @ t=0
  class: other:animal
  state: walking

[SPAT] dog_1 @ t=0
  distance_to_ego: 7 m
  relation: front_of ego

[PHYS] taxi_1 @ t=[-6, 0]
  model: static
  materials: metal

[PHYS] pedestrian_1 @ t=[-6, 0]
  model: constant_velocity

[ACTION] yield
  justification: "sem:pedestrian_1@0", "spat:pedestrian_1@0"
"""


def scenario1() -> ScenarioSpec:
    tracks = [
        Track("ego", "vehicle", _still(0.0, 0.0)),
        Track("bottle_1", "static_object", _still(4.28, 0.3)),
        Track("pedestrian_1", "pedestrian", _straight(5.92, 0.5, -math.pi / 2, 1.2)),
        Track("taxi_1", "vehicle", _still(7.0, -3.3)),
    ]
    context = Context(
        layers={
            1: [
                LayerEntry("main_street", "road", "two-lane urban road along +x"),
                LayerEntry("crosswalk_1", "crosswalk", "unsignalised crossing at x = 5..7 m"),
            ],
            2: [LayerEntry("curb_south", "curb", "curb at y = -4.5 m")],
            4: [
                _entry("ego", "observing vehicle", **{"class": "vehicle", "extent": [4.5, 1.8, 1.5], "materials": ["metal"]}),
                _entry(
                    "bottle_1",
                    "plastic bottle on the lane",
                    **{
                        "class": "static_object",
                        "extent": [0.1, 0.1, 0.1],
                        "attributes": ["plastic bottle", "transparent"],
                        "affordances": ["can_be_run_over"],
                        "materials": ["plastic"],
                    },
                ),
                _entry(
                    "pedestrian_1",
                    "pedestrian crossing towards the taxi",
                    **{
                        "class": "pedestrian",
                        "extent": [0.5, 0.5, 1.75],
                        "attributes": ["green t-shirt"],
                        "materials": ["soft"],
                    },
                ),
                _entry(
                    "taxi_1",
                    "taxi waiting at the curb",
                    **{
                        "class": "vehicle",
                        "extent": [4.5, 2.7, 1.5],
                        "box_offset": [0.0, 0.45],
                        "attributes": ["yellow", "back door open", "taxi sign"],
                        "materials": ["metal"],
                    },
                ),
            ],
            5: [LayerEntry("weather", "condition", "dry, daylight")],
        },
        rules=[_yield_rule("yield_crosswalk", "ego", "pedestrian_1")],
    )
    return ScenarioSpec(
        "scenario1",
        "ego",
        tracks,
        context,
        TaskSpec("decision"),
        _SCENARIO1_CANDIDATE,
        [
            "taxi open back door: footprint widened by 0.9 m towards the road (extent 2.7 m, lateral box offset 0.45 m)",
            "taxi stationary for the whole 6 s window, so it is parked",
        ],
    )


# -- scenario 2 ---------------------------------------------------------------------

# The bus drives a left turn on a 10 m circle at 2 m/s (0.2 rad/s).  At t = 0
# it is at (9, -1.5), heading 250 deg, squarely between the ego and the
# cyclist at (14, -3.5); six seconds earlier it was oncoming at (18.2, 5.1).
_BUS_CENTRE = (9.0 - 10.0 * math.cos(math.radians(160.0)), -1.5 - 10.0 * math.sin(math.radians(160.0)))

_SCENARIO2_CANDIDATE = """\
[SCENARIO] scenario2
  window: [-6, 0] s
  ego: ego

[SEM] ego @ t=0
  class: vehicle
  state: yielding

[SEM] bus_A @ t=0
  class: public_transport
  state: moving
  attributes: yellow
  affordances: can_occlude

[SPAT] bus_A @ t=0
  position: (9.2, -1.4, 0) m
  distance_to_ego: 4.5 m
  relation: front_of ego
  visibility: visible

[SEM] cyclist_1 @ t=0
  class: cyclist
  state: moving
  attributes: "red t-shirt"
  affordances: can_cross, can_signal

[SPAT] cyclist_1 @ t=0
  distance_to_ego: 12 m
  relation: front_of ego
  visibility: partial
  occluded_by: bus_A

[SEM] car_1 @ t=0
  class: vehicle
  state: stopped
  attributes: "mint-green"

[TEMP] cyclist_1 @ t=[-6, 0]
  visibility: visible [-6, -1] s, occluded [-1, 0] s

[PHYS] bus_A @ t=[-6, 0]
  model: kinematic_bicycle

[ANTICIPATE] scenario2
  horizon: 6 s
  event: 3 s reappears cyclist_1

[ACTION] yield
  justification: "spat:cyclist_1@0"

[ACTION] inform_driver
  justification: "spat:cyclist_1@0"
"""


def scenario2() -> ScenarioSpec:
    tracks = [
        Track("ego", "vehicle", _still(0.0, 0.0)),
        Track("bus_1", "public_transport", _arc(_BUS_CENTRE[0], _BUS_CENTRE[1], 10.0, math.radians(160.0), 0.2)),
        Track("car_1", "vehicle", _straight(16.5, 11.0, -math.pi / 2, 0.05)),
        Track("cyclist_1", "cyclist", _straight(14.0, -3.5, math.pi / 2, 1.5)),
    ]
    context = Context(
        layers={
            1: [
                LayerEntry("main_street", "road", "east-west road through the intersection"),
                LayerEntry("cross_street", "road", "north-south road crossing at x = 12..20 m"),
                LayerEntry("bike_lane_1", "bike_lane", "northbound bike lane at x = 14 m"),
            ],
            4: [
                _entry("ego", "observing vehicle", **{"class": "vehicle", "extent": [4.5, 1.8, 1.5], "materials": ["metal"]}),
                _entry(
                    "bus_1",
                    "bus turning left across the ego's view",
                    **{
                        "class": "public_transport",
                        "extent": [12.0, 2.5, 3.2],
                        "wheelbase": 6.0,
                        "attributes": ["yellow", "reflective"],
                        "materials": ["metal", "glass"],
                    },
                ),
                _entry(
                    "car_1",
                    "mint-green car waiting on the cross street",
                    **{"class": "vehicle", "attributes": ["mint-green"], "materials": ["metal"]},
                ),
                _entry(
                    "cyclist_1",
                    "cyclist crossing northbound",
                    **{"class": "cyclist", "extent": [1.8, 0.6, 1.7], "attributes": ["red t-shirt"], "materials": ["soft"]},
                ),
            ],
            5: [LayerEntry("weather", "condition", "dry, daylight")],
        },
        rules=[
            _yield_rule("yield_ego_cyclist", "ego", "cyclist_1"),
            _yield_rule("yield_car_cyclist", "car_1", "cyclist_1"),
        ],
    )
    return ScenarioSpec(
        "scenario2",
        "ego",
        tracks,
        context,
        TaskSpec("interaction"),
        _SCENARIO2_CANDIDATE,
        ["bus turn observed for the whole 6 s window"],
    )


SCENARIOS: Dict[str, Callable[[], ScenarioSpec]] = {"scenario1": scenario1, "scenario2": scenario2}


def scenario_spec(scenario_id: str) -> ScenarioSpec:
    if scenario_id not in SCENARIOS:
        raise KeyError(f"unknown scenario '{scenario_id}' (known: {', '.join(SCENARIO_IDS)})")
    return SCENARIOS[scenario_id]()


# -- building and emitting -------------------------------------------------------------


def build_log(spec: ScenarioSpec) -> TrajectoryLog:
    """Log on its own clock (0..6 s); derivation shifts the last row to t = 0."""
    n = int(round(DURATION * RATE))
    log = TrajectoryLog(spec.ego_id, RATE)
    for k in range(n + 1):
        clock = round(k / RATE, 9)
        t = clock - DURATION
        for track in sorted(spec.tracks, key=lambda tr: tr.id):
            x, y, yaw, speed = track.pose(t)
            yaw = math.atan2(math.sin(yaw), math.cos(yaw))
            log.rows.append(LogRow(clock, track.id, track.class_, x, y, 0.0, yaw, speed))
    return log


@dataclass
class FixtureManifest:
    scenario: str
    version: str
    task: str
    files: Dict[str, str]
    checksums: Dict[str, str]
    config_hash: str
    notes: List[str]

    def to_tree(self) -> dict:
        return {
            "scenario": self.scenario,
            "version": self.version,
            "task": self.task,
            "files": dict(sorted(self.files.items())),
            "checksums": dict(sorted(self.checksums.items())),
            "config_hash": self.config_hash,
            "notes": list(self.notes),
        }


def fixture_texts(scenario_id: str, config: RunConfig = RunConfig()) -> Dict[str, str]:
    """Contents of every fixture file, keyed by role."""
    spec = scenario_spec(scenario_id)
    log_text = format_trajectory_log(build_log(spec))
    # Derive from the written text so that the stored files reproduce each other exactly.
    from .dsl import parse_trajectory_log

    log = parse_trajectory_log(log_text)
    assert isinstance(log, TrajectoryLog)
    desc = derive(log, spec.context, config, scenario_id)
    ant = anticipate(desc, config.horizon, config.dt, config.anticipation)
    actions = decide(desc, ant, spec.task, config.decision)
    candidate = parse_annotation_text(spec.candidate)
    if not candidate.ok:
        raise ValueError(f"{scenario_id} candidate does not parse: {candidate.errors}")
    score = score_understanding(desc, candidate.description, ant, candidate.anticipation, config.scoring)
    return {
        "trajectory_log": log_text,
        "context": dumps_json(context_to_tree(spec.context)),
        "description": description_to_json(desc),
        "description_dsl": serialize(desc, ant, actions),
        "anticipation": anticipation_to_json(ant),
        "actions": dumps_json(actions_to_tree(actions)),
        "candidate": spec.candidate,
        "score_report": dumps_json(score_to_tree(score, config_hash(config))),
    }


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def emit_fixture(scenario_id: str, out_dir: str, config: RunConfig = RunConfig()) -> FixtureManifest:
    """Write the fixture files and manifest for ``scenario_id`` into ``out_dir``."""
    spec = scenario_spec(scenario_id)
    texts = fixture_texts(scenario_id, config)
    os.makedirs(out_dir, exist_ok=True)
    for role, name in FILES.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(texts[role])
    manifest = FixtureManifest(
        scenario_id,
        FIXTURE_VERSION,
        spec.task.kind,
        dict(FILES),
        {role: sha256(texts[role]) for role in FILES},
        config_hash(config),
        [f"observation window of {DURATION:g} s at {RATE:g} Hz stands in for 'several seconds'"] + spec.notes,
    )
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(manifest.to_tree()))
    return manifest


def fixture_dir(scenario_id: str) -> str:
    scenario_spec(scenario_id)
    return os.path.join(DATA_DIR, scenario_id)


def fixture_path(scenario_id: str, role: str) -> str:
    return os.path.join(fixture_dir(scenario_id), FILES[role])


def read_fixture(scenario_id: str, role: str) -> str:
    with open(fixture_path(scenario_id, role), encoding="utf-8") as fh:
        return fh.read()


def verify_fixture(directory: str) -> List[str]:
    """Problems with a fixture directory: missing files or checksum mismatches."""
    problems = []
    try:
        with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return [f"manifest unreadable: {exc}"]
    for role, name in manifest.get("files", {}).items():
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            problems.append(f"{role}: missing file {name}")
            continue
        with open(path, encoding="utf-8") as fh:
            digest = sha256(fh.read())
        if digest != manifest.get("checksums", {}).get(role):
            problems.append(f"{role}: checksum mismatch for {name}")
    return problems


def task_for(scenario_id: str) -> TaskSpec:
    return scenario_spec(scenario_id).task


def expected_actions(scenario_id: str) -> Optional[list]:
    return json.loads(read_fixture(scenario_id, "actions"))
