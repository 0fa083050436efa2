"""Typed scenario descriptions, anticipations and task records.

All containers are plain dataclasses holding tuples/lists of floats and
strings, so two descriptions built from the same data compare equal.  Vectors
are stored as 3-tuples and rotation matrices as nested 3-tuples; numerical
code converts to numpy on entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

Vec3 = Tuple[float, float, float]
Mat3 = Tuple[Vec3, Vec3, Vec3]
Interval = Tuple[float, float]

# Closed vocabularies.  Values of the form ``other:<label>`` are accepted
# wherever OTHER_ALLOWED lists the vocabulary.
ELEMENT_CLASSES = (
    "vehicle",
    "pedestrian",
    "cyclist",
    "public_transport",
    "static_object",
    "infrastructure",
)
STATES = ("parked", "stopped", "moving", "walking", "yielding")
AFFORDANCES = (
    "can_occlude",
    "can_be_run_over",
    "can_signal",
    "can_enter_vehicle",
    "can_cross",
)
RELATIONS = (
    "left_of",
    "right_of",
    "front_of",
    "behind",
    "above",
    "below",
    "touching",
    "contains",
    "contained_by",
    "near",
)
DIRECTIONAL_RELATIONS = ("front_of", "behind", "left_of", "right_of")
INVERSE_RELATION = {
    "left_of": "right_of",
    "right_of": "left_of",
    "front_of": "behind",
    "behind": "front_of",
    "above": "below",
    "below": "above",
    "contains": "contained_by",
    "contained_by": "contains",
    "touching": "touching",
    "near": "near",
}
ORDERINGS = ("before", "after", "simultaneous")
PHYSICAL_MODELS = (
    "static",
    "constant_velocity",
    "constant_acceleration",
    "kinematic_bicycle",
    "rigid_body",
    "human_body",
)
MODALITY_KINDS = (
    "visual",
    "spatial",
    "acoustic",
    "kinematic",
    "geospatial",
    "linguistic",
    "memory",
)
RULE_KINDS = ("traffic", "safety", "value")
CONSTRAINT_KINDS = ("max_speed", "max_accel", "min_gap_rss", "traffic_rule")
VISIBILITY = ("visible", "partial", "occluded")
TASK_KINDS = ("perception", "decision", "interaction", "learning")
ACTION_VERBS = ("yield", "proceed", "proceed_slow", "inform_driver", "store_observation")

LAYER_NAMES = {
    1: "road_network",
    2: "roadside_structures",
    3: "temporary_modifications",
    4: "dynamic_objects",
    5: "environment_conditions",
    6: "digital_information",
}

VRU_CLASSES = ("pedestrian", "cyclist")

OTHER_ALLOWED = {
    "class": ELEMENT_CLASSES,
    "state": STATES,
    "affordance": AFFORDANCES,
    "relation": RELATIONS,
    "ordering": ORDERINGS,
    "model": PHYSICAL_MODELS,
}


def in_vocabulary(value: object, vocabulary: Tuple[str, ...], allow_other: bool = True) -> bool:
    if not isinstance(value, str):
        return False
    if value in vocabulary:
        return True
    return allow_other and value.startswith("other:") and len(value) > len("other:")


# -- rotations ---------------------------------------------------------------


def yaw_matrix(yaw: float) -> Mat3:
    c, s = math.cos(yaw), math.sin(yaw)
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


def matrix_yaw(orientation: Mat3) -> float:
    """Heading angle of the body x axis projected on the ground plane."""
    return math.atan2(orientation[1][0], orientation[0][0])


def as_matrix(value) -> Mat3:
    arr = np.asarray(value, dtype=float).reshape(3, 3)
    return tuple(tuple(float(x) for x in row) for row in arr)  # type: ignore[return-value]


def as_vec3(value) -> Vec3:
    arr = np.asarray(value, dtype=float).reshape(3)
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def is_rotation(orientation: Mat3, tol: float = 1e-6) -> bool:
    m = np.asarray(orientation, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if not np.allclose(m @ m.T, np.eye(3), atol=tol):
        return False
    return abs(float(np.linalg.det(m)) - 1.0) <= tol


# -- context and modalities -------------------------------------------------


@dataclass(frozen=True)
class Quantity:
    """A number carrying its unit string (``m``, ``m/s``, ``m/s^2``, ``s``, ``rad``)."""

    value: float
    unit: str


ParamValue = Union[Quantity, str]


@dataclass
class LayerEntry:
    id: str
    kind: str
    label: str = ""
    # Optional element properties (class, extent, box_offset, attributes,
    # affordances, materials, wheelbase) for entries that describe an element.
    properties: Dict[str, object] = field(default_factory=dict)


@dataclass
class Rule:
    id: str
    kind: str
    parameters: Dict[str, ParamValue] = field(default_factory=dict)


@dataclass
class Utterance:
    t: float
    text: str


@dataclass
class Context:
    layers: Dict[int, List[LayerEntry]] = field(default_factory=dict)
    rules: List[Rule] = field(default_factory=list)
    driver_channel: List[Utterance] = field(default_factory=list)

    def entry(self, entry_id: str) -> Optional[LayerEntry]:
        for layer in sorted(self.layers):
            for item in self.layers[layer]:
                if item.id == entry_id:
                    return item
        return None

    def element_properties(self, element_id: str) -> Dict[str, object]:
        item = self.entry(element_id)
        return dict(item.properties) if item is not None else {}

    def yield_rules(self) -> List[Rule]:
        return [
            r
            for r in self.rules
            if r.parameters.get("type") == "yield_to"
            and isinstance(r.parameters.get("yielder"), str)
            and isinstance(r.parameters.get("priority"), str)
        ]


@dataclass
class ModalityStream:
    kind: str
    source: str
    samples: List[Tuple[float, str]] = field(default_factory=list)


# -- elements ---------------------------------------------------------------


@dataclass
class StateSample:
    t: float
    position: Vec3
    orientation: Mat3
    speed: float
    yaw_rate: Optional[float] = None

    @property
    def yaw(self) -> float:
        return matrix_yaw(self.orientation)


@dataclass
class Element:
    id: str
    trajectory: List[StateSample] = field(default_factory=list)

    @property
    def span(self) -> Interval:
        return (self.trajectory[0].t, self.trajectory[-1].t)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.trajectory], dtype=float)

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.trajectory], dtype=float).reshape(-1, 3)


# -- annotations ------------------------------------------------------------


@dataclass
class SemanticAnnotation:
    element_id: str
    t: float
    class_: str
    attributes: List[str] = field(default_factory=list)
    state: str = "stopped"
    affordances: List[str] = field(default_factory=list)


@dataclass
class SpatialAnnotation:
    element_id: str
    t: float
    # Pose, distance and extent may be absent in candidate descriptions.
    position: Optional[Vec3] = None
    orientation: Optional[Mat3] = None
    distance_to_ego: Optional[float] = None
    occupancy: Optional[Vec3] = None
    topology: List[Tuple[str, str]] = field(default_factory=list)
    visibility: Optional[str] = None
    occluded_by: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class StateInterval:
    state: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class TemporalAnnotation:
    element_id: str
    interval: Interval
    velocity_samples: List[Tuple[float, Vec3]] = field(default_factory=list)
    acceleration_samples: List[Tuple[float, Vec3]] = field(default_factory=list)
    state_sequence: List[StateInterval] = field(default_factory=list)
    orderings: List[Tuple[str, str]] = field(default_factory=list)
    periodicity: Optional[float] = None
    visibility_sequence: List[StateInterval] = field(default_factory=list)


@dataclass
class Constraint:
    id: str
    kind: str
    parameters: Dict[str, ParamValue] = field(default_factory=dict)


@dataclass
class ViolationRecord:
    constraint_id: str
    t: float
    value: float


@dataclass
class PhysicalAnnotation:
    element_id: str
    interval: Interval
    model: str
    material_tags: List[str] = field(default_factory=list)
    constraint_set: List[Constraint] = field(default_factory=list)
    violations: List[ViolationRecord] = field(default_factory=list)


@dataclass
class ScenarioDescription:
    id: str
    window: Interval
    ego_id: str
    context: Context = field(default_factory=Context)
    modalities: List[ModalityStream] = field(default_factory=list)
    elements: List[Element] = field(default_factory=list)
    semantic: List[SemanticAnnotation] = field(default_factory=list)
    spatial: List[SpatialAnnotation] = field(default_factory=list)
    temporal: List[TemporalAnnotation] = field(default_factory=list)
    physical: List[PhysicalAnnotation] = field(default_factory=list)

    def element(self, element_id: str) -> Optional[Element]:
        for e in self.elements:
            if e.id == element_id:
                return e
        return None

    def element_ids(self) -> List[str]:
        return [e.id for e in self.elements]

    def semantic_at(self, element_id: str, t: Optional[float] = None) -> Optional[SemanticAnnotation]:
        return _latest(self.semantic, element_id, t)

    def spatial_at(self, element_id: str, t: Optional[float] = None) -> Optional[SpatialAnnotation]:
        return _latest(self.spatial, element_id, t)

    def temporal_for(self, element_id: str) -> Optional[TemporalAnnotation]:
        return next((a for a in self.temporal if a.element_id == element_id), None)

    def physical_for(self, element_id: str) -> Optional[PhysicalAnnotation]:
        return next((a for a in self.physical if a.element_id == element_id), None)

    def class_of(self, element_id: str) -> Optional[str]:
        ann = self.semantic_at(element_id)
        if ann is not None:
            return ann.class_
        props = self.context.element_properties(element_id)
        cls = props.get("class")
        return cls if isinstance(cls, str) else None


def _latest(annotations, element_id: str, t: Optional[float]):
    """Annotation of ``element_id`` at time ``t`` (or the latest one when ``t`` is None)."""
    best = None
    for ann in annotations:
        if ann.element_id != element_id:
            continue
        if t is not None:
            if abs(ann.t - t) <= 1e-9:
                return ann
            continue
        if best is None or ann.t > best.t:
            best = ann
    return best


# -- anticipation and tasks -------------------------------------------------


@dataclass(frozen=True)
class PredictedEvent:
    t: float
    tag: str
    element_ids: Tuple[str, ...]

    @property
    def ref(self) -> str:
        return f"event:{self.tag}:{'+'.join(self.element_ids)}@{format_time(self.t)}"


@dataclass(frozen=True)
class RelationDelta:
    t: float
    element_id: str
    other_id: str
    relation: str
    added: bool


@dataclass
class ScenarioAnticipation:
    base: str
    horizon: float
    predicted_trajectories: Dict[str, List[StateSample]] = field(default_factory=dict)
    predicted_events: List[PredictedEvent] = field(default_factory=list)
    predicted_relations: List[RelationDelta] = field(default_factory=list)
    # Motion model actually used per element (after fallbacks).
    models: Dict[str, str] = field(default_factory=dict)


@dataclass
class TaskSpec:
    kind: str
    parameters: Dict[str, object] = field(default_factory=dict)


@dataclass
class Action:
    verb: str
    justification: List[str] = field(default_factory=list)


def format_time(t: float) -> str:
    """Compact, stable text form of a timestamp used inside annotation references."""
    text = format(float(t), ".6g")
    return "0" if text == "-0" else text


def annotation_ref(dimension: str, element_id: str, t: Optional[float] = None) -> str:
    """Reference string for an annotation: ``spat:cyclist@0``, ``temp:bus``."""
    if t is None:
        return f"{dimension}:{element_id}"
    return f"{dimension}:{element_id}@{format_time(t)}"


def resolve_ref(ref: str, desc: ScenarioDescription, anticipation: Optional[ScenarioAnticipation] = None) -> bool:
    """True when ``ref`` names an annotation or event present in the inputs."""
    if ref.startswith("event:"):
        if anticipation is None:
            return False
        return any(ev.ref == ref for ev in anticipation.predicted_events)
    dim, _, rest = ref.partition(":")
    element_id, _, t_text = rest.partition("@")
    pools = {
        "sem": desc.semantic,
        "spat": desc.spatial,
        "temp": desc.temporal,
        "phys": desc.physical,
    }
    if dim not in pools:
        return False
    for ann in pools[dim]:
        if ann.element_id != element_id:
            continue
        if dim in ("sem", "spat"):
            if t_text and format_time(ann.t) == t_text:
                return True
        elif not t_text:
            return True
    return False
