"""Invariant checks for scenario descriptions.

``validate_description`` accepts either a typed ``ScenarioDescription`` or the
raw canonical tree (as loaded from JSON) and reports violations as data.  It
never raises for bad input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Union

from . import model as m
from .model import ScenarioDescription
from .schema import (
    INDEX_KEYS,
    PAYLOAD_KEYS,
    PROPERTY_KEYS,
    TOP_LEVEL_KEYS,
    SchemaError,
    description_from_tree,
)

TIME_TOL = 1e-9

# Units required for each constraint parameter.
CONSTRAINT_UNITS = {
    "max_speed": {"limit": "m/s"},
    "max_accel": {"limit": "m/s^2"},
    "min_gap_rss": {"response_time": "s", "a_max": "m/s^2", "b_min": "m/s^2", "b_max": "m/s^2"},
    "traffic_rule": {},
}

DIMENSION_TYPES = {
    "semantic": m.SemanticAnnotation,
    "spatial": m.SpatialAnnotation,
    "temporal": m.TemporalAnnotation,
    "physical": m.PhysicalAnnotation,
}
DISCRETE_DIMENSIONS = ("semantic", "spatial")
CONTINUOUS_DIMENSIONS = ("temporal", "physical")


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def add(self, code: str, path: str, message: str) -> None:
        self.violations.append(Violation(code, path, message))

    def render(self) -> str:
        if self.ok:
            return "valid\n"
        return "".join(f"{v.code}\t{v.path}\t{v.message}\n" for v in self.violations)


def schemas_disjoint() -> bool:
    """The payload keys of the semantic, spatial and temporal schemas never overlap."""
    dims = ("semantic", "spatial", "temporal")
    for i, a in enumerate(dims):
        for b in dims[i + 1 :]:
            if PAYLOAD_KEYS[a] & PAYLOAD_KEYS[b]:
                return False
    return True


def _owner_of(key: str, exclude: str) -> str:
    for dim, keys in PAYLOAD_KEYS.items():
        if dim != exclude and key in keys:
            return dim
    return ""


def _tree_partition(tree: dict, report: ValidationReport) -> None:
    seen: Dict[int, str] = {}
    for dim in DIMENSION_TYPES:
        items = tree.get(dim, [])
        if not isinstance(items, list):
            continue
        for i, item in enumerate(items):
            path = f"{dim}[{i}]"
            if id(item) in seen:
                report.add("DIM_PARTITION", path, f"annotation object also registered under {seen[id(item)]}")
            seen[id(item)] = path
            if not isinstance(item, dict):
                continue
            for key in item:
                if key in INDEX_KEYS or key in PAYLOAD_KEYS[dim]:
                    continue
                owner = _owner_of(key, dim)
                if owner:
                    report.add("DIM_PARTITION", f"{path}.{key}", f"key '{key}' belongs to the {owner} dimension")
                else:
                    report.add("UNKNOWN_FIELD", f"{path}.{key}", f"unknown key '{key}'")
            if dim in DISCRETE_DIMENSIONS and "interval" in item:
                report.add("TIME_KIND", f"{path}.interval", f"{dim} annotations are snapshots; use 't'")
            if dim in CONTINUOUS_DIMENSIONS and "t" in item:
                report.add("TIME_KIND", f"{path}.t", f"{dim} annotations span an interval; use 'interval'")


def _typed_partition(desc: ScenarioDescription, report: ValidationReport) -> None:
    seen: Dict[int, str] = {}
    for dim, cls in DIMENSION_TYPES.items():
        for i, item in enumerate(getattr(desc, dim)):
            path = f"{dim}[{i}]"
            if id(item) in seen:
                report.add("DIM_PARTITION", path, f"annotation object also registered under {seen[id(item)]}")
            seen[id(item)] = path
            if not isinstance(item, cls):
                report.add("DIM_PARTITION", path, f"{type(item).__name__} registered under {dim}")


def partition_violations(desc: Union[ScenarioDescription, dict]) -> List[Violation]:
    report = ValidationReport()
    if not schemas_disjoint():
        report.add("DIM_PARTITION", "$", "dimension schemas share payload keys")
    if isinstance(desc, dict):
        _tree_partition(desc, report)
    elif isinstance(desc, ScenarioDescription):
        _typed_partition(desc, report)
    return [v for v in report.violations if v.code == "DIM_PARTITION"]


def dimension_partition_check(desc: Union[ScenarioDescription, dict]) -> bool:
    """True iff no payload key is shared between dimensions and no annotation is registered twice.

    Field keys are compared excluding the index keys (``element_id``, ``t``,
    ``interval``), which locate an annotation rather than describe it.
    """
    return not partition_violations(desc)


def validate_description(desc: Union[ScenarioDescription, dict]) -> ValidationReport:
    report = ValidationReport()
    if isinstance(desc, ScenarioDescription):
        _typed_partition(desc, report)
        if not report.ok:
            return report
        typed = desc
    elif isinstance(desc, dict):
        for key in desc:
            if key not in TOP_LEVEL_KEYS:
                report.add("UNKNOWN_FIELD", key, f"unknown top-level key '{key}'")
        _tree_partition(desc, report)
        try:
            typed = description_from_tree(desc)
        except SchemaError as exc:
            report.add("STRUCTURE", exc.path, exc.message)
            return report
    else:
        report.add("STRUCTURE", "$", f"expected a description, got {type(desc).__name__}")
        return report
    try:
        _check_typed(typed, report)
    except (TypeError, ValueError, AttributeError, IndexError) as exc:
        report.add("STRUCTURE", "$", f"malformed description: {exc}")
    return report


def _finite(*values) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def _in_window(t: float, window) -> bool:
    return window[0] - TIME_TOL <= t <= window[1] + TIME_TOL


def _check_typed(desc: ScenarioDescription, report: ValidationReport) -> None:
    w = desc.window
    if not _finite(*w) or w[0] > w[1]:
        report.add("WINDOW", "window", "window must be a finite [start, end] with start <= end")
    elif abs(w[1]) > TIME_TOL:
        report.add("WINDOW", "window", "window must end at the present (0 s)")

    ids = [e.id for e in desc.elements]
    if len(set(ids)) != len(ids):
        report.add("DUPLICATE_ID", "elements", "element ids must be unique")
    known = set(ids)
    if desc.elements and desc.ego_id not in known:
        report.add("DANGLING_REF", "ego_id", f"ego '{desc.ego_id}' is not an element")

    _check_context(desc.context, report)

    for i, stream in enumerate(desc.modalities):
        p = f"modalities[{i}]"
        if stream.kind not in m.MODALITY_KINDS:
            report.add("VOCAB", f"{p}.kind", f"unknown modality kind '{stream.kind}'")
        times = [t for t, _ in stream.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            report.add("ORDER", f"{p}.samples", "sample times must be strictly increasing")

    for i, e in enumerate(desc.elements):
        p = f"elements[{i}]"
        times = [s.t for s in e.trajectory]
        if any(b <= a for a, b in zip(times, times[1:])):
            report.add("ORDER", f"{p}.trajectory", "trajectory times must be strictly increasing")
        for j, s in enumerate(e.trajectory):
            sp = f"{p}.trajectory[{j}]"
            if not _finite(s.t, s.speed, *s.position):
                report.add("STRUCTURE", sp, "non-finite state sample")
            if not m.is_rotation(s.orientation):
                report.add("ROTATION", f"{sp}.orientation", "orientation is not in SO(3)")
            if s.speed < 0:
                report.add("RANGE", f"{sp}.speed", "speed must be >= 0")

    def element_ref(element_id: str, path: str) -> None:
        if element_id not in known:
            report.add("DANGLING_REF", path, f"unknown element '{element_id}'")

    keys_seen = set()
    for i, a in enumerate(desc.semantic):
        p = f"semantic[{i}]"
        element_ref(a.element_id, f"{p}.element_id")
        if ("sem", a.element_id, a.t) in keys_seen:
            report.add("DUPLICATE", p, "two semantic annotations for the same element and time")
        keys_seen.add(("sem", a.element_id, a.t))
        if not _in_window(a.t, w):
            report.add("WINDOW", f"{p}.t", "snapshot time outside the scenario window")
        if not m.in_vocabulary(a.class_, m.ELEMENT_CLASSES):
            report.add("VOCAB", f"{p}.class", f"unknown class '{a.class_}'")
        if not m.in_vocabulary(a.state, m.STATES):
            report.add("VOCAB", f"{p}.state", f"unknown state '{a.state}'")
        for j, aff in enumerate(a.affordances):
            if not m.in_vocabulary(aff, m.AFFORDANCES):
                report.add("VOCAB", f"{p}.affordances[{j}]", f"unknown affordance '{aff}'")
        for j, attr in enumerate(a.attributes):
            if not isinstance(attr, str) or not attr.strip():
                report.add("RANGE", f"{p}.attributes[{j}]", "attributes must be non-empty strings")

    for i, a in enumerate(desc.spatial):
        p = f"spatial[{i}]"
        element_ref(a.element_id, f"{p}.element_id")
        if ("spat", a.element_id, a.t) in keys_seen:
            report.add("DUPLICATE", p, "two spatial annotations for the same element and time")
        keys_seen.add(("spat", a.element_id, a.t))
        if not _in_window(a.t, w):
            report.add("WINDOW", f"{p}.t", "snapshot time outside the scenario window")
        if not _finite(*(a.position or ()), *(a.occupancy or ())) or (
            a.distance_to_ego is not None and not _finite(a.distance_to_ego)
        ):
            report.add("STRUCTURE", p, "non-finite spatial values")
        if a.occupancy is not None and any(x <= 0 for x in a.occupancy):
            report.add("RANGE", f"{p}.occupancy", "extent components must be > 0")
        if a.distance_to_ego is not None and a.distance_to_ego < 0:
            report.add("RANGE", f"{p}.distance_to_ego", "distance must be >= 0")
        if a.orientation is not None and not m.is_rotation(a.orientation):
            report.add("ROTATION", f"{p}.orientation", "orientation is not in SO(3)")
        for j, (other, rel) in enumerate(a.topology):
            tp = f"{p}.topology[{j}]"
            if other == a.element_id:
                report.add("SELF_RELATION", tp, "element related to itself")
            element_ref(other, tp)
            if not m.in_vocabulary(rel, m.RELATIONS):
                report.add("VOCAB", tp, f"unknown relation '{rel}'")
        if a.visibility is not None and a.visibility not in m.VISIBILITY:
            report.add("VOCAB", f"{p}.visibility", f"unknown visibility '{a.visibility}'")
        for j, other in enumerate(a.occluded_by):
            element_ref(other, f"{p}.occluded_by[{j}]")

    for i, a in enumerate(desc.temporal):
        p = f"temporal[{i}]"
        element_ref(a.element_id, f"{p}.element_id")
        _check_interval(a.interval, w, f"{p}.interval", report)
        if ("temp", a.element_id) in keys_seen:
            report.add("DUPLICATE", p, "two temporal annotations for the same element")
        keys_seen.add(("temp", a.element_id))
        _check_sequence(a.state_sequence, a.interval, m.STATES, f"{p}.state_sequence", report)
        _check_sequence(a.visibility_sequence, a.interval, m.VISIBILITY, f"{p}.visibility_sequence", report, allow_other=False)
        for j, (other, rel) in enumerate(a.orderings):
            op = f"{p}.orderings[{j}]"
            if other == a.element_id:
                report.add("SELF_RELATION", op, "element ordered against itself")
            element_ref(other, op)
            if not m.in_vocabulary(rel, m.ORDERINGS):
                report.add("VOCAB", op, f"unknown ordering '{rel}'")
        if a.periodicity is not None and not a.periodicity > 0:
            report.add("RANGE", f"{p}.periodicity", "period must be > 0")
        for name in ("velocity_samples", "acceleration_samples"):
            for j, (t, vec) in enumerate(getattr(a, name)):
                if not _finite(t, *vec):
                    report.add("STRUCTURE", f"{p}.{name}[{j}]", "non-finite sample")
                elif not (a.interval[0] - TIME_TOL <= t <= a.interval[1] + TIME_TOL):
                    report.add("WINDOW", f"{p}.{name}[{j}]", "sample outside the annotation interval")

    constraint_ids = set()
    rule_ids = {r.id for r in desc.context.rules}
    for i, a in enumerate(desc.physical):
        p = f"physical[{i}]"
        element_ref(a.element_id, f"{p}.element_id")
        _check_interval(a.interval, w, f"{p}.interval", report)
        if ("phys", a.element_id) in keys_seen:
            report.add("DUPLICATE", p, "two physical annotations for the same element")
        keys_seen.add(("phys", a.element_id))
        if not m.in_vocabulary(a.model, m.PHYSICAL_MODELS):
            report.add("VOCAB", f"{p}.model", f"unknown model '{a.model}'")
        local = set()
        for j, c in enumerate(a.constraint_set):
            cp = f"{p}.constraint_set[{j}]"
            if c.id in constraint_ids:
                report.add("DUPLICATE_ID", f"{cp}.id", f"constraint id '{c.id}' reused")
            constraint_ids.add(c.id)
            local.add(c.id)
            _check_constraint(c, cp, rule_ids, report)
        for j, v in enumerate(a.violations):
            if v.constraint_id not in local:
                report.add("DANGLING_REF", f"{p}.violations[{j}]", f"unknown constraint '{v.constraint_id}'")


def _check_context(ctx: m.Context, report: ValidationReport) -> None:
    for layer, entries in ctx.layers.items():
        if layer not in m.LAYER_NAMES:
            report.add("LAYER", f"context.layers.{layer}", "layer ids must be in 1..6")
        for j, e in enumerate(entries):
            _check_properties(e.properties, f"context.layers.{layer}[{j}].properties", report)
    rule_ids = [r.id for r in ctx.rules]
    if len(set(rule_ids)) != len(rule_ids):
        report.add("DUPLICATE_ID", "context.rules", "rule ids must be unique")
    for i, r in enumerate(ctx.rules):
        if r.kind not in m.RULE_KINDS:
            report.add("VOCAB", f"context.rules[{i}].kind", f"unknown rule kind '{r.kind}'")
    times = [u.t for u in ctx.driver_channel]
    if any(b < a for a, b in zip(times, times[1:])):
        report.add("ORDER", "context.driver_channel", "utterance timestamps must be non-decreasing")


def _check_properties(props: dict, path: str, report: ValidationReport) -> None:
    for key, value in props.items():
        kp = f"{path}.{key}"
        if key not in PROPERTY_KEYS:
            report.add("UNKNOWN_FIELD", kp, f"unknown element property '{key}'")
        elif key == "class":
            if not m.in_vocabulary(value, m.ELEMENT_CLASSES):
                report.add("VOCAB", kp, f"unknown class '{value}'")
        elif key in ("extent", "box_offset"):
            n = 3 if key == "extent" else 2
            if not (isinstance(value, list) and len(value) == n and _finite(*value)):
                report.add("PROPERTY", kp, f"expected {n} numbers")
            elif key == "extent" and any(x <= 0 for x in value):
                report.add("PROPERTY", kp, "extent components must be > 0")
        elif key == "wheelbase":
            if not (_finite(value) and value > 0):
                report.add("PROPERTY", kp, "wheelbase must be > 0")
        elif not (isinstance(value, list) and all(isinstance(x, str) for x in value)):
            report.add("PROPERTY", kp, "expected a list of strings")
        elif key == "affordances":
            for x in value:
                if not m.in_vocabulary(x, m.AFFORDANCES):
                    report.add("VOCAB", kp, f"unknown affordance '{x}'")


def _check_interval(interval, window, path: str, report: ValidationReport) -> None:
    a, b = interval
    if not a < b:
        report.add("INTERVAL", path, "interval needs start < end")
    if not (_in_window(a, window) and _in_window(b, window)):
        report.add("WINDOW", path, "interval outside the scenario window")


def _check_sequence(seq, interval, vocabulary, path: str, report: ValidationReport, allow_other: bool = True) -> None:
    if not seq:
        return
    for j, si in enumerate(seq):
        if not m.in_vocabulary(si.state, vocabulary, allow_other):
            report.add("VOCAB", f"{path}[{j}]", f"unknown state '{si.state}'")
        if not si.start < si.end:
            report.add("INTERVAL", f"{path}[{j}]", "interval needs start < end")
    if abs(seq[0].start - interval[0]) > TIME_TOL or abs(seq[-1].end - interval[1]) > TIME_TOL:
        report.add("SEQUENCE", path, "sequence must cover the annotation interval")
    for j, (x, y) in enumerate(zip(seq, seq[1:])):
        if abs(y.start - x.end) > TIME_TOL:
            report.add("SEQUENCE", f"{path}[{j + 1}]", "intervals must be contiguous and non-overlapping")


def _check_constraint(c: m.Constraint, path: str, rule_ids, report: ValidationReport) -> None:
    if c.kind not in CONSTRAINT_UNITS:
        report.add("VOCAB", f"{path}.kind", f"unknown constraint kind '{c.kind}'")
        return
    units = CONSTRAINT_UNITS[c.kind]
    for name, value in c.parameters.items():
        pp = f"{path}.parameters.{name}"
        if name in units:
            if not isinstance(value, m.Quantity):
                report.add("UNIT", pp, f"'{name}' needs a quantity in {units[name]}")
            elif value.unit != units[name]:
                report.add("UNIT", pp, f"'{name}' must be in {units[name]}, got {value.unit}")
        elif c.kind == "traffic_rule" and name == "rule":
            if not isinstance(value, str) or value not in rule_ids:
                report.add("DANGLING_REF", pp, f"unknown rule '{value}'")
    for name in ("limit",):
        if name in units and name not in c.parameters:
            report.add("UNIT", f"{path}.parameters", f"missing '{name}' [{units[name]}]")
    if c.kind == "traffic_rule" and "rule" not in c.parameters:
        report.add("DANGLING_REF", f"{path}.parameters", "traffic_rule constraints need a 'rule' reference")
