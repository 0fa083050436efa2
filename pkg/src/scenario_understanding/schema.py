"""Canonical JSON tree for descriptions and anticipations.

``description_to_tree`` / ``description_from_tree`` convert between the typed
model and the storage format; key names are listed in docs/schema.md.
``canonical`` sorts every set-like list so that equal descriptions serialize
identically.
"""

from __future__ import annotations

import copy
import json
import math
from typing import Any, Dict, List, Optional

from .model import (
    Constraint,
    Context,
    Element,
    LayerEntry,
    ModalityStream,
    PhysicalAnnotation,
    PredictedEvent,
    Quantity,
    RelationDelta,
    Rule,
    ScenarioAnticipation,
    ScenarioDescription,
    SemanticAnnotation,
    SpatialAnnotation,
    StateInterval,
    StateSample,
    TemporalAnnotation,
    Utterance,
    ViolationRecord,
    yaw_matrix,
)

TOP_LEVEL_KEYS = (
    "id",
    "window",
    "context",
    "modalities",
    "elements",
    "semantic",
    "spatial",
    "temporal",
    "physical",
    "ego_id",
)

# Coordinates of an annotation; they are shared by all dimensions and are not
# part of any dimension's payload.
INDEX_KEYS = frozenset({"element_id", "t", "interval"})

SEMANTIC_KEYS = frozenset({"class", "attributes", "state", "affordances"})
SPATIAL_KEYS = frozenset(
    {"position", "orientation", "distance_to_ego", "occupancy", "topology", "visibility", "occluded_by"}
)
TEMPORAL_KEYS = frozenset(
    {
        "velocity_samples",
        "acceleration_samples",
        "state_sequence",
        "orderings",
        "periodicity",
        "visibility_sequence",
    }
)
PHYSICAL_KEYS = frozenset({"model", "material_tags", "constraint_set", "violations"})

PAYLOAD_KEYS = {
    "semantic": SEMANTIC_KEYS,
    "spatial": SPATIAL_KEYS,
    "temporal": TEMPORAL_KEYS,
    "physical": PHYSICAL_KEYS,
}

PROPERTY_KEYS = ("class", "extent", "box_offset", "attributes", "affordances", "materials", "wheelbase")


class SchemaError(ValueError):
    """Malformed canonical tree; ``path`` locates the offending node."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# -- typed -> tree ----------------------------------------------------------


def _param_to_tree(value):
    if isinstance(value, Quantity):
        return {"value": value.value, "unit": value.unit}
    return value


def _sample_to_tree(s: StateSample) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "t": s.t,
        "position": list(s.position),
        "orientation": [list(r) for r in s.orientation],
        "speed": s.speed,
    }
    if s.yaw_rate is not None:
        out["yaw_rate"] = s.yaw_rate
    return out


def _intervals_to_tree(seq: List[StateInterval]):
    return [{"state": si.state, "interval": [si.start, si.end]} for si in seq]


def context_to_tree(ctx: Context) -> Dict[str, Any]:
    return {
        "layers": {
            str(layer): [
                {"id": e.id, "kind": e.kind, "label": e.label, "properties": copy.deepcopy(e.properties)}
                for e in entries
            ]
            for layer, entries in sorted(ctx.layers.items())
        },
        "rules": [
            {"id": r.id, "kind": r.kind, "parameters": {k: _param_to_tree(v) for k, v in r.parameters.items()}}
            for r in ctx.rules
        ],
        "driver_channel": [{"t": u.t, "text": u.text} for u in ctx.driver_channel],
    }


def description_to_tree(desc: ScenarioDescription) -> Dict[str, Any]:
    return {
        "id": desc.id,
        "window": list(desc.window),
        "ego_id": desc.ego_id,
        "context": context_to_tree(desc.context),
        "modalities": [
            {"kind": m.kind, "source": m.source, "samples": [[t, ref] for t, ref in m.samples]}
            for m in desc.modalities
        ],
        "elements": [{"id": e.id, "trajectory": [_sample_to_tree(s) for s in e.trajectory]} for e in desc.elements],
        "semantic": [
            {
                "element_id": a.element_id,
                "t": a.t,
                "class": a.class_,
                "attributes": list(a.attributes),
                "state": a.state,
                "affordances": list(a.affordances),
            }
            for a in desc.semantic
        ],
        "spatial": [_spatial_to_tree(a) for a in desc.spatial],
        "temporal": [
            {
                "element_id": a.element_id,
                "interval": list(a.interval),
                "velocity_samples": [[t, list(v)] for t, v in a.velocity_samples],
                "acceleration_samples": [[t, list(v)] for t, v in a.acceleration_samples],
                "state_sequence": _intervals_to_tree(a.state_sequence),
                "orderings": [list(o) for o in a.orderings],
                "periodicity": a.periodicity,
                "visibility_sequence": _intervals_to_tree(a.visibility_sequence),
            }
            for a in desc.temporal
        ],
        "physical": [
            {
                "element_id": a.element_id,
                "interval": list(a.interval),
                "model": a.model,
                "material_tags": list(a.material_tags),
                "constraint_set": [
                    {"id": c.id, "kind": c.kind, "parameters": {k: _param_to_tree(v) for k, v in c.parameters.items()}}
                    for c in a.constraint_set
                ],
                "violations": [{"constraint_id": v.constraint_id, "t": v.t, "value": v.value} for v in a.violations],
            }
            for a in desc.physical
        ],
    }


def _spatial_to_tree(a: SpatialAnnotation) -> Dict[str, Any]:
    out: Dict[str, Any] = {"element_id": a.element_id, "t": a.t}
    if a.position is not None:
        out["position"] = list(a.position)
    if a.orientation is not None:
        out["orientation"] = [list(r) for r in a.orientation]
    if a.distance_to_ego is not None:
        out["distance_to_ego"] = a.distance_to_ego
    if a.occupancy is not None:
        out["occupancy"] = list(a.occupancy)
    out["topology"] = [list(p) for p in a.topology]
    if a.visibility is not None:
        out["visibility"] = a.visibility
        out["occluded_by"] = list(a.occluded_by)
    return out


def anticipation_to_tree(ant: ScenarioAnticipation) -> Dict[str, Any]:
    return {
        "base": ant.base,
        "horizon": ant.horizon,
        "models": dict(sorted(ant.models.items())),
        "predicted_trajectories": {
            k: [_sample_to_tree(s) for s in v] for k, v in sorted(ant.predicted_trajectories.items())
        },
        "predicted_events": [
            {"t": e.t, "tag": e.tag, "element_ids": list(e.element_ids)} for e in ant.predicted_events
        ],
        "predicted_relations": [
            {"t": d.t, "element_id": d.element_id, "other_id": d.other_id, "relation": d.relation, "added": d.added}
            for d in ant.predicted_relations
        ],
    }


# -- tree -> typed ----------------------------------------------------------


def _need(node, key: str, path: str):
    if not isinstance(node, dict):
        raise SchemaError(path, "expected an object")
    if key not in node:
        raise SchemaError(f"{path}.{key}", "missing key")
    return node[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, "expected a number")
    out = float(value)
    if not math.isfinite(out):
        raise SchemaError(path, "expected a finite number")
    return out


def _opt_num(value, path: str) -> Optional[float]:
    return None if value is None else _num(value, path)


def _str(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, "expected a string")
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list")
    return value


def _vec(value, n: int, path: str):
    items = _list(value, path)
    if len(items) != n:
        raise SchemaError(path, f"expected {n} numbers")
    return tuple(_num(x, f"{path}[{i}]") for i, x in enumerate(items))


def _interval(value, path: str):
    return _vec(value, 2, path)


def _matrix(value, path: str):
    rows = _list(value, path)
    if len(rows) != 3:
        raise SchemaError(path, "expected a 3x3 matrix")
    return tuple(_vec(r, 3, f"{path}[{i}]") for i, r in enumerate(rows))


def _param_from_tree(value, path: str):
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        return Quantity(_num(_need(value, "value", path), f"{path}.value"), _str(_need(value, "unit", path), f"{path}.unit"))
    raise SchemaError(path, "expected a string or a {value, unit} quantity")


def _params(value, path: str):
    if not isinstance(value, dict):
        raise SchemaError(path, "expected an object")
    return {str(k): _param_from_tree(v, f"{path}.{k}") for k, v in value.items()}


def _sample_from_tree(node, path: str) -> StateSample:
    t = _num(_need(node, "t", path), f"{path}.t")
    position = _vec(_need(node, "position", path), 3, f"{path}.position")
    if "orientation" in node:
        orientation = _matrix(node["orientation"], f"{path}.orientation")
    elif "yaw" in node:
        orientation = yaw_matrix(_num(node["yaw"], f"{path}.yaw"))
    else:
        raise SchemaError(f"{path}.orientation", "missing key (orientation or yaw)")
    speed = _num(node.get("speed", 0.0), f"{path}.speed")
    yaw_rate = _opt_num(node.get("yaw_rate"), f"{path}.yaw_rate")
    return StateSample(t, position, orientation, speed, yaw_rate)


def _intervals_from_tree(value, path: str) -> List[StateInterval]:
    out = []
    for i, node in enumerate(_list(value, path)):
        p = f"{path}[{i}]"
        a, b = _interval(_need(node, "interval", p), f"{p}.interval")
        out.append(StateInterval(_str(_need(node, "state", p), f"{p}.state"), a, b))
    return out


def _pairs(value, path: str):
    out = []
    for i, item in enumerate(_list(value, path)):
        item = _list(item, f"{path}[{i}]")
        if len(item) != 2:
            raise SchemaError(f"{path}[{i}]", "expected [id, relation]")
        out.append((_str(item[0], f"{path}[{i}][0]"), _str(item[1], f"{path}[{i}][1]")))
    return out


def _opt(node, key: str, path: str, convert):
    value = node.get(key)
    return None if value is None else convert(value, f"{path}.{key}")


def _strs(value, path: str) -> List[str]:
    return [_str(x, f"{path}[{i}]") for i, x in enumerate(_list(value, path))]


def _timed_vectors(value, path: str):
    out = []
    for i, item in enumerate(_list(value, path)):
        item = _list(item, f"{path}[{i}]")
        if len(item) != 2:
            raise SchemaError(f"{path}[{i}]", "expected [t, [x, y, z]]")
        out.append((_num(item[0], f"{path}[{i}][0]"), _vec(item[1], 3, f"{path}[{i}][1]")))
    return out


def context_from_tree(node, path: str = "context") -> Context:
    if not isinstance(node, dict):
        raise SchemaError(path, "expected an object")
    layers = {}
    raw_layers = node.get("layers", {})
    if not isinstance(raw_layers, dict):
        raise SchemaError(f"{path}.layers", "expected an object keyed by layer id")
    for key, entries in raw_layers.items():
        lp = f"{path}.layers.{key}"
        try:
            layer = int(key)
        except (TypeError, ValueError):
            raise SchemaError(lp, "layer id must be an integer") from None
        items = []
        for i, e in enumerate(_list(entries, lp)):
            ep = f"{lp}[{i}]"
            props = e.get("properties", {}) if isinstance(e, dict) else {}
            if not isinstance(props, dict):
                raise SchemaError(f"{ep}.properties", "expected an object")
            items.append(
                LayerEntry(
                    _str(_need(e, "id", ep), f"{ep}.id"),
                    _str(_need(e, "kind", ep), f"{ep}.kind"),
                    _str(e.get("label", ""), f"{ep}.label"),
                    copy.deepcopy(props),
                )
            )
        layers[layer] = items
    rules = []
    for i, r in enumerate(_list(node.get("rules", []), f"{path}.rules")):
        rp = f"{path}.rules[{i}]"
        rules.append(
            Rule(
                _str(_need(r, "id", rp), f"{rp}.id"),
                _str(_need(r, "kind", rp), f"{rp}.kind"),
                _params(r.get("parameters", {}), f"{rp}.parameters"),
            )
        )
    channel = []
    for i, u in enumerate(_list(node.get("driver_channel", []), f"{path}.driver_channel")):
        up = f"{path}.driver_channel[{i}]"
        channel.append(Utterance(_num(_need(u, "t", up), f"{up}.t"), _str(_need(u, "text", up), f"{up}.text")))
    return Context(layers, rules, channel)


def description_from_tree(tree) -> ScenarioDescription:
    if not isinstance(tree, dict):
        raise SchemaError("$", "expected an object")
    desc = ScenarioDescription(
        id=_str(_need(tree, "id", "$"), "id"),
        window=_interval(_need(tree, "window", "$"), "window"),
        ego_id=_str(_need(tree, "ego_id", "$"), "ego_id"),
        context=context_from_tree(tree.get("context", {})),
    )
    for i, m in enumerate(_list(tree.get("modalities", []), "modalities")):
        p = f"modalities[{i}]"
        samples = []
        for j, s in enumerate(_list(m.get("samples", []) if isinstance(m, dict) else None, f"{p}.samples")):
            s = _list(s, f"{p}.samples[{j}]")
            if len(s) != 2:
                raise SchemaError(f"{p}.samples[{j}]", "expected [t, payload_ref]")
            samples.append((_num(s[0], f"{p}.samples[{j}][0]"), _str(s[1], f"{p}.samples[{j}][1]")))
        desc.modalities.append(
            ModalityStream(_str(_need(m, "kind", p), f"{p}.kind"), _str(m.get("source", ""), f"{p}.source"), samples)
        )
    for i, e in enumerate(_list(tree.get("elements", []), "elements")):
        p = f"elements[{i}]"
        traj = [
            _sample_from_tree(s, f"{p}.trajectory[{j}]")
            for j, s in enumerate(_list(e.get("trajectory", []) if isinstance(e, dict) else None, f"{p}.trajectory"))
        ]
        desc.elements.append(Element(_str(_need(e, "id", p), f"{p}.id"), traj))
    for i, a in enumerate(_list(tree.get("semantic", []), "semantic")):
        p = f"semantic[{i}]"
        desc.semantic.append(
            SemanticAnnotation(
                element_id=_str(_need(a, "element_id", p), f"{p}.element_id"),
                t=_num(_need(a, "t", p), f"{p}.t"),
                class_=_str(_need(a, "class", p), f"{p}.class"),
                attributes=_strs(a.get("attributes", []), f"{p}.attributes"),
                state=_str(_need(a, "state", p), f"{p}.state"),
                affordances=_strs(a.get("affordances", []), f"{p}.affordances"),
            )
        )
    for i, a in enumerate(_list(tree.get("spatial", []), "spatial")):
        p = f"spatial[{i}]"
        vis = a.get("visibility") if isinstance(a, dict) else None
        desc.spatial.append(
            SpatialAnnotation(
                element_id=_str(_need(a, "element_id", p), f"{p}.element_id"),
                t=_num(_need(a, "t", p), f"{p}.t"),
                position=_opt(a, "position", p, lambda v, q: _vec(v, 3, q)),
                orientation=_opt(a, "orientation", p, _matrix),
                distance_to_ego=_opt(a, "distance_to_ego", p, _num),
                occupancy=_opt(a, "occupancy", p, lambda v, q: _vec(v, 3, q)),
                topology=_pairs(a.get("topology", []), f"{p}.topology"),
                visibility=None if vis is None else _str(vis, f"{p}.visibility"),
                occluded_by=_strs(a.get("occluded_by", []), f"{p}.occluded_by"),
            )
        )
    for i, a in enumerate(_list(tree.get("temporal", []), "temporal")):
        p = f"temporal[{i}]"
        desc.temporal.append(
            TemporalAnnotation(
                element_id=_str(_need(a, "element_id", p), f"{p}.element_id"),
                interval=_interval(_need(a, "interval", p), f"{p}.interval"),
                velocity_samples=_timed_vectors(a.get("velocity_samples", []), f"{p}.velocity_samples"),
                acceleration_samples=_timed_vectors(a.get("acceleration_samples", []), f"{p}.acceleration_samples"),
                state_sequence=_intervals_from_tree(a.get("state_sequence", []), f"{p}.state_sequence"),
                orderings=_pairs(a.get("orderings", []), f"{p}.orderings"),
                periodicity=_opt_num(a.get("periodicity"), f"{p}.periodicity"),
                visibility_sequence=_intervals_from_tree(a.get("visibility_sequence", []), f"{p}.visibility_sequence"),
            )
        )
    for i, a in enumerate(_list(tree.get("physical", []), "physical")):
        p = f"physical[{i}]"
        constraints = []
        for j, c in enumerate(_list(a.get("constraint_set", []) if isinstance(a, dict) else None, f"{p}.constraint_set")):
            cp = f"{p}.constraint_set[{j}]"
            constraints.append(
                Constraint(
                    _str(_need(c, "id", cp), f"{cp}.id"),
                    _str(_need(c, "kind", cp), f"{cp}.kind"),
                    _params(c.get("parameters", {}), f"{cp}.parameters"),
                )
            )
        violations = []
        for j, v in enumerate(_list(a.get("violations", []), f"{p}.violations")):
            vp = f"{p}.violations[{j}]"
            violations.append(
                ViolationRecord(
                    _str(_need(v, "constraint_id", vp), f"{vp}.constraint_id"),
                    _num(_need(v, "t", vp), f"{vp}.t"),
                    _num(_need(v, "value", vp), f"{vp}.value"),
                )
            )
        desc.physical.append(
            PhysicalAnnotation(
                element_id=_str(_need(a, "element_id", p), f"{p}.element_id"),
                interval=_interval(_need(a, "interval", p), f"{p}.interval"),
                model=_str(_need(a, "model", p), f"{p}.model"),
                material_tags=_strs(a.get("material_tags", []), f"{p}.material_tags"),
                constraint_set=constraints,
                violations=violations,
            )
        )
    return desc


def anticipation_from_tree(tree) -> ScenarioAnticipation:
    if not isinstance(tree, dict):
        raise SchemaError("$", "expected an object")
    ant = ScenarioAnticipation(
        base=_str(_need(tree, "base", "$"), "base"),
        horizon=_num(_need(tree, "horizon", "$"), "horizon"),
    )
    models = tree.get("models", {})
    if not isinstance(models, dict):
        raise SchemaError("models", "expected an object")
    ant.models = {str(k): _str(v, f"models.{k}") for k, v in models.items()}
    trajs = tree.get("predicted_trajectories", {})
    if not isinstance(trajs, dict):
        raise SchemaError("predicted_trajectories", "expected an object")
    for k, samples in trajs.items():
        p = f"predicted_trajectories.{k}"
        ant.predicted_trajectories[str(k)] = [_sample_from_tree(s, f"{p}[{j}]") for j, s in enumerate(_list(samples, p))]
    for i, e in enumerate(_list(tree.get("predicted_events", []), "predicted_events")):
        p = f"predicted_events[{i}]"
        ant.predicted_events.append(
            PredictedEvent(
                _num(_need(e, "t", p), f"{p}.t"),
                _str(_need(e, "tag", p), f"{p}.tag"),
                tuple(_strs(_need(e, "element_ids", p), f"{p}.element_ids")),
            )
        )
    for i, d in enumerate(_list(tree.get("predicted_relations", []), "predicted_relations")):
        p = f"predicted_relations[{i}]"
        added = _need(d, "added", p)
        if not isinstance(added, bool):
            raise SchemaError(f"{p}.added", "expected a boolean")
        ant.predicted_relations.append(
            RelationDelta(
                _num(_need(d, "t", p), f"{p}.t"),
                _str(_need(d, "element_id", p), f"{p}.element_id"),
                _str(_need(d, "other_id", p), f"{p}.other_id"),
                _str(_need(d, "relation", p), f"{p}.relation"),
                added,
            )
        )
    return ant


# -- canonical ordering -----------------------------------------------------


def _sorted_params(params):
    return dict(sorted(params.items()))


def canonical(desc: ScenarioDescription) -> ScenarioDescription:
    """Deep copy with every set-like list in a fixed order.

    Trajectory samples are shared with ``desc``: they are never modified here.
    """
    shared = {id(s): s for e in desc.elements for s in e.trajectory}
    d = copy.deepcopy(desc, shared)
    ctx = d.context
    ctx.layers = {k: sorted(v, key=lambda e: e.id) for k, v in sorted(ctx.layers.items())}
    for entries in ctx.layers.values():
        for e in entries:
            for key in ("attributes", "affordances", "materials"):
                if isinstance(e.properties.get(key), list):
                    # An empty list says nothing; keep one spelling of "none".
                    if e.properties[key]:
                        e.properties[key] = sorted(e.properties[key])
                    else:
                        del e.properties[key]
            e.properties = dict(sorted(e.properties.items()))
    ctx.rules = sorted(ctx.rules, key=lambda r: r.id)
    for r in ctx.rules:
        r.parameters = _sorted_params(r.parameters)
    ctx.driver_channel = sorted(ctx.driver_channel, key=lambda u: (u.t, u.text))
    d.modalities = sorted(d.modalities, key=lambda m: (m.kind, m.source))
    for m in d.modalities:
        m.samples = sorted(m.samples)
    d.elements = sorted(d.elements, key=lambda e: e.id)
    for e in d.elements:
        e.trajectory = sorted(e.trajectory, key=lambda s: s.t)
    d.semantic = sorted(d.semantic, key=lambda a: (a.element_id, a.t))
    for a in d.semantic:
        a.attributes = sorted(a.attributes)
        a.affordances = sorted(set(a.affordances))
    d.spatial = sorted(d.spatial, key=lambda a: (a.element_id, a.t))
    for a in d.spatial:
        a.topology = sorted(set(a.topology))
        a.occluded_by = sorted(set(a.occluded_by))
    d.temporal = sorted(d.temporal, key=lambda a: (a.element_id, a.interval))
    for a in d.temporal:
        a.velocity_samples = sorted(a.velocity_samples)
        a.acceleration_samples = sorted(a.acceleration_samples)
        a.state_sequence = sorted(a.state_sequence, key=lambda s: (s.start, s.end, s.state))
        a.visibility_sequence = sorted(a.visibility_sequence, key=lambda s: (s.start, s.end, s.state))
        a.orderings = sorted(set(a.orderings))
    d.physical = sorted(d.physical, key=lambda a: (a.element_id, a.interval))
    for a in d.physical:
        a.material_tags = sorted(a.material_tags)
        a.constraint_set = sorted(a.constraint_set, key=lambda c: c.id)
        for c in a.constraint_set:
            c.parameters = _sorted_params(c.parameters)
        a.violations = sorted(a.violations, key=lambda v: (v.constraint_id, v.t, v.value))
    return d


def canonical_anticipation(ant: ScenarioAnticipation) -> ScenarioAnticipation:
    a = copy.deepcopy(ant)
    a.predicted_trajectories = {k: sorted(v, key=lambda s: s.t) for k, v in sorted(a.predicted_trajectories.items())}
    a.predicted_events = sorted(a.predicted_events, key=lambda e: (e.t, e.tag, e.element_ids))
    a.predicted_relations = sorted(
        a.predicted_relations, key=lambda r: (r.t, r.element_id, r.other_id, r.relation, r.added)
    )
    a.models = dict(sorted(a.models.items()))
    return a


# -- files ------------------------------------------------------------------


def dumps_json(tree) -> str:
    return json.dumps(tree, indent=1, sort_keys=True) + "\n"


def description_to_json(desc: ScenarioDescription) -> str:
    return dumps_json(description_to_tree(canonical(desc)))


def anticipation_to_json(ant: ScenarioAnticipation) -> str:
    return dumps_json(anticipation_to_tree(canonical_anticipation(ant)))


def description_from_json(text: str) -> ScenarioDescription:
    return description_from_tree(json.loads(text))


def trees_close(a, b, rel_tol: float = 1e-5, abs_tol: float = 1e-9) -> bool:
    """Structural equality of two JSON-like trees with float tolerance."""
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b or a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return math.isclose(float(a), float(b), rel_tol=rel_tol, abs_tol=abs_tol)
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(trees_close(a[k], b[k], rel_tol, abs_tol) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(trees_close(x, y, rel_tol, abs_tol) for x, y in zip(a, b))
    return a == b


def descriptions_close(a: ScenarioDescription, b: ScenarioDescription, rel_tol: float = 1e-5, abs_tol: float = 1e-5) -> bool:
    """Equality at the precision of the block language (six significant digits).

    The absolute tolerance covers rotation-matrix entries near zero, which
    move by up to about 5e-6 when an angle is written with six digits.
    """
    return trees_close(description_to_tree(canonical(a)), description_to_tree(canonical(b)), rel_tol, abs_tol)
