"""Per-element static properties and snapshot assembly shared by derivation and anticipation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .geometry import Occlusion, Placement, interpolate_state, occlusion_state, placement_of
from .model import Context, Element, ScenarioDescription, StateSample

DEFAULT_EXTENTS = {
    "vehicle": (4.5, 1.8, 1.5),
    "pedestrian": (0.5, 0.5, 1.75),
    "cyclist": (1.8, 0.6, 1.7),
    "public_transport": (12.0, 2.5, 3.2),
    "static_object": (0.5, 0.5, 0.5),
    "infrastructure": (1.0, 1.0, 3.0),
}
FALLBACK_EXTENT = (1.0, 1.0, 1.0)

DEFAULT_AFFORDANCES = {
    "vehicle": ("can_occlude",),
    "public_transport": ("can_occlude",),
    "pedestrian": ("can_cross", "can_signal", "can_enter_vehicle"),
    "cyclist": ("can_cross", "can_signal"),
    "static_object": (),
    "infrastructure": ("can_occlude",),
}

DEFAULT_WHEELBASE = {"vehicle": 2.7, "public_transport": 6.0, "cyclist": 1.1}
FALLBACK_WHEELBASE = 2.7


@dataclass
class ElementInfo:
    class_: str
    extent: Tuple[float, float, float]
    box_offset: Tuple[float, float] = (0.0, 0.0)
    attributes: List[str] = field(default_factory=list)
    affordances: List[str] = field(default_factory=list)
    materials: List[str] = field(default_factory=list)
    wheelbase: float = FALLBACK_WHEELBASE


def element_info(context: Context, element_id: str, class_hint: Optional[str] = None) -> ElementInfo:
    """Static properties of an element from its context entry, falling back to class defaults."""
    props = context.element_properties(element_id)
    cls = props.get("class") or class_hint or "other:unknown"
    extent = props.get("extent") or DEFAULT_EXTENTS.get(cls, FALLBACK_EXTENT)  # type: ignore[arg-type]
    offset = props.get("box_offset") or (0.0, 0.0)
    affordances = sorted(set(DEFAULT_AFFORDANCES.get(cls, ())) | set(props.get("affordances", [])))  # type: ignore[arg-type]
    return ElementInfo(
        class_=cls,  # type: ignore[arg-type]
        extent=tuple(float(x) for x in extent),  # type: ignore[arg-type]
        box_offset=tuple(float(x) for x in offset),  # type: ignore[arg-type]
        attributes=list(props.get("attributes", [])),  # type: ignore[arg-type]
        affordances=affordances,
        materials=list(props.get("materials", [])),  # type: ignore[arg-type]
        wheelbase=float(props.get("wheelbase") or DEFAULT_WHEELBASE.get(cls, FALLBACK_WHEELBASE)),  # type: ignore[arg-type]
    )


def infos_for_description(desc: ScenarioDescription) -> Dict[str, ElementInfo]:
    """Element properties, preferring the latest semantic/spatial annotation where present."""
    out = {}
    for e in desc.elements:
        sem = desc.semantic_at(e.id)
        spat = desc.spatial_at(e.id)
        info = element_info(desc.context, e.id, sem.class_ if sem else None)
        if sem is not None:
            info.class_ = sem.class_
            info.affordances = sorted(sem.affordances)
            info.attributes = list(sem.attributes)
        if spat is not None and spat.occupancy is not None and not desc.context.element_properties(e.id).get("extent"):
            info.extent = tuple(spat.occupancy)  # type: ignore[assignment]
        phys = desc.physical_for(e.id)
        if phys is not None and phys.material_tags:
            info.materials = list(phys.material_tags)
        out[e.id] = info
    return out


def covers(element: Element, t: float, tol: float = 1e-9) -> bool:
    return bool(element.trajectory) and element.trajectory[0].t - tol <= t <= element.trajectory[-1].t + tol


def placements_from_samples(samples: Mapping[str, StateSample], infos: Mapping[str, ElementInfo]) -> Dict[str, Placement]:
    return {eid: placement_of(s, infos[eid].extent, infos[eid].box_offset) for eid, s in samples.items()}


def samples_at(elements: Sequence[Element], t: float) -> Dict[str, StateSample]:
    return {e.id: interpolate_state(e, t) for e in elements if covers(e, t)}


def visibility(
    placements: Mapping[str, Placement], ego_id: str, infos: Mapping[str, ElementInfo]
) -> Dict[str, Optional[Tuple[Occlusion, List[str]]]]:
    """Occlusion of every non-ego element by elements that can occlude.

    Entries are None when the ego is missing or sits inside an occluder.
    """
    out: Dict[str, Optional[Tuple[Occlusion, List[str]]]] = {}
    ego = placements.get(ego_id)
    for eid in sorted(placements):
        if eid == ego_id:
            continue
        if ego is None:
            out[eid] = None
            continue
        occ_ids = [
            o
            for o in sorted(placements)
            if o not in (eid, ego_id) and "can_occlude" in infos[o].affordances
        ]
        try:
            occ = occlusion_state(ego.position, placements[eid].box.footprint, [placements[o].box.footprint for o in occ_ids])
        except ValueError:
            out[eid] = None
            continue
        out[eid] = (occ, [occ_ids[k] for k in occ.blocked_by])
    return out


VISIBILITY_LABEL = {"visible": "visible", "partial": "partial", "full": "occluded"}


def snapshot_times(all_times: Sequence[float], period: float, tol: float = 1e-6) -> List[float]:
    """Sample times lying on multiples of ``period`` counted back from 0."""
    out = []
    for t in sorted(set(all_times)):
        k = round(t / period)
        if abs(t - k * period) <= tol:
            out.append(t)
    return out


def heading_of(sample: StateSample) -> float:
    return math.atan2(sample.orientation[1][0], sample.orientation[0][0])
