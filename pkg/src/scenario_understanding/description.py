"""Ground-truth description of a scenario from a trajectory log and its context.

``derive`` turns raw element trajectories into semantic, spatial, temporal
and physical annotations over the window [-T_s, 0].  The last log row is the
present; earlier times are negative.
"""

from __future__ import annotations

import copy
from typing import Dict, List, Optional, Sequence

from . import scene
from .config import RunConfig
from .dsl import TrajectoryLog
from .geometry import derive_topology, surface_distance
from .model import (
    Constraint,
    Context,
    Element,
    PhysicalAnnotation,
    Quantity,
    ScenarioDescription,
    SemanticAnnotation,
    SpatialAnnotation,
    StateSample,
    TemporalAnnotation,
    ViolationRecord,
)
from .physics import assign_model, check_constraints
from .temporal import classify_state, detect_periodicity, extract_state_sequence, finite_differences, order_relation, runs_to_intervals


def rebase(elements: Sequence[Element]) -> List[Element]:
    """Shift all times so that the latest sample sits at t = 0."""
    latest = max((s.t for e in elements for s in e.trajectory), default=0.0)
    if latest == 0.0:
        return list(elements)
    out = []
    for e in elements:
        out.append(Element(e.id, [StateSample(s.t - latest, s.position, s.orientation, s.speed, s.yaw_rate) for s in e.trajectory]))
    return out


def _round_time(t: float) -> float:
    # Keeps sample times such as -5.8999999 from leaking into annotation keys.
    return float(round(t, 9)) + 0.0


def derive(
    log: TrajectoryLog,
    context: Context,
    config: RunConfig = RunConfig(),
    scenario_id: str = "scenario",
) -> ScenarioDescription:
    """Description of the logged scenario (the description function)."""
    elements = rebase(log.to_elements())
    for e in elements:
        e.trajectory = [StateSample(_round_time(s.t), s.position, s.orientation, s.speed, s.yaw_rate) for s in e.trajectory]
    hints = log.class_hints()
    return derive_from_elements(elements, context, log.ego_id, config, scenario_id, hints)


def derive_from_elements(
    elements: Sequence[Element],
    context: Context,
    ego_id: str,
    config: RunConfig = RunConfig(),
    scenario_id: str = "scenario",
    class_hints: Optional[Dict[str, str]] = None,
) -> ScenarioDescription:
    hints = class_hints or {}
    elements = sorted(copy.deepcopy(list(elements)), key=lambda e: e.id)
    all_times = [s.t for e in elements for s in e.trajectory]
    window = (min(all_times), 0.0) if all_times else (0.0, 0.0)
    desc = ScenarioDescription(scenario_id, window, ego_id, copy.deepcopy(context), [], elements)
    if not elements:
        return desc

    infos = {e.id: scene.element_info(context, e.id, hints.get(e.id)) for e in elements}
    by_id = {e.id: e for e in elements}
    rules = context.yield_rules()
    gp, tp = config.geometry, config.temporal

    # Snapshots: semantic and spatial annotations at the sampled instants.
    for t in scene.snapshot_times(all_times, config.snapshot_period):
        samples = scene.samples_at(elements, t)
        placements = scene.placements_from_samples(samples, infos)
        topo = derive_topology(placements, ego_id, gp) if ego_id in placements else {}
        vis = scene.visibility(placements, ego_id, infos)
        for eid in sorted(samples):
            info = infos[eid]
            s = samples[eid]
            desc.semantic.append(
                SemanticAnnotation(
                    eid,
                    t,
                    info.class_,
                    list(info.attributes),
                    classify_state(by_id[eid], info.class_, t, tp, rules, by_id),
                    list(info.affordances),
                )
            )
            distance = 0.0
            if ego_id in placements and eid != ego_id:
                distance = surface_distance(placements[ego_id].box, placements[eid].box)
            visible = vis.get(eid)
            desc.spatial.append(
                SpatialAnnotation(
                    eid,
                    t,
                    tuple(s.position),  # type: ignore[arg-type]
                    s.orientation,
                    distance,
                    tuple(info.extent),  # type: ignore[arg-type]
                    sorted(topo.get(eid, ())),
                    None if visible is None else scene.VISIBILITY_LABEL[visible[0].state],
                    [] if visible is None else list(visible[1]),
                )
            )

    # Intervals: temporal and physical annotations per element.
    spans = {e.id: e.span for e in elements if len(e.trajectory) >= 2}
    for e in elements:
        if e.id not in spans:
            continue
        info = infos[e.id]
        times = e.times()
        vel = finite_differences(times, e.positions())
        acc = finite_differences(times, vel)
        seq = extract_state_sequence(e, info.class_, tp, rules, by_id)
        desc.temporal.append(
            TemporalAnnotation(
                e.id,
                spans[e.id],
                [(float(t), _vec(v)) for t, v in zip(times, vel)],
                [(float(t), _vec(a)) for t, a in zip(times, acc)],
                seq,
                sorted((o, order_relation(spans[e.id], spans[o], tp.order_eps)) for o in spans if o != e.id),
                detect_periodicity(seq, tp.period_tol),
                _visibility_sequence(e, elements, infos, ego_id) if e.id != ego_id else [],
            )
        )
        last = e.trajectory[-1]
        desc.physical.append(
            PhysicalAnnotation(
                e.id,
                spans[e.id],
                assign_model(info.class_, seq[-1].state, last.yaw_rate, config.physics.yaw_rate_threshold),
                list(info.materials),
                _constraints_for(e.id, info.class_, ego_id, context, config),
            )
        )

    records = {v.constraint_id: v for v in check_constraints(desc, config.physics, gp, tp)}
    for phys in desc.physical:
        for c in phys.constraint_set:
            v = records.get(c.id)
            if v is not None and v.status == "violated":
                phys.violations.append(ViolationRecord(c.id, v.t_worst, v.measured))  # type: ignore[arg-type]
    return desc


def _vec(v) -> tuple:
    return tuple(0.0 if abs(x) < 1e-12 else float(x) for x in v)


def _visibility_sequence(element: Element, elements, infos, ego_id: str):
    """Visible/partial/occluded runs of ``element`` seen from the ego at each of its sample times."""
    ego = next((e for e in elements if e.id == ego_id), None)
    if ego is None:
        return []
    times, labels = [], []
    for s in element.trajectory:
        if not scene.covers(ego, s.t):
            continue
        placements = scene.placements_from_samples(scene.samples_at(elements, s.t), infos)
        occ = scene.visibility(placements, ego_id, infos).get(element.id)
        if occ is None:
            continue
        times.append(s.t)
        labels.append(scene.VISIBILITY_LABEL[occ[0].state])
    if len(times) < 2 or abs(times[0] - element.span[0]) > 1e-9 or abs(times[-1] - element.span[1]) > 1e-9:
        return []
    return runs_to_intervals(times, labels)


def _constraints_for(element_id: str, class_: str, ego_id: str, context: Context, config: RunConfig) -> List[Constraint]:
    p = config.physics
    out = []
    if class_ in p.max_speed:
        out.append(Constraint(f"{element_id}.max_speed", "max_speed", {"limit": Quantity(float(p.max_speed[class_]), "m/s")}))
    if class_ in p.max_accel:
        out.append(Constraint(f"{element_id}.max_accel", "max_accel", {"limit": Quantity(float(p.max_accel[class_]), "m/s^2")}))
    if element_id == ego_id:
        out.append(
            Constraint(
                f"{element_id}.min_gap_rss",
                "min_gap_rss",
                {
                    "response_time": Quantity(p.rss_response_time, "s"),
                    "a_max": Quantity(p.rss_a_max, "m/s^2"),
                    "b_min": Quantity(p.rss_b_min, "m/s^2"),
                    "b_max": Quantity(p.rss_b_max, "m/s^2"),
                },
            )
        )
    for rule in context.yield_rules():
        if rule.parameters.get("yielder") == element_id:
            out.append(Constraint(f"{element_id}.{rule.id}", "traffic_rule", {"rule": rule.id}))
    return out

