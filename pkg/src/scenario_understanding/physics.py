"""Motion models, constraint checking, RSS safe distance and scenario anticipation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import scene
from .geometry import GeometryParams, classify_directional_relation, derive_topology, surface_distance
from .model import (
    Constraint,
    Element,
    PredictedEvent,
    Quantity,
    RelationDelta,
    ScenarioAnticipation,
    ScenarioDescription,
    StateSample,
    yaw_matrix,
)
from .temporal import TemporalParams, finite_differences

MOTION_KINDS = ("static", "constant_velocity", "constant_acceleration", "kinematic_bicycle")

# Motion model used to roll out each descriptive physical model.
ROLLOUT_KIND = {
    "static": "static",
    "constant_velocity": "constant_velocity",
    "constant_acceleration": "constant_acceleration",
    "kinematic_bicycle": "kinematic_bicycle",
    "rigid_body": "constant_velocity",
    "human_body": "constant_velocity",
}

SYMMETRIC_EVENT_RELATIONS = ("touching", "near")
DIRECTED_EVENT_RELATIONS = ("contains", "above")


class PredictionFallbackWarning(UserWarning):
    """A kinematic bicycle rollout fell back to constant velocity."""


@dataclass(frozen=True)
class MotionModel:
    kind: str
    wheelbase: float = 2.7  # m
    steering: Optional[float] = None  # rad; estimated from yaw rate when None
    acceleration: float = 0.0  # m/s^2, longitudinal, bicycle only

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion model '{self.kind}'")
        if self.kind == "kinematic_bicycle" and not self.wheelbase > 0:
            raise ValueError("wheelbase must be > 0")


@dataclass(frozen=True)
class PhysicsParams:
    max_speed: Mapping[str, float] = field(
        default_factory=lambda: {"vehicle": 13.9, "public_transport": 13.9, "cyclist": 8.3, "pedestrian": 3.0}
    )
    max_accel: Mapping[str, float] = field(
        default_factory=lambda: {"vehicle": 8.0, "public_transport": 8.0, "cyclist": 4.0, "pedestrian": 3.0}
    )
    rss_response_time: float = 1.0  # s
    rss_a_max: float = 2.0  # m/s^2
    rss_b_min: float = 4.0  # m/s^2
    rss_b_max: float = 8.0  # m/s^2
    yaw_rate_threshold: float = 1e-3  # rad/s


# -- prediction -----------------------------------------------------------------


def estimate_kinematics(element: Element) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, velocity and acceleration at the last sample.

    Uses the last three samples (quadratic fit) when available, the last two
    otherwise, and speed along the heading for a single sample.
    """
    traj = element.trajectory
    if not traj:
        raise ValueError(f"element '{element.id}' has no state")
    last = traj[-1]
    p = np.asarray(last.position, dtype=float)
    if len(traj) == 1:
        heading = np.asarray(last.orientation, dtype=float)[:, 0]
        return p, last.speed * heading, np.zeros(3)
    if len(traj) == 2:
        a, b = traj
        return p, (np.asarray(b.position) - np.asarray(a.position)) / (b.t - a.t), np.zeros(3)
    s0, s1, s2 = traj[-3:]
    p0, p1, p2 = (np.asarray(s.position, dtype=float) for s in (s0, s1, s2))
    h1, h2 = s1.t - s0.t, s2.t - s1.t
    d1, d2 = (p1 - p0) / h1, (p2 - p1) / h2
    acc = 2.0 * (d2 - d1) / (h1 + h2)
    vel = d2 + 0.5 * acc * h2
    return p, vel, acc


def _horizon_times(horizon: float, dt: float) -> List[float]:
    n = int(math.floor(horizon / dt + 1e-9))
    # Rounded so that k * dt lands on clean decimals (0.3, not 0.30000000000000004).
    times = [round(k * dt, 9) for k in range(1, n + 1)]
    if not times or times[-1] < horizon - 1e-9:
        times.append(horizon)
    return times


def _bicycle_rhs(state: np.ndarray, steering: float, wheelbase: float, accel: float) -> np.ndarray:
    _, _, theta, v = state
    return np.array([v * math.cos(theta), v * math.sin(theta), v * math.tan(steering) / wheelbase, accel])


def rk4_step(state: np.ndarray, h: float, steering: float, wheelbase: float, accel: float) -> np.ndarray:
    k1 = _bicycle_rhs(state, steering, wheelbase, accel)
    k2 = _bicycle_rhs(state + 0.5 * h * k1, steering, wheelbase, accel)
    k3 = _bicycle_rhs(state + 0.5 * h * k2, steering, wheelbase, accel)
    k4 = _bicycle_rhs(state + h * k3, steering, wheelbase, accel)
    return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def predict(element: Element, model: MotionModel, horizon: float, dt: float) -> List[StateSample]:
    """Roll ``element`` forward from its last sample to ``horizon`` seconds ahead.

    Samples are produced at dt, 2dt, ... and at the horizon itself.  A
    bicycle model without steering or yaw-rate information falls back to
    constant velocity and emits ``PredictionFallbackWarning``.
    """
    if not horizon > 0 or not dt > 0:
        raise ValueError("horizon and dt must be > 0")
    p0, v0, a0 = estimate_kinematics(element)
    last = element.trajectory[-1]
    t0 = last.t
    times = _horizon_times(horizon, dt)
    kind = model.kind

    steering = model.steering
    if kind == "kinematic_bicycle" and steering is None:
        if last.yaw_rate is None:
            warnings.warn(
                f"no yaw rate for '{element.id}'; using constant velocity", PredictionFallbackWarning, stacklevel=2
            )
            kind = "constant_velocity"
        else:
            steering = math.atan(last.yaw_rate * model.wheelbase / last.speed) if last.speed > 1e-6 else 0.0

    out: List[StateSample] = []
    if kind == "static":
        for tau in times:
            out.append(StateSample(round(t0 + tau, 9), last.position, last.orientation, 0.0, 0.0))
    elif kind == "constant_velocity":
        speed = float(np.linalg.norm(v0))
        for tau in times:
            pos = p0 + v0 * tau
            out.append(StateSample(round(t0 + tau, 9), _vec(pos), last.orientation, speed, 0.0))
    elif kind == "constant_acceleration":
        for tau in times:
            pos = p0 + v0 * tau + 0.5 * a0 * tau * tau
            out.append(StateSample(round(t0 + tau, 9), _vec(pos), last.orientation, float(np.linalg.norm(v0 + a0 * tau)), 0.0))
    else:
        state = np.array([p0[0], p0[1], last.yaw, last.speed], dtype=float)
        prev = 0.0
        for tau in times:
            h = tau - prev
            state = rk4_step(state, h, steering, model.wheelbase, model.acceleration)  # type: ignore[arg-type]
            prev = tau
            x, y, theta, v = state
            out.append(
                StateSample(
                    round(t0 + tau, 9),
                    (float(x), float(y), float(p0[2])),
                    yaw_matrix(float(theta)),
                    float(abs(v)),
                    float(v * math.tan(steering) / model.wheelbase),  # type: ignore[arg-type]
                )
            )
    return out


def _vec(a: np.ndarray):
    return (float(a[0]), float(a[1]), float(a[2]))


def assign_model(class_: str, state: str, yaw_rate: Optional[float], threshold: float = 1e-3) -> str:
    """Deterministic physical-model assignment for an element."""
    if state == "parked":
        return "static"
    if class_ in ("static_object", "infrastructure"):
        return "rigid_body"
    if class_ == "pedestrian":
        return "constant_velocity"
    if class_ in ("vehicle", "public_transport", "cyclist") and yaw_rate is not None and abs(yaw_rate) > threshold:
        return "kinematic_bicycle"
    return "constant_velocity"


# -- safety distance --------------------------------------------------------------


def rss_longitudinal_safe_distance(
    v_rear: float, v_front: float, rho: float, a_max: float, b_min: float, b_max: float
) -> float:
    """Minimal longitudinal gap (m) for a rear vehicle following a front one.

    The rear vehicle may accelerate at ``a_max`` during the response time
    ``rho`` and then brakes at least ``b_min``; the front one brakes at most
    ``b_max``.
    """
    if not (rho > 0 and a_max > 0 and b_min > 0 and b_max > 0):
        raise ValueError("rho, a_max, b_min and b_max must be > 0")
    v_after = v_rear + rho * a_max
    d = v_rear * rho + 0.5 * a_max * rho * rho + v_after * v_after / (2.0 * b_min) - v_front * v_front / (2.0 * b_max)
    return max(0.0, d)


# -- constraints ------------------------------------------------------------------


@dataclass
class ConstraintVerdict:
    constraint_id: str
    element_id: str
    kind: str
    status: str  # satisfied | violated | inconclusive
    margin: float  # signed, >= 0 iff satisfied; inf when never active, nan when inconclusive
    t_worst: Optional[float] = None
    measured: Optional[float] = None
    unit: str = ""

    @property
    def satisfied(self) -> bool:
        return self.status == "satisfied"


def _qty(params, name: str, default: float) -> float:
    v = params.get(name)
    return float(v.value) if isinstance(v, Quantity) else default


def _kinematic_series(desc: ScenarioDescription, element_id: str):
    """Times, velocity vectors and acceleration vectors for an element, or None."""
    temp = desc.temporal_for(element_id)
    element = desc.element(element_id)
    if temp is not None and temp.velocity_samples:
        t = np.array([s[0] for s in temp.velocity_samples])
        v = np.array([s[1] for s in temp.velocity_samples], dtype=float)
        if temp.acceleration_samples:
            ta = np.array([s[0] for s in temp.acceleration_samples])
            a = np.array([s[1] for s in temp.acceleration_samples], dtype=float)
        else:
            ta, a = t, finite_differences(t, v)
        return t, v, ta, a
    if element is not None and len(element.trajectory) >= 2:
        t = element.times()
        v = finite_differences(t, element.positions())
        return t, v, t, finite_differences(t, v)
    return None


def _verdict(c: Constraint, element_id: str, margins: np.ndarray, times: np.ndarray, measured: np.ndarray, unit: str):
    if len(margins) == 0:
        return ConstraintVerdict(c.id, element_id, c.kind, "satisfied", math.inf, None, None, unit)
    k = int(np.argmin(margins))
    m = float(margins[k])
    return ConstraintVerdict(
        c.id, element_id, c.kind, "satisfied" if m >= 0 else "violated", m, float(times[k]), float(measured[k]), unit
    )


def _inconclusive(c: Constraint, element_id: str, unit: str) -> ConstraintVerdict:
    return ConstraintVerdict(c.id, element_id, c.kind, "inconclusive", math.nan, None, None, unit)


def check_constraints(
    desc: ScenarioDescription,
    params: PhysicsParams = PhysicsParams(),
    geometry: GeometryParams = GeometryParams(),
    temporal: TemporalParams = TemporalParams(),
) -> List[ConstraintVerdict]:
    """One verdict per constraint listed in the physical annotations."""
    infos = scene.infos_for_description(desc)
    rules = {r.id: r for r in desc.context.rules}
    out: List[ConstraintVerdict] = []
    for phys in desc.physical:
        eid = phys.element_id
        for c in phys.constraint_set:
            if c.kind == "max_speed":
                series = _kinematic_series(desc, eid)
                limit = _qty(c.parameters, "limit", math.nan)
                if series is None or math.isnan(limit):
                    out.append(_inconclusive(c, eid, "m/s"))
                    continue
                t, v, _, _ = series
                speed = np.linalg.norm(v, axis=1)
                out.append(_verdict(c, eid, limit - speed, t, speed, "m/s"))
            elif c.kind == "max_accel":
                series = _kinematic_series(desc, eid)
                limit = _qty(c.parameters, "limit", math.nan)
                if series is None or math.isnan(limit):
                    out.append(_inconclusive(c, eid, "m/s^2"))
                    continue
                _, _, ta, a = series
                acc = np.linalg.norm(a, axis=1)
                out.append(_verdict(c, eid, limit - acc, ta, acc, "m/s^2"))
            elif c.kind == "min_gap_rss":
                out.append(_check_rss(desc, eid, c, params, geometry, infos))
            elif c.kind == "traffic_rule":
                out.append(_check_rule(desc, eid, c, rules, temporal))
            else:
                out.append(_inconclusive(c, eid, ""))
    return out


def _rss_margins(
    rear: Sequence[StateSample],
    rear_info: scene.ElementInfo,
    others: Mapping[str, Tuple[Sequence[StateSample], np.ndarray, scene.ElementInfo]],
    c_params,
    params: PhysicsParams,
    geometry: GeometryParams,
):
    """Worst RSS margin per rear sample against every element in the front sector."""
    rho = _qty(c_params, "response_time", params.rss_response_time)
    a_max = _qty(c_params, "a_max", params.rss_a_max)
    b_min = _qty(c_params, "b_min", params.rss_b_min)
    b_max = _qty(c_params, "b_max", params.rss_b_max)
    rows = []
    for k, s in enumerate(rear):
        pr = scene.placement_of(s, rear_info.extent, rear_info.box_offset)
        axis = np.array([math.cos(pr.heading), math.sin(pr.heading), 0.0])
        for oid, (samples, vel, info) in others.items():
            idx = [j for j, o in enumerate(samples) if abs(o.t - s.t) <= 1e-6]
            if not idx:
                continue
            j = idx[0]
            po = scene.placement_of(samples[j], info.extent, info.box_offset)
            if "front_of" not in classify_directional_relation(pr.position, pr.heading, po.position, geometry.half_angle_deg):
                continue
            v_front = max(0.0, float(vel[j] @ axis))
            gap = surface_distance(pr.box, po.box)
            safe = rss_longitudinal_safe_distance(max(0.0, s.speed), v_front, rho, a_max, b_min, b_max)
            rows.append((gap - safe, s.t, gap, oid))
    return rows


def _check_rss(desc, eid, c, params, geometry, infos) -> ConstraintVerdict:
    ego = desc.element(eid)
    if ego is None or not ego.trajectory:
        return _inconclusive(c, eid, "m")
    others = {}
    for e in desc.elements:
        if e.id == eid or len(e.trajectory) < 2:
            continue
        samples = [scene.interpolate_state(e, s.t) for s in ego.trajectory if scene.covers(e, s.t)]
        if len(samples) < 2:
            continue
        vel = finite_differences([s.t for s in samples], np.array([s.position for s in samples]))
        others[e.id] = (samples, vel, infos[e.id])
    rows = _rss_margins(ego.trajectory, infos[eid], others, c.parameters, params, geometry)
    if not rows:
        return ConstraintVerdict(c.id, eid, c.kind, "satisfied", math.inf, None, None, "m")
    worst = min(rows)
    return ConstraintVerdict(
        c.id, eid, c.kind, "satisfied" if worst[0] >= 0 else "violated", worst[0], worst[1], worst[2], "m"
    )


def _check_rule(desc, eid, c, rules, temporal: TemporalParams) -> ConstraintVerdict:
    rule = rules.get(c.parameters.get("rule"))  # type: ignore[arg-type]
    if rule is None or rule.parameters.get("type") != "yield_to":
        return _inconclusive(c, eid, "m/s")
    yielder = desc.element(eid)
    holder = desc.element(rule.parameters.get("priority"))  # type: ignore[arg-type]
    if yielder is None or holder is None or not yielder.trajectory or not holder.trajectory:
        return _inconclusive(c, eid, "m/s")
    margins, times, speeds = [], [], []
    for s in yielder.trajectory:
        if not scene.covers(holder, s.t):
            continue
        if scene.interpolate_state(holder, s.t).speed >= temporal.v_still:
            margins.append(temporal.v_still - s.speed)
            times.append(s.t)
            speeds.append(s.speed)
    return _verdict(c, eid, np.array(margins), np.array(times), np.array(speeds), "m/s")


# -- anticipation -----------------------------------------------------------------


@dataclass(frozen=True)
class AnticipationParams:
    geometry: GeometryParams = GeometryParams()
    temporal: TemporalParams = TemporalParams()
    physics: PhysicsParams = PhysicsParams()


def rollout_model(desc: ScenarioDescription, element: Element, info: scene.ElementInfo, physics: PhysicsParams) -> MotionModel:
    phys = desc.physical_for(element.id)
    if phys is not None and phys.model in ROLLOUT_KIND:
        kind = phys.model
    else:
        sem = desc.semantic_at(element.id)
        last = element.trajectory[-1]
        kind = assign_model(info.class_, sem.state if sem else "moving", last.yaw_rate, physics.yaw_rate_threshold)
    return MotionModel(ROLLOUT_KIND[kind], wheelbase=info.wheelbase)


def _event_changes(t: float, prev: Dict[str, set], cur: Dict[str, set]):
    deltas, events = [], []
    for eid in sorted(set(prev) | set(cur)):
        before, after = prev.get(eid, set()), cur.get(eid, set())
        for other, rel in sorted(after - before):
            deltas.append(RelationDelta(t, eid, other, rel, True))
        for other, rel in sorted(before - after):
            deltas.append(RelationDelta(t, eid, other, rel, False))
        for (other, rel), started in [(x, True) for x in after - before] + [(x, False) for x in before - after]:
            if other not in prev and other not in cur:
                continue
            if rel in SYMMETRIC_EVENT_RELATIONS and eid < other or rel in DIRECTED_EVENT_RELATIONS:
                tag = rel if started else f"end_{rel}"
                events.append(PredictedEvent(t, tag, (eid, other)))
    return deltas, events


def anticipate(
    desc: ScenarioDescription,
    horizon: float,
    dt: float,
    params: AnticipationParams = AnticipationParams(),
) -> ScenarioAnticipation:
    """Predict every element to ``horizon`` and extract relation, occlusion and constraint events."""
    if not horizon > 0:
        raise ValueError("anticipation horizon must be > 0")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    infos = scene.infos_for_description(desc)
    present = desc.window[1]
    live = [e for e in desc.elements if e.trajectory and abs(e.trajectory[-1].t - present) <= 1e-6]

    ant = ScenarioAnticipation(base=desc.id, horizon=float(horizon))
    rollouts: Dict[str, List[StateSample]] = {}
    for e in live:
        motion = rollout_model(desc, e, infos[e.id], params.physics)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", PredictionFallbackWarning)
            samples = predict(e, motion, horizon, dt)
        used = motion.kind
        if any(issubclass(w.category, PredictionFallbackWarning) for w in caught):
            used = "constant_velocity"
        ant.models[e.id] = used
        rollouts[e.id] = samples
        ant.predicted_trajectories[e.id] = samples

    times = _horizon_times(horizon, dt)
    base_samples = {e.id: e.trajectory[-1] for e in live}
    have_ego = desc.ego_id in base_samples

    def relations(samples):
        if not have_ego:
            return {}
        placements = scene.placements_from_samples(samples, infos)
        topo = derive_topology(placements, desc.ego_id, params.geometry)
        vis = scene.visibility(placements, desc.ego_id, infos)
        return topo, {k: (v[0].state if v else None) for k, v in vis.items()}

    if not have_ego:
        return ant
    prev_topo, prev_vis = relations(base_samples)
    events: List[PredictedEvent] = []
    for k, tau in enumerate(times):
        samples = {eid: rollouts[eid][k] for eid in rollouts}
        topo, vis = relations(samples)
        t = round(present + tau, 9)
        deltas, rel_events = _event_changes(t, prev_topo, topo)
        ant.predicted_relations.extend(deltas)
        events.extend(rel_events)
        for eid in sorted(vis):
            before, after = prev_vis.get(eid), vis[eid]
            if before is None or after is None or before == after:
                continue
            if after == "full":
                events.append(PredictedEvent(t, "occluded", (eid,)))
            elif before == "full":
                events.append(PredictedEvent(t, "reappears", (eid,)))
        prev_topo, prev_vis = topo, vis

    events.extend(_predicted_violations(desc, base_samples, rollouts, infos, params, present))
    ant.predicted_events = sorted(set(events), key=lambda e: (e.t, e.tag, e.element_ids))
    return ant


def _predicted_violations(desc, base_samples, rollouts, infos, params: AnticipationParams, present: float):
    """Onsets of constraint violations along the predicted trajectories."""
    events = []
    for phys in desc.physical:
        eid = phys.element_id
        if eid not in rollouts:
            continue
        series = [base_samples[eid]] + rollouts[eid]
        times = np.array([s.t for s in series])
        for c in phys.constraint_set:
            if c.kind == "max_speed":
                limit = _qty(c.parameters, "limit", math.inf)
                bad = np.array([s.speed for s in series]) > limit
                onset = _onset(bad)
                if onset is not None:
                    events.append(PredictedEvent(float(times[onset]), "violation:max_speed", (eid,)))
            elif c.kind == "max_accel":
                limit = _qty(c.parameters, "limit", math.inf)
                vel = finite_differences(times, np.array([s.position for s in series]))
                acc = np.linalg.norm(finite_differences(times, vel), axis=1)
                onset = _onset(acc > limit)
                if onset is not None:
                    events.append(PredictedEvent(float(times[onset]), "violation:max_accel", (eid,)))
            elif c.kind == "min_gap_rss":
                others = {}
                for oid, roll in rollouts.items():
                    if oid == eid:
                        continue
                    oseries = [base_samples[oid]] + roll
                    vel = finite_differences(times, np.array([s.position for s in oseries]))
                    others[oid] = (oseries, vel, infos[oid])
                rows = _rss_margins(series, infos[eid], others, c.parameters, params.physics, params.geometry)
                by_lead: Dict[str, Dict[float, float]] = {}
                for margin, t, _, oid in rows:
                    by_lead.setdefault(oid, {})[t] = margin
                for oid, margins in sorted(by_lead.items()):
                    bad = np.array([margins.get(float(t), 0.0) < 0 for t in times])
                    onset = _onset(bad)
                    if onset is not None:
                        events.append(PredictedEvent(float(times[onset]), "violation:min_gap_rss", (eid, oid)))
    return events


def _onset(bad: np.ndarray) -> Optional[int]:
    """First predicted index where a violation starts (index 0 is the present)."""
    for k in range(1, len(bad)):
        if bad[k] and not bad[k - 1]:
            return k
    return None
