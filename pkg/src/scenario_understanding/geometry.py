"""Plan-view geometry: directional relations, box distances, topology, occlusion.

Boxes are oriented rectangles in the ground plane extruded over a z interval.
Directional relations between two elements are always expressed in the ego
frame, so that ``left_of(a, b)`` holds exactly when ``right_of(b, a)`` does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Mapping, NamedTuple, Sequence, Set, Tuple

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .model import INVERSE_RELATION, Element, StateSample, as_matrix, matrix_yaw

COINCIDENT_TOL = 1e-9


@dataclass(frozen=True)
class GeometryParams:
    half_angle_deg: float = 45.0
    touch_gap: float = 0.05
    near_radius: float = 10.0


@dataclass(frozen=True)
class Footprint:
    """Oriented rectangle: centre (m), half length/width (m), heading (rad)."""

    center: Tuple[float, float]
    half_length: float
    half_width: float
    heading: float

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_width > 0):
            raise ValueError("footprint half-extents must be > 0")

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """Corners in counter-clockwise order, shape (4, 2)."""
        u, v = self.axes()
        c = np.asarray(self.center, dtype=float)
        hl, hw = self.half_length, self.half_width
        return np.array([c + hl * u + hw * v, c - hl * u + hw * v, c - hl * u - hw * v, c + hl * u - hw * v])

    def to_local(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        u, v = self.axes()
        return np.stack([pts @ u, pts @ v], axis=-1)

    def contains_point(self, point, tol: float = 0.0) -> bool:
        x, y = self.to_local(point)
        return abs(x) <= self.half_length + tol and abs(y) <= self.half_width + tol


@dataclass(frozen=True)
class Box:
    footprint: Footprint
    z_min: float = 0.0
    z_max: float = 1.0


def footprint_from_pose(position, heading: float, extent, box_offset=(0.0, 0.0)) -> Box:
    """Box of an element whose reference point sits at ``position`` on the ground.

    ``box_offset`` shifts the box centre along the body (forward, left) axes.
    """
    length, width, height = (float(x) for x in extent)
    if min(length, width, height) <= 0:
        raise ValueError("extent components must be > 0")
    c, s = math.cos(heading), math.sin(heading)
    fx, fy = float(box_offset[0]), float(box_offset[1])
    center = (position[0] + c * fx - s * fy, position[1] + s * fx + c * fy)
    z0 = float(position[2]) if len(position) > 2 else 0.0
    return Box(Footprint(center, length / 2.0, width / 2.0, heading), z0, z0 + height)


def occupancy_volume(extent) -> float:
    l, w, h = (float(x) for x in extent)
    if min(l, w, h) <= 0:
        raise ValueError("extent components must be > 0")
    return l * w * h


# -- directional relations ----------------------------------------------------


def bearing_deg(ref_position, ref_heading: float, target_position) -> float:
    dx = target_position[0] - ref_position[0]
    dy = target_position[1] - ref_position[1]
    c, s = math.cos(ref_heading), math.sin(ref_heading)
    return math.degrees(math.atan2(-s * dx + c * dy, c * dx + s * dy))


def classify_directional_relation(
    ref_position, ref_heading: float, target_position, half_angle_deg: float = 45.0
) -> FrozenSet[str]:
    """Sector of ``target_position`` seen from a reference pose.

    Front and behind sectors are closed (ties at the sector edge go there);
    left and right are open.  A target on top of the reference is only
    ``touching``.
    """
    if math.hypot(target_position[0] - ref_position[0], target_position[1] - ref_position[1]) < COINCIDENT_TOL:
        return frozenset({"touching"})
    beta = bearing_deg(ref_position, ref_heading, target_position)
    if abs(beta) <= half_angle_deg:
        return frozenset({"front_of"})
    if abs(beta) >= 180.0 - half_angle_deg:
        return frozenset({"behind"})
    return frozenset({"left_of"}) if beta > 0 else frozenset({"right_of"})


# -- distances ----------------------------------------------------------------


def _project(corners: np.ndarray, axis: np.ndarray) -> Tuple[float, float]:
    p = corners @ axis
    return float(p.min()), float(p.max())


def footprints_overlap(a: Footprint, b: Footprint, tol: float = 0.0) -> bool:
    """Separating-axis test; touching boundaries count as overlap."""
    ca, cb = a.corners(), b.corners()
    for axis in (*a.axes(), *b.axes()):
        a0, a1 = _project(ca, axis)
        b0, b1 = _project(cb, axis)
        if a1 < b0 - tol or b1 < a0 - tol:
            return False
    return True


def _points_to_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance of every point to every segment, shape (n_points, n_segments)."""
    d = ends - starts
    rel = points[:, None, :] - starts[None, :, :]
    denom = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("pij,ij->pi", rel, d) / denom, 0.0, 1.0)
    closest = starts[None, :, :] + t[..., None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def planar_distance(a: Footprint, b: Footprint) -> float:
    if footprints_overlap(a, b):
        return 0.0
    ca, cb = a.corners(), b.corners()
    ea = (ca, np.roll(ca, -1, axis=0))
    eb = (cb, np.roll(cb, -1, axis=0))
    return float(min(_points_to_segments(ca, *eb).min(), _points_to_segments(cb, *ea).min()))


def surface_distance(a: Box, b: Box) -> float:
    """Minimum Euclidean gap between two boxes (0 when they overlap)."""
    dz = max(0.0, a.z_min - b.z_max, b.z_min - a.z_max)
    return math.hypot(planar_distance(a.footprint, b.footprint), dz)


def box_contains(outer: Box, inner: Box, tol: float = 1e-9) -> bool:
    if inner.z_min < outer.z_min - tol or inner.z_max > outer.z_max + tol:
        return False
    local = outer.footprint.to_local(inner.footprint.corners())
    return bool(
        np.all(np.abs(local[:, 0]) <= outer.footprint.half_length + tol)
        and np.all(np.abs(local[:, 1]) <= outer.footprint.half_width + tol)
    )


# -- snapshots and topology -----------------------------------------------------


@dataclass(frozen=True)
class Placement:
    """State of one element at one snapshot time."""

    t: float
    position: Tuple[float, float, float]
    heading: float
    box: Box


def interpolate_state(element: Element, t: float, tol: float = 1e-9) -> StateSample:
    """State at ``t``: linear in position/speed, spherical in orientation."""
    traj = element.trajectory
    if not traj or t < traj[0].t - tol or t > traj[-1].t + tol:
        raise ValueError(f"t={t} outside the trajectory span of '{element.id}'")
    times = [s.t for s in traj]
    i = int(np.searchsorted(times, t))
    for j in (i - 1, i):
        if 0 <= j < len(traj) and abs(traj[j].t - t) <= tol:
            return traj[j]
    a, b = traj[i - 1], traj[i]
    w = (t - a.t) / (b.t - a.t)
    pos = tuple(float(x) for x in (1 - w) * np.asarray(a.position) + w * np.asarray(b.position))
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix([a.orientation, b.orientation]))
    rot = as_matrix(slerp([w]).as_matrix()[0])
    speed = (1 - w) * a.speed + w * b.speed
    yaw_rate = None
    if a.yaw_rate is not None and b.yaw_rate is not None:
        yaw_rate = (1 - w) * a.yaw_rate + w * b.yaw_rate
    return StateSample(float(t), pos, rot, float(speed), yaw_rate)  # type: ignore[arg-type]


def placement_of(sample: StateSample, extent, box_offset=(0.0, 0.0)) -> Placement:
    heading = matrix_yaw(sample.orientation)
    return Placement(sample.t, tuple(sample.position), heading, footprint_from_pose(sample.position, heading, extent, box_offset))


def derive_topology(
    snapshot: Mapping[str, Placement], ego_id: str, params: GeometryParams = GeometryParams()
) -> Dict[str, Set[Tuple[str, str]]]:
    """Relations of every element to every other one at a single instant.

    ``topology[a]`` holds ``(b, rel)`` meaning "a rel b".
    """
    if ego_id not in snapshot:
        raise ValueError(f"ego '{ego_id}' missing from snapshot")
    times = {p.t for p in snapshot.values()}
    if max(times) - min(times) > 1e-9:
        raise ValueError("snapshot mixes timestamps; interpolate to a common time first")
    heading = snapshot[ego_id].heading
    ids = sorted(snapshot)
    topo: Dict[str, Set[Tuple[str, str]]] = {i: set() for i in ids}

    def add(a: str, b: str, rel: str) -> None:
        topo[a].add((b, rel))
        topo[b].add((a, INVERSE_RELATION[rel]))

    for i, a in enumerate(ids):
        pa = snapshot[a]
        for b in ids[i + 1 :]:
            pb = snapshot[b]
            for rel in classify_directional_relation(pb.position, heading, pa.position, params.half_angle_deg):
                add(a, b, rel)
            gap = surface_distance(pa.box, pb.box)
            if gap <= params.touch_gap:
                add(a, b, "touching")
            if gap <= params.near_radius:
                add(a, b, "near")
            if box_contains(pa.box, pb.box):
                add(a, b, "contains")
            elif box_contains(pb.box, pa.box):
                add(b, a, "contains")
            if footprints_overlap(pa.box.footprint, pb.box.footprint):
                if pa.box.z_min > pb.box.z_max:
                    add(a, b, "above")
                elif pb.box.z_min > pa.box.z_max:
                    add(b, a, "above")
    return topo


# -- occlusion ------------------------------------------------------------------


class Occlusion(NamedTuple):
    state: str  # visible | partial | full
    fraction: float
    blocked_by: Tuple[int, ...]  # indices into the occluder list


def segment_hits_footprint(start, end, fp: Footprint, eps: float = 1e-12) -> bool:
    """True when the open segment start->end passes through the rectangle."""
    p0 = fp.to_local(start)
    p1 = fp.to_local(end)
    d = p1 - p0
    lo, hi = 0.0, 1.0
    for k, half in ((0, fp.half_length), (1, fp.half_width)):
        if abs(d[k]) < 1e-15:
            if abs(p0[k]) > half:
                return False
            continue
        t0 = (-half - p0[k]) / d[k]
        t1 = (half - p0[k]) / d[k]
        if t0 > t1:
            t0, t1 = t1, t0
        lo, hi = max(lo, t0), min(hi, t1)
        if hi - lo <= eps:
            return False
    return hi - lo > eps


def occlusion_samples(target: Footprint) -> np.ndarray:
    return np.vstack([target.corners(), np.asarray(target.center, dtype=float)[None, :]])


def occlusion_state(ego_position, target: Footprint, occluders: Sequence[Footprint]) -> Occlusion:
    """Visibility of ``target`` from ``ego_position`` past ``occluders``.

    Five rays go to the target's corners and centre; the fraction is the share
    of blocked rays.
    """
    origin = np.asarray(ego_position, dtype=float)[:2]
    for k, occ in enumerate(occluders):
        if occ == target:
            raise ValueError(f"occluder {k} is the target itself")
        if occ.contains_point(origin):
            raise ValueError(f"viewpoint lies inside occluder {k}")
    blocked = 0
    blockers: Set[int] = set()
    for point in occlusion_samples(target):
        hit = [k for k, occ in enumerate(occluders) if segment_hits_footprint(origin, point, occ)]
        if hit:
            blocked += 1
            blockers.update(hit)
    if blocked == 0:
        state = "visible"
    elif blocked == 5:
        state = "full"
    else:
        state = "partial"
    return Occlusion(state, blocked / 5.0, tuple(sorted(blockers)))
