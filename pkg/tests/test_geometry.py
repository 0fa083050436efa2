import math

import numpy as np
import pytest

from oracles import quadrant_relation, sampled_box_gap, swept_visibility
from scenario_understanding.geometry import (
    Box,
    Footprint,
    GeometryParams,
    Placement,
    box_contains,
    classify_directional_relation,
    derive_topology,
    footprint_from_pose,
    footprints_overlap,
    occlusion_state,
    occupancy_volume,
    segment_hits_footprint,
    surface_distance,
)
from scenario_understanding.model import StateSample, yaw_matrix
from scenario_understanding.geometry import placement_of


def test_directional_sectors_from_ego_frame():
    assert classify_directional_relation((0, 0), 0.0, (5, 0)) == {"front_of"}
    assert classify_directional_relation((0, 0), 0.0, (-5, 0)) == {"behind"}
    assert classify_directional_relation((0, 0), 0.0, (0, 5)) == {"left_of"}
    assert classify_directional_relation((0, 0), 0.0, (0, -5)) == {"right_of"}
    # Heading turns the frame: facing +y, a point at +x is to the right.
    assert classify_directional_relation((0, 0), math.pi / 2, (5, 0)) == {"right_of"}


def test_sector_edges_belong_to_front_and_behind():
    assert classify_directional_relation((0, 0), 0.0, (1, 1)) == {"front_of"}
    assert classify_directional_relation((0, 0), 0.0, (-1, -1)) == {"behind"}
    assert classify_directional_relation((0, 0), 0.0, (0, 0)) == {"touching"}


def test_directional_matches_quadrant_oracle():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        ref = rng.uniform(-20, 20, size=2)
        heading = rng.uniform(-math.pi, math.pi)
        target = ref + rng.uniform(-10, 10, size=2)
        assert classify_directional_relation(ref, heading, target) == {quadrant_relation(ref, heading, target)}


def test_footprint_rejects_bad_extent():
    with pytest.raises(ValueError):
        Footprint((0, 0), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        footprint_from_pose((0, 0, 0), 0.0, (1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        occupancy_volume((0.1, 0.1, 0.0))


def test_box_offset_moves_along_body_axes():
    box = footprint_from_pose((1.0, 2.0, 0.0), math.pi / 2, (4.0, 2.0, 1.5), box_offset=(1.0, 0.5))
    assert box.footprint.center == pytest.approx((0.5, 3.0))
    assert (box.z_min, box.z_max) == (0.0, 1.5)


def test_occupancy_volume():
    assert occupancy_volume((0.1, 0.1, 0.1)) == pytest.approx(0.001)


def test_surface_distance_examples():
    a = Box(Footprint((0, 0), 1.0, 1.0, 0.0), 0.0, 1.0)
    b = Box(Footprint((5, 0), 1.0, 1.0, 0.0), 0.0, 1.0)
    assert surface_distance(a, b) == pytest.approx(3.0)
    above = Box(Footprint((0, 0), 1.0, 1.0, 0.0), 3.0, 4.0)
    assert surface_distance(a, above) == pytest.approx(2.0)
    corner = Box(Footprint((4, 5), 1.0, 1.0, 0.0), 0.0, 1.0)
    assert surface_distance(a, corner) == pytest.approx(13**0.5)
    assert surface_distance(a, Box(Footprint((1.5, 0), 1.0, 1.0, 0.3), 0.0, 1.0)) == 0.0


def test_surface_distance_matches_sampling_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        boxes = []
        for _ in range(2):
            z0 = rng.uniform(-1, 1)
            boxes.append(
                (tuple(rng.uniform(-6, 6, size=2)), rng.uniform(0.05, 3), rng.uniform(0.05, 1.5), rng.uniform(-3.2, 3.2), z0, z0 + rng.uniform(0.1, 2))
            )
        a, b = boxes
        ours = surface_distance(Box(Footprint(*a[:4]), a[4], a[5]), Box(Footprint(*b[:4]), b[4], b[5]))
        assert abs(ours - sampled_box_gap(a, b, spacing=1e-3)) <= 1e-3


def test_overlap_is_symmetric_and_touching_counts():
    a = Footprint((0, 0), 1.0, 1.0, 0.0)
    assert footprints_overlap(a, Footprint((2.0, 0), 1.0, 1.0, 0.0))
    assert not footprints_overlap(a, Footprint((2.01, 0), 1.0, 1.0, 0.0))
    b = Footprint((1.9, 1.9), 1.0, 0.2, math.pi / 4)
    assert footprints_overlap(a, b) == footprints_overlap(b, a)


def test_box_contains():
    outer = Box(Footprint((0, 0), 3.0, 2.0, 0.0), 0.0, 3.0)
    inner = Box(Footprint((0.5, 0), 0.5, 0.5, 0.7), 0.5, 1.0)
    assert box_contains(outer, inner)
    assert not box_contains(inner, outer)


def _placement(eid_pos, heading=0.0, extent=(1.0, 1.0, 1.0), t=0.0):
    sample = StateSample(t, (eid_pos[0], eid_pos[1], 0.0), yaw_matrix(heading), 0.0, 0.0)
    return placement_of(sample, extent)


def test_topology_inverse_pairs():
    snap = {"ego": _placement((0, 0), extent=(4.5, 1.8, 1.5)), "p": _placement((6, 0)), "q": _placement((0, 5))}
    topo = derive_topology(snap, "ego")
    assert ("ego", "front_of") in topo["p"] and ("p", "behind") in topo["ego"]
    assert ("ego", "left_of") in topo["q"] and ("q", "right_of") in topo["ego"]
    assert ("ego", "near") in topo["p"] and ("p", "near") in topo["ego"]
    assert not any(rel == "touching" for _, rel in topo["p"])


def test_topology_uses_ego_heading_for_every_pair():
    snap = {"ego": _placement((0, 0), heading=math.pi / 2), "a": _placement((10, 0)), "b": _placement((10, 3))}
    topo = derive_topology(snap, "ego")
    # Seen along the ego heading (+y), b lies in front of a.
    assert ("a", "front_of") in topo["b"]


def test_topology_rejects_mixed_times_and_missing_ego():
    with pytest.raises(ValueError):
        derive_topology({"ego": _placement((0, 0)), "a": _placement((3, 0), t=0.1)}, "ego")
    with pytest.raises(ValueError):
        derive_topology({"a": _placement((3, 0))}, "ego")


def test_near_radius_is_configurable():
    snap = {"ego": _placement((0, 0)), "a": _placement((6, 0))}
    assert ("ego", "near") not in derive_topology(snap, "ego", GeometryParams(near_radius=2.0))["a"]


def test_segment_clipping():
    fp = Footprint((5, 0), 1.0, 1.0, 0.0)
    assert segment_hits_footprint((0, 0), (10, 0), fp)
    assert not segment_hits_footprint((0, 0), (3, 0), fp)
    assert not segment_hits_footprint((0, 2), (10, 2), fp)


def test_occlusion_states():
    wall = Footprint((5, 0), 0.5, 3.0, 0.0)
    assert occlusion_state((0, 0), Footprint((10, 0), 1.0, 1.0, 0.0), [wall]).state == "full"
    assert occlusion_state((0, 0), Footprint((10, 5.5), 1.0, 1.0, 0.0), [wall]).state == "partial"
    assert occlusion_state((0, 0), Footprint((10, 12), 1.0, 1.0, 0.0), [wall]).state == "visible"
    assert occlusion_state((0, 0), Footprint((10, 0), 1.0, 1.0, 0.0), []).fraction == 0.0


def test_occlusion_rejects_degenerate_input():
    target = Footprint((10, 0), 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        occlusion_state((0, 0), target, [Footprint((0, 0), 1.0, 1.0, 0.0)])
    with pytest.raises(ValueError):
        occlusion_state((0, 0), target, [target])


def test_occlusion_matches_sweep_on_visible_and_full():
    from test_acceptance import random_occlusion_config

    rng = np.random.default_rng(3)
    compared = 0
    for _ in range(1500):
        cfg = random_occlusion_config(rng)
        if cfg is None:
            continue
        target, occluders, fp, ofs = cfg
        expected = swept_visibility((0.0, 0.0), target, occluders)
        if expected in ("visible", "full"):
            compared += 1
            assert occlusion_state((0.0, 0.0), fp, ofs).state == expected
    assert compared > 500


def test_placement_type():
    p = _placement((1, 2), heading=0.3)
    assert isinstance(p, Placement)
    assert p.heading == pytest.approx(0.3)
