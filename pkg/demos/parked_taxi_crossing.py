"""A pedestrian crosses ahead of the ego while a taxi is parked with its door open.

Derives the ground-truth description from the packaged log, prints what each
dimension says about the scene, predicts 6 s ahead and decides.

    python demos/parked_taxi_crossing.py
"""

import json

from scenario_understanding import TaskSpec, anticipate, decide, derive
from scenario_understanding.dsl import parse_trajectory_log
from scenario_understanding.fixtures import read_fixture
from scenario_understanding.geometry import occupancy_volume
from scenario_understanding.schema import context_from_tree


def main():
    log = parse_trajectory_log(read_fixture("scenario1", "trajectory_log"))
    context = context_from_tree(json.loads(read_fixture("scenario1", "context")))
    desc = derive(log, context, scenario_id="scenario1")

    print(f"window {desc.window} s, {len(desc.elements)} elements\n")
    for eid in desc.element_ids():
        if eid == desc.ego_id:
            continue
        sem, spat = desc.semantic_at(eid), desc.spatial_at(eid)
        phys = desc.physical_for(eid)
        relations = ", ".join(f"{rel} {other}" for other, rel in spat.topology if other == desc.ego_id)
        print(f"{eid:14s} {sem.class_:14s} {sem.state:8s} {spat.distance_to_ego:6.2f} m  [{relations}]  model={phys.model}")
        if spat.occupancy is not None:
            print(f"{'':14s} occupies {occupancy_volume(spat.occupancy):.4f} m^3")

    ant = anticipate(desc, 6.0, 0.1)
    print("\npredicted events:")
    for e in ant.predicted_events:
        print(f"  {e.t:4.1f} s {e.tag} {' '.join(e.element_ids)}")

    for action in decide(desc, ant, TaskSpec("decision")):
        print(f"\ndecision: {action.verb}")
        for ref in action.justification:
            print(f"  because {ref}")


if __name__ == "__main__":
    main()
