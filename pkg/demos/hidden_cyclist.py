"""A turning bus hides a cyclist; a waiting car gives the cyclist away.

Shows the occlusion state at the present, the predicted reappearance, the
interaction decision, and how a hand-written candidate scores against the
derived ground truth.

    python demos/hidden_cyclist.py
"""

import json

from scenario_understanding import TaskSpec, anticipate, decide, description_from_json, score_understanding
from scenario_understanding.dsl import parse_annotation_text
from scenario_understanding.evaluation import render_score_text
from scenario_understanding.fixtures import read_fixture
from scenario_understanding.schema import anticipation_from_tree


def main():
    gt = description_from_json(read_fixture("scenario2", "description"))
    cyclist = gt.spatial_at("cyclist_1")
    car = gt.semantic_at("car_1")
    print(f"cyclist at t={cyclist.t:g} s: {cyclist.visibility}, hidden by {', '.join(cyclist.occluded_by)}")
    print(f"car_1 is {car.state} ({', '.join(car.attributes)})")

    ant = anticipate(gt, 6.0, 0.1)
    for e in ant.predicted_events:
        if e.tag in ("occluded", "reappears"):
            print(f"predicted: {e.tag} {' '.join(e.element_ids)} at {e.t:g} s")

    print()
    for action in decide(gt, ant, TaskSpec("interaction")):
        print(f"{action.verb}: {', '.join(action.justification)}")

    print("\ncandidate vs ground truth")
    cand = parse_annotation_text(read_fixture("scenario2", "candidate"))
    gt_ant = anticipation_from_tree(json.loads(read_fixture("scenario2", "anticipation")))
    score = score_understanding(gt, cand.description, gt_ant, cand.anticipation)
    print(render_score_text(score))


if __name__ == "__main__":
    main()
