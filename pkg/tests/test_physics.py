import math
import warnings

import numpy as np
import pytest

from oracles import euler_bicycle, rss_by_hand
from test_acceptance import random_rollout_case
from scenario_understanding.description import derive_from_elements
from scenario_understanding.model import Context, Element, LayerEntry, StateSample, yaw_matrix
from scenario_understanding.physics import (
    MotionModel,
    PredictionFallbackWarning,
    anticipate,
    assign_model,
    check_constraints,
    predict,
    rss_longitudinal_safe_distance,
)


def _line(eid, x0, y0, heading, speed, accel=0.0, times=(-0.2, -0.1, 0.0), yaw_rate=0.0):
    out = []
    for t in times:
        d = speed * t + 0.5 * accel * t * t
        out.append(StateSample(t, (x0 + d * math.cos(heading), y0 + d * math.sin(heading), 0.0), yaw_matrix(heading), speed + accel * t, yaw_rate))
    return Element(eid, out)


def test_rss_documented_value():
    assert rss_longitudinal_safe_distance(10, 0, 1, 2, 4, 8) == pytest.approx(29.0, abs=1e-9)
    assert rss_by_hand(10, 0, 1, 2, 4, 8) == pytest.approx(29.0, abs=1e-9)


def test_rss_matches_hand_derivation_and_clamps():
    rng = np.random.default_rng(0)
    for _ in range(200):
        args = (rng.uniform(0, 30), rng.uniform(0, 30), rng.uniform(0.1, 2), rng.uniform(0.5, 4), rng.uniform(2, 6), rng.uniform(6, 10))
        assert rss_longitudinal_safe_distance(*args) == pytest.approx(rss_by_hand(*args), abs=1e-9)
    assert rss_longitudinal_safe_distance(0, 30, 1, 2, 4, 8) == 0.0


def test_rss_monotone_in_rear_speed():
    values = [rss_longitudinal_safe_distance(v, 5, 1, 2, 4, 8) for v in np.linspace(0, 40, 100)]
    assert all(b >= a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("bad", [(10, 0, 0, 2, 4, 8), (10, 0, 1, -2, 4, 8), (10, 0, 1, 2, 0, 8), (10, 0, 1, 2, 4, 0)])
def test_rss_rejects_non_positive_parameters(bad):
    with pytest.raises(ValueError):
        rss_longitudinal_safe_distance(*bad)


def test_static_and_constant_velocity_are_exact():
    e = _line("a", 1.0, 2.0, 0.3, 4.0)
    for s in predict(e, MotionModel("static"), 1.0, 0.25):
        assert s.position == pytest.approx((1.0, 2.0, 0.0)) and s.speed == 0.0
    out = predict(e, MotionModel("constant_velocity"), 2.0, 0.5)
    assert [s.t for s in out] == [0.5, 1.0, 1.5, 2.0]
    assert out[-1].position == pytest.approx((1.0 + 8 * math.cos(0.3), 2.0 + 8 * math.sin(0.3), 0.0))


def test_constant_acceleration_is_exact():
    e = _line("a", 0.0, 0.0, 0.0, 5.0, accel=1.5)
    out = predict(e, MotionModel("constant_acceleration"), 2.0, 1.0)
    assert out[-1].position[0] == pytest.approx(5.0 * 2 + 0.5 * 1.5 * 4)
    assert out[-1].speed == pytest.approx(8.0)


def test_horizon_sample_added_when_not_a_multiple_of_dt():
    out = predict(_line("a", 0, 0, 0, 1.0), MotionModel("constant_velocity"), 1.05, 0.1)
    assert out[-1].t == 1.05 and out[2].t == 0.3


def test_bicycle_matches_small_step_euler():
    rng = np.random.default_rng(2)
    for _ in range(10):
        heading, speed = rng.uniform(-3, 3), rng.uniform(1, 10)
        steering, wheelbase, accel = rng.uniform(-0.4, 0.4), rng.uniform(1, 5), rng.uniform(0, 1)
        e = _line("a", 0.0, 0.0, heading, speed, times=(0.0,))
        model = MotionModel("kinematic_bicycle", wheelbase=wheelbase, steering=steering, acceleration=accel)
        final = predict(e, model, 3.0, 0.1)[-1]
        x, y, th, v = euler_bicycle(0.0, 0.0, heading, speed, steering, wheelbase, accel, 3.0)
        assert final.position[:2] == pytest.approx((x, y), abs=5e-3)
        assert final.speed == pytest.approx(v, abs=1e-6)
        assert math.remainder(final.yaw - th, 2 * math.pi) == pytest.approx(0.0, abs=1e-3)


def test_bicycle_without_yaw_rate_falls_back_with_warning():
    e = _line("a", 0, 0, 0, 5.0, yaw_rate=None)
    with pytest.warns(PredictionFallbackWarning):
        out = predict(e, MotionModel("kinematic_bicycle"), 1.0, 0.5)
    assert out[-1].position == pytest.approx((5.0, 0.0, 0.0))


def test_bicycle_steering_from_yaw_rate():
    e = _line("a", 0, 0, 0, 5.0, yaw_rate=0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = predict(e, MotionModel("kinematic_bicycle", wheelbase=3.0), 1.0, 0.1)
    assert out[-1].yaw == pytest.approx(0.2)


def test_prediction_semigroup():
    rng = np.random.default_rng(5)
    for _ in range(200):
        element, model = random_rollout_case(rng)
        a, b = int(rng.integers(1, 15)) * 0.1, int(rng.integers(1, 15)) * 0.1
        whole = predict(element, model, round(a + b, 9), 0.1)
        first = predict(element, model, round(a, 9), 0.1)
        rest = predict(Element("e", element.trajectory + first), model, round(b, 9), 0.1)
        assert whole[-1].t == rest[-1].t
        assert whole[-1].position == pytest.approx(rest[-1].position, abs=1e-6)


def test_predict_rejects_bad_arguments():
    e = _line("a", 0, 0, 0, 1.0)
    with pytest.raises(ValueError):
        predict(e, MotionModel("static"), 0.0, 0.1)
    with pytest.raises(ValueError):
        predict(e, MotionModel("static"), 1.0, -0.1)
    with pytest.raises(ValueError):
        MotionModel("teleport")
    with pytest.raises(ValueError):
        predict(Element("empty"), MotionModel("static"), 1.0, 0.1)


def test_model_assignment():
    assert assign_model("vehicle", "parked", 0.3) == "static"
    assert assign_model("static_object", "stopped", None) == "rigid_body"
    assert assign_model("pedestrian", "walking", 0.5) == "constant_velocity"
    assert assign_model("public_transport", "moving", 0.2) == "kinematic_bicycle"
    assert assign_model("vehicle", "moving", 0.0) == "constant_velocity"
    assert assign_model("vehicle", "moving", None) == "constant_velocity"


def _follow_scene(ego_speed, gap):
    times = [round(-2 + 0.1 * k, 9) for k in range(21)]
    ego = _line("ego", 0.0, 0.0, 0.0, ego_speed, times=times)
    lead = _line("lead", 4.5 + gap, 0.0, 0.0, 5.0, times=times)
    ctx = Context({4: [LayerEntry("ego", "element", "ego", {"class": "vehicle"}), LayerEntry("lead", "element", "lead", {"class": "vehicle"})]})
    return derive_from_elements([ego, lead], ctx, "ego")


def test_constraint_verdicts():
    close = {v.kind: v for v in check_constraints(_follow_scene(20.0, 8.0)) if v.element_id == "ego"}
    assert close["min_gap_rss"].status == "violated" and close["min_gap_rss"].margin < 0
    assert close["max_speed"].status == "violated"
    assert close["max_speed"].measured == pytest.approx(20.0)
    far = {v.kind: v for v in check_constraints(_follow_scene(5.0, 60.0)) if v.element_id == "ego"}
    assert far["min_gap_rss"].satisfied and far["max_speed"].satisfied


def test_anticipation_events_and_errors():
    desc = _follow_scene(10.0, 3.0)
    ant = anticipate(desc, 3.0, 0.1)
    assert set(ant.models) == {"ego", "lead"}
    assert all(0 < e.t <= 3.0 for e in ant.predicted_events)
    tags = {e.tag for e in ant.predicted_events}
    assert "touching" in tags
    with pytest.raises(ValueError):
        anticipate(desc, 0.0, 0.1)
    with pytest.raises(ValueError):
        anticipate(desc, 1.0, 0.0)
