"""Motion states, state sequences, interval orderings and periodicity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import Element, Rule, StateInterval

VEHICLE_CLASSES = ("vehicle", "public_transport")


@dataclass(frozen=True)
class TemporalParams:
    v_still: float = 0.1  # m/s
    park_duration: float = 5.0  # s
    order_eps: float = 0.1  # s
    period_tol: float = 0.1  # relative


def finite_differences(times: Sequence[float], values: np.ndarray) -> np.ndarray:
    """Central differences in the interior, one-sided at the ends."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 2:
        return np.zeros_like(values)
    return np.gradient(values, times, axis=0, edge_order=2 if len(times) >= 3 else 1)


def _sample_index(element: Element, t: float, tol: float = 1e-9) -> int:
    times = element.times()
    if len(times) == 0 or t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"t={t} outside the trajectory span of '{element.id}'")
    return int(np.argmin(np.abs(times - t)))


def _speed_at(element: Element, t: float) -> float:
    times = element.times()
    speeds = np.array([s.speed for s in element.trajectory])
    return float(np.interp(t, times, speeds))


def _still_run(speeds: np.ndarray, times: np.ndarray, i: int, v_still: float) -> float:
    """Duration of the maximal run of still samples around index ``i``."""
    lo = hi = i
    while lo > 0 and speeds[lo - 1] < v_still:
        lo -= 1
    while hi < len(speeds) - 1 and speeds[hi + 1] < v_still:
        hi += 1
    return float(times[hi] - times[lo])


def _yielding(element_id: str, t: float, rules: Sequence[Rule], others: Mapping[str, Element], v_still: float) -> bool:
    for rule in rules:
        p = rule.parameters
        if p.get("type") != "yield_to" or p.get("yielder") != element_id:
            continue
        holder = others.get(p.get("priority"))  # type: ignore[arg-type]
        if holder is None or not holder.trajectory:
            continue
        t0, t1 = holder.span
        if t0 - 1e-9 <= t <= t1 + 1e-9 and _speed_at(holder, t) >= v_still:
            return True
    return False


def classify_state(
    element: Element,
    class_: str,
    t: float,
    params: TemporalParams = TemporalParams(),
    rules: Sequence[Rule] = (),
    others: Optional[Mapping[str, Element]] = None,
) -> str:
    """State of ``element`` at ``t``.

    A still element named as yielder in a ``yield_to`` rule whose priority
    holder is moving at ``t`` is ``yielding``; this takes precedence over
    ``parked``.
    """
    i = _sample_index(element, t)
    speed = _speed_at(element, t)
    if speed >= params.v_still:
        return "walking" if class_ == "pedestrian" else "moving"
    if _yielding(element.id, t, rules, others or {}, params.v_still):
        return "yielding"
    if class_ in VEHICLE_CLASSES:
        speeds = np.array([s.speed for s in element.trajectory])
        if _still_run(speeds, element.times(), i, params.v_still) >= params.park_duration - 1e-9:
            return "parked"
    return "stopped"


def runs_to_intervals(times: Sequence[float], labels: Sequence[str]) -> List[StateInterval]:
    """Maximal runs of equal labels; boundaries sit midway between samples."""
    times = [float(t) for t in times]
    if len(times) < 2:
        raise ValueError("need at least 2 samples")
    out: List[StateInterval] = []
    start = times[0]
    for k in range(1, len(times)):
        if labels[k] != labels[k - 1]:
            boundary = round(0.5 * (times[k - 1] + times[k]), 9)
            out.append(StateInterval(labels[k - 1], start, boundary))
            start = boundary
    out.append(StateInterval(labels[-1], start, times[-1]))
    return out


def extract_state_sequence(
    element: Element,
    class_: str,
    params: TemporalParams = TemporalParams(),
    rules: Sequence[Rule] = (),
    others: Optional[Mapping[str, Element]] = None,
) -> List[StateInterval]:
    if len(element.trajectory) < 2:
        raise ValueError("need at least 2 samples")
    labels = [classify_state(element, class_, s.t, params, rules, others) for s in element.trajectory]
    return runs_to_intervals([s.t for s in element.trajectory], labels)


def order_relation(a: Tuple[float, float], b: Tuple[float, float], eps: float = 0.1) -> str:
    if a[1] < b[0] - eps:
        return "before"
    if b[1] < a[0] - eps:
        return "after"
    return "simultaneous"


def detect_periodicity(seq: Sequence[StateInterval], tol: float = 0.1) -> Optional[float]:
    """Smallest period (s) after which the state pattern repeats, or None.

    The period must consist of whole intervals.  The first and last
    intervals may be truncated by the observation window, so they are only
    required not to exceed their counterpart.
    """
    n = len(seq)
    if n < 4:
        return None
    states = [s.state for s in seq]
    durations = [s.duration for s in seq]
    for k in range(1, n // 2 + 1):
        if any(states[i] != states[i + k] for i in range(n - k)):
            continue
        ok, strict = True, 0
        for i in range(n - k):
            a, b = durations[i], durations[i + k]
            if i == 0 and a <= b * (1 + tol):
                continue
            if i + k == n - 1 and b <= a * (1 + tol):
                continue
            strict += 1
            if abs(a - b) > tol * max(a, b):
                ok = False
                break
        # Truncated ends alone are no evidence of a period.
        if not ok or strict == 0:
            continue
        interior = [sum(durations[i : i + k]) for i in range(1, n - k)]
        windows = interior or [sum(durations[:k])]
        return float(np.mean(windows))
    return None
