"""Scoring candidate descriptions and anticipations against ground truth, and task decisions.

Each dimension is scored on sets of annotation tuples after candidate ids
are mapped onto ground-truth ids.  Precision with no predictions is 1.0 and
recall with nothing to find is 1.0; F1 is 0 when both are 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import scene
from .config import DecisionParams, ScoringParams
from .geometry import Footprint, footprints_overlap, placement_of
from .model import (
    VRU_CLASSES,
    Action,
    PredictedEvent,
    ScenarioAnticipation,
    ScenarioDescription,
    StateSample,
    TaskSpec,
    annotation_ref,
    format_time,
)
from .schema import canonical, canonical_anticipation

DIMENSIONS = ("semantic", "spatial", "temporal", "physical")
SYMMETRIC_TAGS = ("touching", "near", "end_touching", "end_near")


# -- matching ---------------------------------------------------------------------


@dataclass
class Matching:
    pairs: List[Tuple[str, str]] = field(default_factory=list)  # (gt id, candidate id)
    unmatched_gt: List[str] = field(default_factory=list)
    unmatched_candidate: List[str] = field(default_factory=list)

    def candidate_to_gt(self) -> Dict[str, str]:
        return {c: g for g, c in self.pairs}


def _ids(desc: ScenarioDescription) -> List[str]:
    ids = set(desc.element_ids())
    for dim in DIMENSIONS:
        ids.update(a.element_id for a in getattr(desc, dim))
    return sorted(ids)


def _positions(desc: ScenarioDescription, element_id: str) -> Dict[str, np.ndarray]:
    """Known positions of an element keyed by formatted snapshot time."""
    out = {}
    for a in desc.spatial:
        if a.element_id == element_id and a.position is not None:
            out[format_time(a.t)] = np.asarray(a.position[:2], dtype=float)
    return out


def match_elements(gt: ScenarioDescription, cand: ScenarioDescription, radius: float = 2.0) -> Matching:
    """Pair candidate elements with ground-truth ones.

    Egos pair first, then equal ids, then same-class elements closest at
    their latest shared snapshot (within ``radius`` m); ties break on ids.
    """
    g_ids, c_ids = _ids(gt), _ids(cand)
    pairs: List[Tuple[str, str]] = []
    if gt.ego_id in g_ids and cand.ego_id in c_ids:
        pairs.append((gt.ego_id, cand.ego_id))
    used_g = {g for g, _ in pairs}
    used_c = {c for _, c in pairs}
    for eid in g_ids:
        if eid in c_ids and eid not in used_g and eid not in used_c:
            pairs.append((eid, eid))
            used_g.add(eid)
            used_c.add(eid)
    options = []
    for g in g_ids:
        if g in used_g:
            continue
        g_cls, g_pos = gt.class_of(g), _positions(gt, g)
        for c in c_ids:
            if c in used_c or cand.class_of(c) != g_cls or g_cls is None:
                continue
            c_pos = _positions(cand, c)
            shared = sorted(set(g_pos) & set(c_pos), key=float)
            if not shared:
                continue
            d = float(np.linalg.norm(g_pos[shared[-1]] - c_pos[shared[-1]]))
            if d <= radius:
                options.append((d, g, c))
    for d, g, c in sorted(options):
        if g not in used_g and c not in used_c:
            pairs.append((g, c))
            used_g.add(g)
            used_c.add(c)
    return Matching(
        sorted(pairs),
        [g for g in g_ids if g not in used_g],
        [c for c in c_ids if c not in used_c],
    )


# -- tuple extraction ---------------------------------------------------------------


def _norm_text(text: str) -> str:
    return " ".join(text.split()).lower()


def _mapper(matching: Optional[Matching]):
    table = matching.candidate_to_gt() if matching is not None else None

    def mapped(eid: str) -> str:
        if table is None:
            return eid
        return table.get(eid, f"unmatched:{eid}")

    return mapped


def semantic_tuples(desc: ScenarioDescription, mapped=lambda x: x) -> List[tuple]:
    out = []
    for a in desc.semantic:
        key = (mapped(a.element_id), format_time(a.t))
        out.append(("sem", *key, "class", a.class_))
        out.append(("sem", *key, "state", a.state))
        out += [("sem", *key, "attribute", _norm_text(x)) for x in set(a.attributes)]
        out += [("sem", *key, "affordance", x) for x in set(a.affordances)]
    return out


def spatial_tuples(desc: ScenarioDescription, mapped=lambda x: x) -> List[tuple]:
    out = []
    for a in desc.spatial:
        key = (mapped(a.element_id), format_time(a.t))
        out += [("spat", *key, "relation", rel, mapped(other)) for other, rel in set(a.topology)]
        if a.visibility is not None:
            out.append(("spat", *key, "visibility", a.visibility))
    return out


def physical_tuples(desc: ScenarioDescription, mapped=lambda x: x) -> List[tuple]:
    out = []
    for a in desc.physical:
        eid = mapped(a.element_id)
        out.append(("phys", eid, "model", a.model))
        out += [("phys", eid, "material", _norm_text(x)) for x in set(a.material_tags)]
        violated = {v.constraint_id for v in a.violations}
        kinds = {}
        for c in a.constraint_set:
            status = "violated" if c.id in violated else "satisfied"
            # One verdict per kind; a violation of any constraint of that kind wins.
            if kinds.get(c.kind) != "violated":
                kinds[c.kind] = status
        out += [("phys", eid, "constraint", kind, status) for kind, status in kinds.items()]
    return out


def _count(pred: Sequence[tuple], gt: Sequence[tuple]):
    gs, ps = set(gt), set(pred)
    return len(gs & ps), len(ps), len(gs), sorted(gs - ps), sorted(ps - gs)


def _interval_matches(gt_items, cand_items, iou_min: float) -> Tuple[int, List[tuple]]:
    """Greedy one-to-one matching of (key, state, start, end) items by temporal IoU."""
    options = []
    for i, (gk, gs, ga, gb) in enumerate(gt_items):
        for j, (ck, cs, ca, cb) in enumerate(cand_items):
            if gk != ck or gs != cs:
                continue
            inter = max(0.0, min(gb, cb) - max(ga, ca))
            union = max(gb, cb) - min(ga, ca)
            iou = inter / union if union > 0 else 0.0
            if iou >= iou_min:
                options.append((-iou, i, j))
    used_g, used_c = set(), set()
    for _, i, j in sorted(options):
        if i not in used_g and j not in used_c:
            used_g.add(i)
            used_c.add(j)
    missed = [gt_items[i] for i in range(len(gt_items)) if i not in used_g]
    return len(used_g), missed


def _sequence_items(desc: ScenarioDescription, mapped) -> List[tuple]:
    out = []
    for a in desc.temporal:
        eid = mapped(a.element_id)
        out += [((eid, "state"), si.state, si.start, si.end) for si in a.state_sequence]
        out += [((eid, "visibility"), si.state, si.start, si.end) for si in a.visibility_sequence]
    return sorted(out)


def _ordering_tuples(desc: ScenarioDescription, mapped) -> List[tuple]:
    return [("temp", mapped(a.element_id), "ordering", rel, mapped(o)) for a in desc.temporal for o, rel in set(a.orderings)]


@dataclass
class DimensionScore:
    dimension: str
    precision: float
    recall: float
    f1: float
    true_positives: int
    n_predicted: int
    n_ground_truth: int
    missed: List[str] = field(default_factory=list)
    spurious: List[str] = field(default_factory=list)
    extras: Dict[str, Optional[float]] = field(default_factory=dict)


def _prf(tp: int, n_pred: int, n_gt: int) -> Tuple[float, float, float]:
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_gt if n_gt else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def _label(item) -> str:
    return "|".join(str(x) for x in (item[0] + item[1:] if isinstance(item[0], tuple) else item))


def score_dimension(
    gt: ScenarioDescription,
    cand: ScenarioDescription,
    matching: Matching,
    dim: str,
    tolerances: ScoringParams = ScoringParams(),
) -> DimensionScore:
    if dim not in DIMENSIONS:
        raise ValueError(f"unknown dimension '{dim}'")
    return _score_canonical(canonical(gt), canonical(cand), matching, dim, tolerances)


def _score_canonical(
    gt: ScenarioDescription, cand: ScenarioDescription, matching: Matching, dim: str, tolerances: ScoringParams
) -> DimensionScore:
    mapped = _mapper(matching)
    extras: Dict[str, Optional[float]] = {}
    if dim == "semantic":
        tp, n_pred, n_gt, missed, spurious = _count(semantic_tuples(cand, mapped), semantic_tuples(gt))
    elif dim == "physical":
        tp, n_pred, n_gt, missed, spurious = _count(physical_tuples(cand, mapped), physical_tuples(gt))
    elif dim == "spatial":
        tp, n_pred, n_gt, missed, spurious = _count(spatial_tuples(cand, mapped), spatial_tuples(gt))
        g_dist = {(a.element_id, format_time(a.t)): a.distance_to_ego for a in gt.spatial if a.distance_to_ego is not None}
        c_dist = {
            (mapped(a.element_id), format_time(a.t)): a.distance_to_ego for a in cand.spatial if a.distance_to_ego is not None
        }
        errors = []
        for key in sorted(g_dist):
            if key in c_dist:
                err = abs(c_dist[key] - g_dist[key])  # type: ignore[operator]
                errors.append(err)
                if err <= tolerances.distance_tol:
                    tp += 1
                    continue
            missed.append(("spat", *key, "distance_to_ego", format(g_dist[key], ".6g")))
        for key in sorted(c_dist):
            if key not in g_dist or abs(c_dist[key] - g_dist[key]) > tolerances.distance_tol:  # type: ignore[operator]
                spurious.append(("spat", *key, "distance_to_ego", format(c_dist[key], ".6g")))
        n_pred += len(c_dist)
        n_gt += len(g_dist)
        extras["distance_mae"] = float(np.mean(errors)) if errors else None
    else:
        g_seq, c_seq = _sequence_items(gt, lambda x: x), _sequence_items(cand, mapped)
        seq_tp, seq_missed = _interval_matches(g_seq, c_seq, tolerances.interval_iou)
        c_matched_count = seq_tp
        o_tp, o_pred, o_gt, o_missed, o_spurious = _count(_ordering_tuples(cand, mapped), _ordering_tuples(gt, lambda x: x))
        tp = seq_tp + o_tp
        n_pred = len(c_seq) + o_pred
        n_gt = len(g_seq) + o_gt
        missed = [("temp", *item[0], item[1], format_time(item[2]), format_time(item[3])) for item in seq_missed] + o_missed
        spurious = o_spurious + ([("temp", "unmatched intervals", str(len(c_seq) - c_matched_count))] if len(c_seq) > c_matched_count else [])
        _, seq_recall, _ = _prf(seq_tp, len(c_seq), len(g_seq))
        extras["state_sequence_f1"] = _prf(seq_tp, len(c_seq), len(g_seq))[2]
        extras["ordering_accuracy"] = o_tp / o_gt if o_gt else 1.0
    precision, recall, f1 = _prf(tp, n_pred, n_gt)
    return DimensionScore(
        dim,
        precision,
        recall,
        f1,
        tp,
        n_pred,
        n_gt,
        sorted("|".join(map(str, m)) for m in missed),
        sorted("|".join(map(str, s)) for s in spurious),
        extras,
    )


# -- anticipation -----------------------------------------------------------------


@dataclass
class AnticipationScore:
    precision: float
    recall: float
    f1: float
    event_time_mae: Optional[float]
    ade: Optional[float]
    fde: Optional[float]
    missed_events: List[str] = field(default_factory=list)
    spurious_events: List[str] = field(default_factory=list)


def _event_key(e: PredictedEvent, mapped) -> Tuple[str, Tuple[str, ...]]:
    ids = tuple(mapped(x) for x in e.element_ids)
    if e.tag in SYMMETRIC_TAGS:
        ids = tuple(sorted(ids))
    return e.tag, ids


def score_anticipation(
    gt: Optional[ScenarioAnticipation],
    cand: Optional[ScenarioAnticipation],
    matching: Matching,
    tolerances: ScoringParams = ScoringParams(),
) -> AnticipationScore:
    mapped = _mapper(matching)
    g_events = sorted(gt.predicted_events, key=lambda e: (e.t, e.tag, e.element_ids)) if gt else []
    c_events = sorted(cand.predicted_events, key=lambda e: (e.t, e.tag, e.element_ids)) if cand else []
    options = []
    for i, g in enumerate(g_events):
        gk = _event_key(g, lambda x: x)
        for j, c in enumerate(c_events):
            if _event_key(c, mapped) == gk and abs(c.t - g.t) <= tolerances.event_time_tol:
                options.append((abs(c.t - g.t), i, j))
    used_g, used_c, errors = set(), set(), []
    for dt, i, j in sorted(options):
        if i not in used_g and j not in used_c:
            used_g.add(i)
            used_c.add(j)
            errors.append(dt)
    precision, recall, f1 = _prf(len(used_g), len(c_events), len(g_events))
    ade = fde = None
    if gt is not None and cand is not None:
        ade, fde = _displacement_errors(canonical_anticipation(gt), canonical_anticipation(cand), matching)
    return AnticipationScore(
        precision,
        recall,
        f1,
        float(np.mean(errors)) if errors else None,
        ade,
        fde,
        [g_events[i].ref for i in range(len(g_events)) if i not in used_g],
        [c_events[j].ref for j in range(len(c_events)) if j not in used_c],
    )


def _displacement_errors(gt: ScenarioAnticipation, cand: ScenarioAnticipation, matching: Matching):
    table = {g: c for g, c in matching.pairs}
    all_errors, finals = [], []
    for gid, g_samples in gt.predicted_trajectories.items():
        c_samples = cand.predicted_trajectories.get(table.get(gid, ""), [])
        if not g_samples or not c_samples:
            continue
        ct = np.array([s.t for s in c_samples])
        cp = np.array([s.position for s in c_samples], dtype=float)
        errs = []
        for s in g_samples:
            if ct[0] - 1e-9 <= s.t <= ct[-1] + 1e-9:
                q = np.array([np.interp(s.t, ct, cp[:, k]) for k in range(3)])
                errs.append(float(np.linalg.norm(q - np.asarray(s.position))))
        if errs:
            all_errors += errs
            finals.append(errs[-1])
    if not all_errors:
        return None, None
    return float(np.mean(all_errors)), float(np.mean(finals))


# -- understanding ----------------------------------------------------------------


@dataclass
class UnderstandingScore:
    dimensions: Dict[str, DimensionScore]
    anticipation: AnticipationScore
    aggregate: float
    matching: Matching
    drilldown: Dict[str, Dict[str, List[str]]] = field(default_factory=dict)

    @property
    def distance_mae(self) -> Optional[float]:
        return self.dimensions["spatial"].extras.get("distance_mae")


def score_understanding(
    gt: ScenarioDescription,
    cand: ScenarioDescription,
    gt_anticipation: Optional[ScenarioAnticipation] = None,
    cand_anticipation: Optional[ScenarioAnticipation] = None,
    tolerances: ScoringParams = ScoringParams(),
) -> UnderstandingScore:
    """Scores per dimension, for anticipation, and their weighted mean over the four dimensions."""
    matching = match_elements(gt, cand, tolerances.match_radius)
    gt_c, cand_c = canonical(gt), canonical(cand)
    dims = {d: _score_canonical(gt_c, cand_c, matching, d, tolerances) for d in DIMENSIONS}
    weights = {d: float(tolerances.weights.get(d, 1.0)) for d in DIMENSIONS}
    total = sum(weights.values())
    aggregate = sum(weights[d] * dims[d].f1 for d in DIMENSIONS) / total if total > 0 else 0.0
    ant = score_anticipation(gt_anticipation, cand_anticipation, matching, tolerances)
    drill: Dict[str, Dict[str, List[str]]] = {}
    for d, s in dims.items():
        for item in s.missed:
            eid = item.split("|")[1]
            drill.setdefault(eid, {}).setdefault(d, []).append(item)
    for ref in ant.missed_events:
        for eid in ref.split(":")[2].split("@")[0].split("+"):
            drill.setdefault(eid, {}).setdefault("anticipation", []).append(ref)
    for eid in matching.unmatched_gt:
        drill.setdefault(eid, {}).setdefault("matching", []).append("no candidate element")
    return UnderstandingScore(dims, ant, aggregate, matching, {k: drill[k] for k in sorted(drill)})


def _clean(x):
    if isinstance(x, float):
        return None if math.isnan(x) else round(x, 9)
    return x


def score_to_tree(score: UnderstandingScore, config_hash: str = "") -> dict:
    dims = {}
    for d, s in score.dimensions.items():
        dims[d] = {
            "precision": _clean(s.precision),
            "recall": _clean(s.recall),
            "f1": _clean(s.f1),
            "true_positives": s.true_positives,
            "n_predicted": s.n_predicted,
            "n_ground_truth": s.n_ground_truth,
            "missed": s.missed,
            "spurious": s.spurious,
            "extras": {k: _clean(v) for k, v in sorted(s.extras.items())},
        }
    a = score.anticipation
    return {
        "config_hash": config_hash,
        "conventions": {"precision_without_predictions": 1.0, "recall_without_ground_truth": 1.0},
        "aggregate": _clean(score.aggregate),
        "dimensions": dims,
        "anticipation": {
            "precision": _clean(a.precision),
            "recall": _clean(a.recall),
            "f1": _clean(a.f1),
            "event_time_mae": _clean(a.event_time_mae),
            "ade": _clean(a.ade),
            "fde": _clean(a.fde),
            "missed_events": a.missed_events,
            "spurious_events": a.spurious_events,
        },
        "matching": {
            "pairs": [list(p) for p in score.matching.pairs],
            "unmatched_gt": score.matching.unmatched_gt,
            "unmatched_candidate": score.matching.unmatched_candidate,
        },
        "drilldown": score.drilldown,
    }


CSV_COLUMNS = ("scenario", "dimension", "precision", "recall", "f1", "true_positives", "n_predicted", "n_ground_truth")


def score_rows(score: UnderstandingScore, scenario: str) -> List[List[str]]:
    def num(x):
        return "" if x is None else format(x, ".6f")

    rows = []
    for d in DIMENSIONS:
        s = score.dimensions[d]
        rows.append([scenario, d, num(s.precision), num(s.recall), num(s.f1), str(s.true_positives), str(s.n_predicted), str(s.n_ground_truth)])
    a = score.anticipation
    rows.append([scenario, "anticipation", num(a.precision), num(a.recall), num(a.f1), "", "", ""])
    rows.append([scenario, "aggregate", "", "", num(score.aggregate), "", "", ""])
    return rows


def rows_to_csv(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def render_score_text(score: UnderstandingScore) -> str:
    lines = [f"{'dimension':<13}{'precision':>10}{'recall':>10}{'f1':>10}"]
    for d in DIMENSIONS:
        s = score.dimensions[d]
        lines.append(f"{d:<13}{s.precision:>10.3f}{s.recall:>10.3f}{s.f1:>10.3f}")
    a = score.anticipation
    lines.append(f"{'anticipation':<13}{a.precision:>10.3f}{a.recall:>10.3f}{a.f1:>10.3f}")
    lines.append(f"aggregate {score.aggregate:.3f}")
    if score.distance_mae is not None:
        lines.append(f"distance MAE {score.distance_mae:.3f} m")
    if a.event_time_mae is not None:
        lines.append(f"event time MAE {a.event_time_mae:.3f} s")
    if a.ade is not None:
        lines.append(f"ADE {a.ade:.3f} m, FDE {a.fde:.3f} m")
    for eid, per_dim in score.drilldown.items():
        for d, items in per_dim.items():
            lines.append(f"  {eid} [{d}] {len(items)} missed: " + "; ".join(items[:3]) + (" ..." if len(items) > 3 else ""))
    return "\n".join(lines) + "\n"


# -- decisions --------------------------------------------------------------------


@dataclass(frozen=True)
class Conflict:
    element_id: str
    class_: str
    t: float  # first time the element enters the corridor
    run_over: bool


def conflict_corridor(desc: ScenarioDescription, params: DecisionParams = DecisionParams()) -> Optional[Footprint]:
    """Rectangle ahead of the ego front that its path will sweep."""
    infos = scene.infos_for_description(desc)
    ego_sample = _present_sample(desc, desc.ego_id)
    if ego_sample is None:
        return None
    info = infos.get(desc.ego_id) or scene.element_info(desc.context, desc.ego_id, "vehicle")
    box = placement_of(ego_sample, info.extent, info.box_offset).box.footprint
    u, _ = box.axes()
    center = np.asarray(box.center) + u * (box.half_length + params.corridor_length / 2)
    return Footprint(
        (float(center[0]), float(center[1])),
        params.corridor_length / 2,
        box.half_width + params.corridor_margin,
        box.heading,
    )


def _present_sample(desc: ScenarioDescription, element_id: str) -> Optional[StateSample]:
    e = desc.element(element_id)
    if e is not None and e.trajectory:
        return e.trajectory[-1]
    spat = desc.spatial_at(element_id)
    if spat is not None and spat.position is not None:
        orientation = spat.orientation or ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
        return StateSample(spat.t, spat.position, orientation, 0.0)
    return None


def find_conflicts(
    desc: ScenarioDescription, anticipation: ScenarioAnticipation, params: DecisionParams = DecisionParams()
) -> List[Conflict]:
    corridor = conflict_corridor(desc, params)
    if corridor is None:
        return []
    infos = scene.infos_for_description(desc)
    out = []
    for eid in _ids(desc):
        if eid == desc.ego_id:
            continue
        info = infos.get(eid) or scene.element_info(desc.context, eid, desc.class_of(eid))
        path = []
        present = _present_sample(desc, eid)
        if present is not None:
            path.append(present)
        path += anticipation.predicted_trajectories.get(eid, [])
        for s in path:
            if footprints_overlap(placement_of(s, info.extent, info.box_offset).box.footprint, corridor):
                cls = desc.class_of(eid) or info.class_
                out.append(Conflict(eid, cls, max(0.0, s.t), "can_be_run_over" in info.affordances))
                break
    return out


def _refs_for(desc: ScenarioDescription, element_id: str) -> List[str]:
    refs = []
    sem = desc.semantic_at(element_id)
    if sem is not None:
        refs.append(annotation_ref("sem", element_id, sem.t))
    spat = desc.spatial_at(element_id)
    if spat is not None:
        refs.append(annotation_ref("spat", element_id, spat.t))
    return refs


def _occlusion_refs(desc: ScenarioDescription, anticipation: ScenarioAnticipation, element_id: str) -> List[str]:
    refs = []
    spat = desc.spatial_at(element_id)
    if spat is not None and spat.visibility in ("occluded", "partial"):
        refs.append(annotation_ref("spat", element_id, spat.t))
    temp = desc.temporal_for(element_id)
    if temp is not None and any(si.state == "occluded" for si in temp.visibility_sequence):
        refs.append(annotation_ref("temp", element_id))
    for e in anticipation.predicted_events:
        if e.tag in ("occluded", "reappears") and element_id in e.element_ids:
            refs.append(e.ref)
    return refs


def decide(
    desc: ScenarioDescription,
    anticipation: Optional[ScenarioAnticipation],
    task: TaskSpec,
    params: DecisionParams = DecisionParams(),
) -> List[Action]:
    """Actions for a task, by rule priority yield > proceed_slow > proceed.

    Decision and interaction tasks need an anticipation.  Interaction tasks
    add ``inform_driver`` whenever the primary action is not ``proceed``;
    learning tasks emit ``store_observation`` for other road users seen
    yielding; perception tasks emit no action.
    """
    if task.kind == "perception":
        return []
    if task.kind == "learning":
        refs = [
            annotation_ref("sem", a.element_id, a.t)
            for a in canonical(desc).semantic
            if a.state == "yielding" and a.element_id != desc.ego_id and abs(a.t - desc.window[1]) <= 1e-9
        ]
        return [Action("store_observation", refs)] if refs else []
    if task.kind not in ("decision", "interaction"):
        raise ValueError(f"unknown task kind '{task.kind}'")
    if anticipation is None:
        raise ValueError(f"a {task.kind} task needs an anticipation")
    conflicts = find_conflicts(desc, anticipation, params)
    blocking = [c for c in conflicts if c.class_ in VRU_CLASSES or not c.run_over]
    if blocking:
        verb = "yield"
        trigger = blocking
    elif conflicts:
        verb, trigger = "proceed_slow", conflicts
    else:
        verb, trigger = "proceed", []
    justification: List[str] = []
    for c in sorted(trigger, key=lambda c: (c.class_ not in VRU_CLASSES, c.t, c.element_id)):
        for ref in _refs_for(desc, c.element_id) + _occlusion_refs(desc, anticipation, c.element_id):
            if ref not in justification:
                justification.append(ref)
    actions = [Action(verb, justification)]
    if task.kind == "interaction" and verb != "proceed":
        vru_refs = [r for c in trigger if c.class_ in VRU_CLASSES for r in _occlusion_refs(desc, anticipation, c.element_id)]
        actions.append(Action("inform_driver", list(dict.fromkeys(vru_refs)) or list(justification)))
    return actions


def actions_to_tree(actions: Sequence[Action]) -> List[dict]:
    return [{"verb": a.verb, "justification": list(a.justification)} for a in actions]


def actions_from_tree(tree) -> List[Action]:
    return [Action(str(a["verb"]), [str(x) for x in a.get("justification", [])]) for a in tree]
