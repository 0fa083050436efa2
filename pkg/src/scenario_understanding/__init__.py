"""Structured traffic scenario understanding: description, anticipation, scoring and decisions.

Typical use::

    from scenario_understanding import derive, anticipate, decide, score_understanding
    from scenario_understanding.dsl import parse_trajectory_log

    log = parse_trajectory_log(open("trajectory_log.csv").read())
    desc = derive(log, context)
    ant = anticipate(desc, horizon=6.0, dt=0.1)
    actions = decide(desc, ant, TaskSpec("interaction"))
"""

from .config import RunConfig, load_config
from .description import derive, derive_from_elements
from .dsl import parse_annotation_text, parse_trajectory_log, serialize
from .evaluation import decide, match_elements, score_dimension, score_understanding
from .fixtures import SCENARIO_IDS, emit_fixture
from .geometry import classify_directional_relation, derive_topology, occlusion_state, surface_distance
from .model import (
    Action,
    Context,
    Element,
    ScenarioAnticipation,
    ScenarioDescription,
    StateSample,
    TaskSpec,
)
from .physics import anticipate, predict, rss_longitudinal_safe_distance
from .schema import description_from_json, description_to_json
from .validation import dimension_partition_check, validate_description

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Context",
    "Element",
    "RunConfig",
    "SCENARIO_IDS",
    "ScenarioAnticipation",
    "ScenarioDescription",
    "StateSample",
    "TaskSpec",
    "anticipate",
    "classify_directional_relation",
    "decide",
    "derive",
    "derive_from_elements",
    "derive_topology",
    "description_from_json",
    "description_to_json",
    "dimension_partition_check",
    "emit_fixture",
    "load_config",
    "match_elements",
    "occlusion_state",
    "parse_annotation_text",
    "parse_trajectory_log",
    "predict",
    "rss_longitudinal_safe_distance",
    "score_dimension",
    "score_understanding",
    "serialize",
    "surface_distance",
    "validate_description",
]
