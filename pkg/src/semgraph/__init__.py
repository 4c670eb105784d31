"""Semantic scanpaths, attention graphs and graph-based gaze metrics."""

from .core import (
    AttentionGraph,
    Fixation,
    Level,
    ObjectInfo,
    ObjectSaliency,
    Scene,
    ScoreGraph,
    SemanticScanpath,
    attribute_key,
    validate_scene,
)
from .graph import (
    build_attention_graph,
    edge_probability,
    merge_to_attribute_graph,
    node_intensity,
    normalize_score_graph,
    sample_scanpath,
)
from .metrics import (
    fixation_density,
    object_saliency,
    score_scanpath,
    score_scanpath_weighted,
)
from .scanpath import (
    assign_fixation,
    build_object_scanpath,
    coverage_statistic,
    to_attribute_scanpath,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionGraph",
    "Fixation",
    "Level",
    "ObjectInfo",
    "ObjectSaliency",
    "Scene",
    "ScoreGraph",
    "SemanticScanpath",
    "assign_fixation",
    "attribute_key",
    "build_attention_graph",
    "build_object_scanpath",
    "coverage_statistic",
    "edge_probability",
    "fixation_density",
    "merge_to_attribute_graph",
    "node_intensity",
    "normalize_score_graph",
    "object_saliency",
    "sample_scanpath",
    "score_scanpath",
    "score_scanpath_weighted",
    "to_attribute_scanpath",
    "validate_scene",
]
