"""Shared domain types for scenes, fixations, semantic scanpaths and graphs.

All values are treated as immutable once built. Node keys are object ids
(``int``) at the object level and canonical attribute strings at the
attribute level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Union

import numpy as np

NodeKey = Union[int, str]
Edge = tuple  # (source NodeKey, target NodeKey)

NONE_ATTRIBUTE = "None"
ATTRIBUTE_JOINER = " & "


class Level(str, enum.Enum):
    OBJECT = "object"
    ATTRIBUTE = "attribute"


# --------------------------------------------------------------------------
# Errors
# --------------------------------------------------------------------------


class SemgraphError(Exception):
    """Base class for all package errors."""


class ValidationError(SemgraphError, ValueError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class BoundsError(ValidationError):
    pass


class EmptyScanpathError(SemgraphError):
    """Every fixation of an observer was discarded."""

    def __init__(self, image_id: str, observer_id: str):
        super().__init__(f"no retained fixations for observer {observer_id!r} on image {image_id!r}")
        self.image_id = image_id
        self.observer_id = observer_id


class DegenerateScanpathError(SemgraphError):
    """A scanpath with fewer than two terms cannot be scored."""


class UnknownNodeError(SemgraphError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown node"


class EmptyGroupError(SemgraphError):
    pass


class UnclassifiableError(SemgraphError):
    pass


# --------------------------------------------------------------------------
# Node keys
# --------------------------------------------------------------------------


def attribute_key(attributes: Iterable[str]) -> str:
    """Canonical attribute-level node key for an object's attribute set.

    Multiple attributes form one combined key; no attributes gives ``"None"``.
    """
    names = sorted(set(attributes))
    if not names:
        return NONE_ATTRIBUTE
    return ATTRIBUTE_JOINER.join(names)


def node_sort_key(node: NodeKey):
    # ints before strings so mixed collections still sort deterministically
    return (isinstance(node, str), node)


def sorted_nodes(nodes: Iterable[NodeKey]) -> list:
    return sorted(nodes, key=node_sort_key)


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Fixation:
    image_id: str
    observer_id: str
    seq_index: int
    x: float
    y: float
    duration_ms: float = 0.0

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.image_id, self.observer_id, self.seq_index)


@dataclass(frozen=True)
class ObjectInfo:
    object_id: int
    attributes: frozenset = field(default_factory=frozenset)
    pixel_count: int = 0

    def __post_init__(self):
        if not isinstance(self.attributes, frozenset):
            object.__setattr__(self, "attributes", frozenset(self.attributes))

    @property
    def attribute_key(self) -> str:
        return attribute_key(self.attributes)


@dataclass(frozen=True, eq=False)
class Scene:
    """An annotated stimulus: label raster (0 = background) plus object table."""

    image_id: str
    width: int
    height: int
    label_raster: np.ndarray
    objects: Mapping[int, ObjectInfo]

    def __post_init__(self):
        raster = np.asarray(self.label_raster)
        raster.setflags(write=False)
        object.__setattr__(self, "label_raster", raster)
        object.__setattr__(self, "objects", dict(self.objects))

    @classmethod
    def from_raster(cls, image_id: str, raster, attributes: Mapping[int, Iterable[str]] | None = None) -> "Scene":
        """Build a scene whose object table is derived from the raster itself."""
        raster = np.asarray(raster)
        if raster.ndim != 2:
            raise ValidationError(f"label raster for {image_id!r} must be 2-D, got shape {raster.shape}")
        raster = raster.astype(np.int64, copy=False)
        attributes = {int(k): v for k, v in (attributes or {}).items()}
        ids, counts = np.unique(raster[raster != 0], return_counts=True)
        objects = {
            int(i): ObjectInfo(int(i), frozenset(attributes.get(int(i), ())), int(c))
            for i, c in zip(ids, counts)
        }
        unknown = sorted(set(attributes) - set(objects))
        if unknown:
            raise ValidationError(
                f"attributes given for objects absent from raster of {image_id!r}: {unknown}"
            )
        h, w = raster.shape
        return cls(image_id, int(w), int(h), raster, objects)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.width == other.width
            and self.height == other.height
            and self.objects == other.objects
            and self.label_raster.shape == other.label_raster.shape
            and bool(np.array_equal(self.label_raster, other.label_raster))
        )

    __hash__ = None

    def node_key(self, object_id: int, level: Level) -> NodeKey:
        if object_id not in self.objects:
            raise UnknownNodeError(f"object {object_id} not in scene {self.image_id!r}")
        if Level(level) is Level.OBJECT:
            return object_id
        return self.objects[object_id].attribute_key

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    @cached_property
    def background_distance(self) -> np.ndarray:
        """Euclidean distance (pixel-centre grid) from each pixel to the nearest object pixel."""
        from scipy import ndimage

        background = self.label_raster == 0
        if not background.any():
            return np.zeros(background.shape)
        if background.all():
            return np.full(background.shape, np.inf)
        return ndimage.distance_transform_edt(background)


@dataclass(frozen=True)
class SemanticScanpath:
    image_id: str
    observer_id: str
    level: Level
    terms: tuple
    source_spans: tuple  # one (first_seq_index, last_seq_index) per term

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "source_spans", tuple(tuple(s) for s in self.source_spans))
        if len(self.terms) != len(self.source_spans):
            raise ValidationError("terms and source_spans differ in length")
        for a, b in zip(self.terms, self.terms[1:]):
            if a == b:
                raise ValidationError(
                    f"adjacent duplicate term {a!r} in scanpath of {self.observer_id!r} on {self.image_id!r}"
                )

    def __len__(self):
        return len(self.terms)

    def shifts(self):
        """Consecutive (source, target) pairs."""
        return list(zip(self.terms, self.terms[1:]))


@dataclass(frozen=True)
class AttentionGraph:
    """Raw gaze-shift counts pooled over observers of one image."""

    image_id: str
    level: Level
    nodes: frozenset
    edge_counts: Mapping
    observer_count: int

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "edge_counts", dict(self.edge_counts))
        for (u, v), c in self.edge_counts.items():
            if u not in self.nodes or v not in self.nodes:
                raise ValidationError(f"edge ({u!r}, {v!r}) has an endpoint outside the node set")
            if int(c) != c or c < 1:
                raise ValidationError(f"edge ({u!r}, {v!r}) has non-positive or non-integer count {c!r}")

    __hash__ = None

    def out_counts(self, u) -> dict:
        return {v: c for (s, v), c in self.edge_counts.items() if s == u}

    @cached_property
    def _successors(self) -> dict:
        succ: dict = {}
        for (u, v), c in self.edge_counts.items():
            succ.setdefault(u, {})[v] = c
        return succ

    def successors(self, u) -> dict:
        return self._successors.get(u, {})


@dataclass(frozen=True)
class ScoreGraph:
    image_id: str
    level: Level
    scores: Mapping

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "scores", dict(self.scores))

    __hash__ = None

    def score(self, u, v) -> float:
        return self.scores.get((u, v), 0.0)


@dataclass(frozen=True)
class ObjectSaliency:
    image_id: str
    values: Mapping

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))

    __hash__ = None

    def __getitem__(self, node) -> float:
        return self.values.get(node, 0.0)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate_scene(scene: Scene) -> list[str]:
    """Return human-readable invariant violations; empty when the scene is consistent."""
    problems: list[str] = []
    raster = np.asarray(scene.label_raster)
    if raster.ndim != 2:
        return [f"label raster must be 2-D, got shape {raster.shape}"]
    if scene.width <= 0 or scene.height <= 0:
        problems.append(f"non-positive dimensions {scene.width}x{scene.height}")
    if raster.shape != (scene.height, scene.width):
        problems.append(
            f"raster shape {raster.shape} does not match height x width ({scene.height}, {scene.width})"
        )
    if raster.size and raster.min() < 0:
        problems.append("raster contains negative labels")

    ids, counts = np.unique(raster[raster > 0], return_counts=True)
    raster_counts = {int(i): int(c) for i, c in zip(ids, counts)}

    for label in sorted(raster_counts):
        if label not in scene.objects:
            problems.append(f"raster label {label} missing from objects")
    for key in sorted(scene.objects):
        info = scene.objects[key]
        if info.object_id != key:
            problems.append(f"object table key {key} does not match object_id {info.object_id}")
        if key <= 0:
            problems.append(f"object id {key} is not a positive integer")
            continue
        if key not in raster_counts:
            problems.append(f"object {key} has no pixels in raster")
        elif info.pixel_count != raster_counts[key]:
            problems.append(
                f"pixel_count mismatch for object {key}: declared {info.pixel_count}, raster has {raster_counts[key]}"
            )
    return problems
