"""Fixation-to-object assignment and semantic scanpath construction."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    BoundsError,
    EmptyScanpathError,
    Fixation,
    Level,
    Scene,
    SemanticScanpath,
    UnknownNodeError,
    ValidationError,
)

DEFAULT_TOLERANCE_PX = 30.0

INSIDE = "inside"
NEAR = "near"
DISCARDED = "discarded"


@dataclass(frozen=True)
class FixationAssignment:
    fixation: tuple  # (image_id, observer_id, seq_index)
    outcome: str
    object_id: int | None
    distance_px: float

    @property
    def retained(self) -> bool:
        return self.outcome != DISCARDED


def _nearest_object(scene: Scene, row: int, col: int, tolerance_px: float):
    """Nearest labelled pixel centre within ``tolerance_px`` of (row, col).

    Returns ``(object_id, distance)`` or ``None``. Ties go to the smallest id.
    """
    reach = int(math.floor(tolerance_px))
    r0, r1 = max(0, row - reach), min(scene.height, row + reach + 1)
    c0, c1 = max(0, col - reach), min(scene.width, col + reach + 1)
    window = scene.label_raster[r0:r1, c0:c1]
    rr, cc = np.nonzero(window)
    if rr.size == 0:
        return None
    d2 = (rr + r0 - row) ** 2 + (cc + c0 - col) ** 2
    best = int(d2.min())
    if math.sqrt(best) > tolerance_px:
        return None
    labels = window[rr, cc][d2 == best]
    return int(labels.min()), math.sqrt(best)


def assign_fixation(f: Fixation, scene: Scene, tolerance_px: float = DEFAULT_TOLERANCE_PX) -> FixationAssignment:
    """Classify a fixation as inside an object, near one, or discarded.

    Distances are measured between the centre of the pixel containing the
    fixation and the centres of labelled pixels. A distance exactly equal to
    the tolerance is retained.
    """
    if tolerance_px < 0:
        raise ValueError("tolerance_px must be non-negative")
    if not scene.contains(f.x, f.y):
        raise BoundsError(
            f"fixation {f.key} at ({f.x}, {f.y}) outside {scene.width}x{scene.height} scene {scene.image_id!r}"
        )
    col, row = int(math.floor(f.x)), int(math.floor(f.y))
    label = int(scene.label_raster[row, col])
    if label:
        return FixationAssignment(f.key, INSIDE, label, 0.0)

    edt = float(scene.background_distance[row, col])
    if edt > tolerance_px + 1e-6:
        return FixationAssignment(f.key, DISCARDED, None, edt)
    hit = _nearest_object(scene, row, col, tolerance_px)
    if hit is None:
        return FixationAssignment(f.key, DISCARDED, None, edt)
    return FixationAssignment(f.key, NEAR, hit[0], hit[1])


def _collapse(items: Iterable[tuple]) -> tuple[list, list]:
    """Run-length merge ``(term, (first, last))`` pairs with equal adjacent terms."""
    terms: list = []
    spans: list = []
    for term, (first, last) in items:
        if terms and terms[-1] == term:
            spans[-1] = (spans[-1][0], last)
        else:
            terms.append(term)
            spans.append((first, last))
    return terms, spans


def _check_single_viewing(fixations: Sequence[Fixation]) -> None:
    owners = {(f.image_id, f.observer_id) for f in fixations}
    if len(owners) > 1:
        raise ValidationError(f"fixations span several (image, observer) pairs: {sorted(owners)}")
    for a, b in zip(fixations, fixations[1:]):
        if b.seq_index <= a.seq_index:
            raise ValidationError(
                f"fixations of observer {a.observer_id!r} on {a.image_id!r} not sorted by seq_index "
                f"({a.seq_index} then {b.seq_index})"
            )


def build_object_scanpath(
    fixations: Sequence[Fixation],
    scene: Scene,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
) -> SemanticScanpath:
    """Object-level semantic scanpath of one observer on one image.

    Discarded fixations are dropped before grouping, so they never split a
    run of fixations on the same object. Review shifts are kept.
    """
    fixations = list(fixations)
    if not fixations:
        raise EmptyScanpathError(scene.image_id, "")
    _check_single_viewing(fixations)
    first = fixations[0]
    if first.image_id != scene.image_id:
        raise ValidationError(f"fixations are for image {first.image_id!r}, scene is {scene.image_id!r}")

    kept = []
    for f in fixations:
        a = assign_fixation(f, scene, tolerance_px)
        if a.retained:
            kept.append((a.object_id, (f.seq_index, f.seq_index)))
    if not kept:
        raise EmptyScanpathError(first.image_id, first.observer_id)
    terms, spans = _collapse(kept)
    return SemanticScanpath(first.image_id, first.observer_id, Level.OBJECT, terms, spans)


def to_attribute_scanpath(sp: SemanticScanpath, scene: Scene) -> SemanticScanpath:
    """Relabel object terms by attribute key and merge adjacent equal keys."""
    if sp.level is not Level.OBJECT:
        raise ValidationError(f"expected an object-level scanpath, got {sp.level.value}")
    items = []
    for term, span in zip(sp.terms, sp.source_spans):
        info = scene.objects.get(term)
        if info is None:
            raise UnknownNodeError(f"object {term!r} not in scene {scene.image_id!r}")
        items.append((info.attribute_key, span))
    terms, spans = _collapse(items)
    return SemanticScanpath(sp.image_id, sp.observer_id, Level.ATTRIBUTE, terms, spans)


def build_scanpath(
    fixations: Sequence[Fixation],
    scene: Scene,
    level: Level | str = Level.OBJECT,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
) -> SemanticScanpath:
    sp = build_object_scanpath(fixations, scene, tolerance_px)
    if Level(level) is Level.ATTRIBUTE:
        sp = to_attribute_scanpath(sp, scene)
    return sp


def group_fixations(fixations: Iterable[Fixation]) -> dict:
    """Map ``(image_id, observer_id)`` to that viewing's fixations in seq order."""
    groups: dict = defaultdict(list)
    for f in fixations:
        groups[(f.image_id, f.observer_id)].append(f)
    return {k: sorted(v, key=lambda f: f.seq_index) for k, v in groups.items()}


def build_scanpaths(
    fixations: Iterable[Fixation],
    scenes: Mapping[str, Scene],
    level: Level | str = Level.OBJECT,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    skip_empty: bool = True,
) -> list[SemanticScanpath]:
    """Scanpaths for every viewing in ``fixations``, ordered by (image, observer)."""
    out = []
    for (image_id, observer_id), fs in sorted(group_fixations(fixations).items()):
        if image_id not in scenes:
            raise ValidationError(f"no scene for image {image_id!r}")
        try:
            out.append(build_scanpath(fs, scenes[image_id], level, tolerance_px))
        except EmptyScanpathError:
            if not skip_empty:
                raise
    return out


@dataclass(frozen=True)
class CoverageReport:
    per_image: dict  # image_id -> retained fraction
    retained: int
    total: int

    @property
    def overall(self) -> float:
        return self.retained / self.total if self.total else 0.0


def coverage_statistic(
    fixations: Iterable[Fixation],
    scenes: Mapping[str, Scene],
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
) -> CoverageReport:
    """Fraction of fixations that land in or near an annotated object."""
    kept: dict = defaultdict(int)
    seen: dict = defaultdict(int)
    for f in fixations:
        scene = scenes.get(f.image_id)
        if scene is None:
            raise ValidationError(f"no scene for image {f.image_id!r}")
        seen[f.image_id] += 1
        if assign_fixation(f, scene, tolerance_px).retained:
            kept[f.image_id] += 1
    per_image = {i: kept[i] / seen[i] for i in sorted(seen)}
    return CoverageReport(per_image, sum(kept.values()), sum(seen.values()))
