"""Fixation density, object saliency and the graph-based scanpath scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    AttentionGraph,
    DegenerateScanpathError,
    EmptyGroupError,
    EmptyScanpathError,
    Fixation,
    Level,
    ObjectSaliency,
    Scene,
    ScoreGraph,
    SemanticScanpath,
    ValidationError,
)
from .graph import build_attention_graph, normalize_score_graph
from .scanpath import DEFAULT_TOLERANCE_PX, build_scanpath

DEFAULT_SIGMA_PX = 24.0
TRUNCATE_SIGMAS = 3.0


@dataclass(frozen=True, eq=False)
class DensityMap:
    image_id: str
    width: int
    height: int
    values: np.ndarray  # shape (height, width)

    def __eq__(self, other):
        if not isinstance(other, DensityMap):
            return NotImplemented
        return (
            (self.image_id, self.width, self.height) == (other.image_id, other.width, other.height)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class ScanScore:
    value: float
    per_edge: tuple  # (source, target, edge score, weight)


def fixation_density(
    fixations: Iterable[Fixation],
    width: int,
    height: int,
    sigma_px: float = DEFAULT_SIGMA_PX,
    image_id: str = "",
) -> DensityMap:
    """Gaussian-smoothed fixation map normalised to unit mass.

    Each fixation adds an isotropic Gaussian evaluated at pixel centres and
    truncated at three sigma. Without fixations the map is all zeros.
    """
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    acc = np.zeros((height, width), dtype=np.float64)
    reach = TRUNCATE_SIGMAS * sigma_px
    r = int(math.ceil(reach))
    for f in fixations:
        col, row = int(math.floor(f.x)), int(math.floor(f.y))
        r0, r1 = max(0, row - r), min(height, row + r + 1)
        c0, c1 = max(0, col - r), min(width, col + r + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        dy = np.arange(r0, r1) + 0.5 - f.y
        dx = np.arange(c0, c1) + 0.5 - f.x
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        bump = np.exp(-d2 / (2.0 * sigma_px * sigma_px))
        bump[d2 > reach * reach] = 0.0
        acc[r0:r1, c0:c1] += bump
    total = acc.sum()
    if total > 0:
        acc /= total
    return DensityMap(image_id, width, height, acc)


def object_saliency(d: DensityMap, scene: Scene) -> ObjectSaliency:
    """Density mass falling on each object; background is ignored."""
    if (d.width, d.height) != (scene.width, scene.height):
        raise ValidationError(
            f"density map {d.width}x{d.height} does not match scene {scene.image_id!r} "
            f"{scene.width}x{scene.height}"
        )
    labels = scene.label_raster.ravel()
    sums = np.bincount(labels, weights=d.values.ravel(), minlength=int(labels.max(initial=0)) + 1)
    values = {oid: float(sums[oid]) for oid in scene.objects}
    return ObjectSaliency(scene.image_id, values)


def attribute_saliency(sal: ObjectSaliency, scene: Scene) -> ObjectSaliency:
    """Sum object saliency over objects sharing an attribute key."""
    values: dict = {}
    for oid, info in scene.objects.items():
        key = info.attribute_key
        values[key] = values.get(key, 0.0) + sal[oid]
    return ObjectSaliency(sal.image_id, values)


def _check(p: SemanticScanpath, sg: ScoreGraph) -> None:
    if len(p.terms) < 2:
        raise DegenerateScanpathError(
            f"scanpath of {p.observer_id!r} on {p.image_id!r} has {len(p.terms)} term(s); need at least 2"
        )
    if p.level is not sg.level:
        raise ValidationError(f"scanpath level {p.level.value} does not match graph level {sg.level.value}")


def score_scanpath(p: SemanticScanpath, sg: ScoreGraph) -> ScanScore:
    """Mean ScoreGraph score over the consecutive shifts of ``p``.

    Missing edges, and edges touching nodes absent from the graph, score 0.
    """
    _check(p, sg)
    per_edge = tuple((u, v, sg.score(u, v), 1.0) for u, v in p.shifts())
    value = sum(e[2] for e in per_edge) / len(per_edge)
    return ScanScore(value, per_edge)


def score_scanpath_weighted(p: SemanticScanpath, sg: ScoreGraph, sal: ObjectSaliency) -> ScanScore:
    """Shift scores averaged with the saliency of each shift's source node.

    The normaliser sums the source saliencies, so the last term's saliency
    never enters. A zero normaliser yields 0.
    """
    _check(p, sg)
    per_edge = tuple((u, v, sg.score(u, v), sal[u]) for u, v in p.shifts())
    mu = sum(e[3] for e in per_edge)
    if mu <= 0:
        return ScanScore(0.0, per_edge)
    value = sum(e[2] * e[3] for e in per_edge) / mu
    return ScanScore(value, per_edge)


S_SCAN = "s_scan"
S_SCAN_WEIGHTED = "s_scan_weighted"
METRICS = (S_SCAN, S_SCAN_WEIGHTED)


@dataclass(frozen=True, eq=False)
class ImageReference:
    """Everything needed to score predictions on one image."""

    graph: AttentionGraph
    score_graph: ScoreGraph
    saliency: ObjectSaliency | None


def build_image_reference(
    viewings: Iterable[Sequence[Fixation]],
    scene: Scene,
    level: Level | str = Level.OBJECT,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    sigma_px: float = DEFAULT_SIGMA_PX,
    with_saliency: bool = True,
) -> ImageReference:
    """Pool the scanpaths of several viewings of ``scene`` into a reference.

    Viewings whose fixations are all discarded add nothing to the graph but
    still contribute to the density map.
    """
    level = Level(level)
    viewings = [list(v) for v in viewings if v]
    scanpaths = []
    for fs in viewings:
        try:
            scanpaths.append(build_scanpath(fs, scene, level, tolerance_px))
        except EmptyScanpathError:
            continue
    fixations = [f for fs in viewings for f in fs] if with_saliency else None
    return reference_from_scanpaths(scanpaths, scene, fixations, sigma_px)


def reference_from_scanpaths(
    scanpaths: Sequence[SemanticScanpath],
    scene: Scene,
    fixations: Iterable[Fixation] | None = None,
    sigma_px: float = DEFAULT_SIGMA_PX,
) -> ImageReference:
    """Reference from ready-made scanpaths; saliency only when fixations are given."""
    if not scanpaths:
        raise EmptyGroupError(f"no usable scanpaths on image {scene.image_id!r}")
    graph = build_attention_graph(scanpaths)
    saliency = None
    if fixations is not None:
        density = fixation_density(fixations, scene.width, scene.height, sigma_px, scene.image_id)
        saliency = object_saliency(density, scene)
        if graph.level is Level.ATTRIBUTE:
            saliency = attribute_saliency(saliency, scene)
    return ImageReference(graph, normalize_score_graph(graph), saliency)


def score_with(p: SemanticScanpath, ref: ImageReference, metric: str = S_SCAN) -> float:
    if metric == S_SCAN:
        return score_scanpath(p, ref.score_graph).value
    if metric == S_SCAN_WEIGHTED:
        if ref.saliency is None:
            raise ValidationError("weighted score requested but the reference has no saliency")
        return score_scanpath_weighted(p, ref.score_graph, ref.saliency).value
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
