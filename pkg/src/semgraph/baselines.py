"""Chance and Random reference scanpaths, plus the leave-one-observer-out human score."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DegenerateScanpathError,
    EmptyGroupError,
    EmptyScanpathError,
    Fixation,
    Level,
    Scene,
    SemanticScanpath,
    ValidationError,
)
from .metrics import DEFAULT_SIGMA_PX, S_SCAN, build_image_reference, score_with
from .scanpath import DEFAULT_TOLERANCE_PX, build_object_scanpath, build_scanpath, group_fixations


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def median_fixation_count(fixations: Sequence[Fixation]) -> int:
    """Median number of fixations per viewing, rounded half up, at least 1."""
    counts = [len(v) for v in group_fixations(fixations).values()]
    if not counts:
        raise ValidationError("no fixations to take a median over")
    return max(1, int(math.floor(float(np.median(counts)) + 0.5)))


def chance_fixations(scene: Scene, n_points: int, seed=None, observer_id: str = "chance") -> list[Fixation]:
    """``n_points`` positions drawn uniformly over the image plane."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = _rng(seed)
    xs = rng.uniform(0.0, scene.width, n_points)
    ys = rng.uniform(0.0, scene.height, n_points)
    return [
        Fixation(scene.image_id, observer_id, i, float(x), float(y))
        for i, (x, y) in enumerate(zip(xs, ys))
    ]


def chance_scanpath(
    scene: Scene,
    n_points: int,
    seed=None,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    observer_id: str = "chance",
) -> SemanticScanpath:
    """Object scanpath of uniformly random positions, encoded like a human viewing."""
    return build_object_scanpath(chance_fixations(scene, n_points, seed, observer_id), scene, tolerance_px)


def _clamp(v: float, size: int) -> float:
    if v < 0:
        return 0.0
    if v >= size:
        return float(size - 1)
    return v


def random_scanpath(
    donor: Sequence[Fixation],
    target_scene: Scene,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    observer_id: str | None = None,
) -> SemanticScanpath:
    """Replay a human viewing of another image on ``target_scene``.

    Donor positions are clamped into the target bounds and encoded against
    the target annotation.
    """
    donor = sorted(donor, key=lambda f: f.seq_index)
    if not donor:
        raise EmptyScanpathError(target_scene.image_id, observer_id or "")
    if any(f.image_id == target_scene.image_id for f in donor):
        raise ValidationError(f"donor viewing comes from the target image {target_scene.image_id!r}")
    oid = observer_id if observer_id is not None else f"random:{donor[0].image_id}:{donor[0].observer_id}"
    moved = [
        Fixation(
            target_scene.image_id,
            oid,
            f.seq_index,
            _clamp(f.x, target_scene.width),
            _clamp(f.y, target_scene.height),
            f.duration_ms,
        )
        for f in donor
    ]
    return build_object_scanpath(moved, target_scene, tolerance_px)


def choose_donor(viewings: Mapping[tuple, Sequence[Fixation]], target_image_id: str, seed=None) -> list:
    """Pick one viewing of a different image, reproducibly for a given seed."""
    candidates = sorted(k for k in viewings if k[0] != target_image_id)
    if not candidates:
        raise ValidationError(f"no viewing of an image other than {target_image_id!r} to donate")
    key = candidates[int(_rng(seed).integers(len(candidates)))]
    return list(viewings[key])


def human_loo_scores(
    fixations: Sequence[Fixation],
    scene: Scene,
    level: Level | str = Level.OBJECT,
    metric: str = S_SCAN,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    sigma_px: float = DEFAULT_SIGMA_PX,
) -> dict:
    """Score each observer against a graph built from all other observers.

    Observers whose scanpath cannot be scored, or who are the only viewer,
    are left out of the result.
    """
    viewings = {k[1]: v for k, v in group_fixations(fixations).items() if k[0] == scene.image_id}
    weighted = metric != S_SCAN
    scores = {}
    for obs in sorted(viewings):
        try:
            sp = build_scanpath(viewings[obs], scene, level, tolerance_px)
            ref = build_image_reference(
                [v for o, v in viewings.items() if o != obs], scene, level, tolerance_px, sigma_px, weighted
            )
            scores[obs] = score_with(sp, ref, metric)
        except (EmptyScanpathError, EmptyGroupError, DegenerateScanpathError):
            continue
    return scores
