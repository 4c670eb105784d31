"""Group attention graphs and leave-one-subject-out cohort classification.

Each cohort gets one attention graph per image. A held-out subject's
scanpath on an image is scored against both groups' graphs, the image
votes for the higher score, and the subject takes the majority label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .core import (
    EmptyGroupError,
    EmptyScanpathError,
    Fixation,
    Level,
    SemanticScanpath,
    UnclassifiableError,
    ValidationError,
)
from .graph import node_intensity
from .metrics import (
    DEFAULT_SIGMA_PX,
    METRICS,
    S_SCAN,
    S_SCAN_WEIGHTED,
    ImageReference,
    reference_from_scanpaths,
    score_with,
)
from .scanpath import DEFAULT_TOLERANCE_PX, build_scanpath, group_fixations

# Subject conventions for datasets with or without subject ids.
BY_OBSERVER_ID = "observer_id"
BY_SEQUENCE_ORDER = "sequence_order"


@dataclass(frozen=True)
class Subject:
    group: str
    viewings: Mapping[str, Sequence[Fixation]]  # image_id -> fixations in seq order


@dataclass
class CohortDataset:
    group_a: str
    group_b: str
    subjects: dict  # subject_id -> Subject
    scenes: dict  # image_id -> Scene

    def __post_init__(self):
        if self.group_a == self.group_b:
            raise ValidationError("the two groups need distinct labels")
        for sid, sub in self.subjects.items():
            if sub.group not in (self.group_a, self.group_b):
                raise ValidationError(f"subject {sid!r} has unknown group {sub.group!r}")
            missing = sorted(set(sub.viewings) - set(self.scenes))
            if missing:
                raise ValidationError(f"subject {sid!r} viewed images without a scene: {missing}")

    def members(self, group: str) -> list:
        return sorted(s for s, sub in self.subjects.items() if sub.group == group)

    def other(self, group: str) -> str:
        if group == self.group_a:
            return self.group_b
        if group == self.group_b:
            return self.group_a
        raise ValidationError(f"unknown group {group!r}")


def subjects_from_fixations(
    fixations: Iterable[Fixation],
    group: str,
    convention: str = BY_OBSERVER_ID,
    prefix: str = "",
) -> dict:
    """Bundle fixations into subjects.

    With ``sequence_order`` the i-th viewing of every image (in order of first
    appearance) is attributed to the same subject, for datasets that ship no
    subject ids.
    """
    fixations = list(fixations)
    viewings = group_fixations(fixations)
    per_subject: dict = {}
    if convention == BY_OBSERVER_ID:
        for (image_id, obs), fs in viewings.items():
            per_subject.setdefault(f"{prefix}{obs}", {})[image_id] = fs
    elif convention == BY_SEQUENCE_ORDER:
        order: dict = {}
        for f in fixations:
            seen = order.setdefault(f.image_id, [])
            if f.observer_id not in seen:
                seen.append(f.observer_id)
        for image_id, observers in order.items():
            for i, obs in enumerate(observers):
                per_subject.setdefault(f"{prefix}{i}", {})[image_id] = viewings[(image_id, obs)]
    else:
        raise ValueError(f"unknown subject convention {convention!r}")
    return {sid: Subject(group, v) for sid, v in per_subject.items()}


class _ScanpathCache:
    """Scanpaths per (subject, image), built once; ``None`` when unusable."""

    def __init__(self, ds: CohortDataset, level: Level, tolerance_px: float):
        self.ds = ds
        self.level = level
        self.tolerance_px = tolerance_px
        self._store: dict = {}

    def get(self, subject_id: str, image_id: str) -> SemanticScanpath | None:
        key = (subject_id, image_id)
        if key not in self._store:
            fs = self.ds.subjects[subject_id].viewings.get(image_id)
            sp = None
            if fs:
                try:
                    sp = build_scanpath(fs, self.ds.scenes[image_id], self.level, self.tolerance_px)
                except EmptyScanpathError:
                    sp = None
            self._store[key] = sp
        return self._store[key]


def build_group_graphs(
    ds: CohortDataset,
    group: str,
    exclude_subject: str | None = None,
    level: Level | str = Level.OBJECT,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    sigma_px: float = DEFAULT_SIGMA_PX,
    with_saliency: bool = True,
    _cache: _ScanpathCache | None = None,
) -> dict:
    """Per-image references pooled over the group's subjects, minus ``exclude_subject``.

    Images that no remaining subject yields a scanpath for are left out.
    """
    level = Level(level)
    cache = _cache or _ScanpathCache(ds, level, tolerance_px)
    members = [s for s in ds.members(group) if s != exclude_subject]
    refs = {}
    for image_id in sorted(ds.scenes):
        scanpaths = [sp for s in members if (sp := cache.get(s, image_id)) is not None]
        if not scanpaths:
            continue
        fixations = None
        if with_saliency:
            fixations = [f for s in members for f in ds.subjects[s].viewings.get(image_id, ())]
        refs[image_id] = reference_from_scanpaths(scanpaths, ds.scenes[image_id], fixations, sigma_px)
    if not refs:
        raise EmptyGroupError(f"group {group!r} has no usable subjects (excluded: {exclude_subject!r})")
    return refs


@dataclass(frozen=True)
class SubjectResult:
    predicted: str
    votes_a: int
    votes_b: int
    skipped: int
    score_sum_a: float
    score_sum_b: float

    @property
    def margin(self) -> float:
        return self.score_sum_a - self.score_sum_b


def classify_subject(
    scanpaths: Mapping[str, SemanticScanpath | None],
    graphs_a: Mapping[str, ImageReference],
    graphs_b: Mapping[str, ImageReference],
    metric: str = S_SCAN,
    labels: tuple = ("a", "b"),
) -> SubjectResult:
    """Vote over images; ties in votes fall back to the summed score margin, then to group a.

    ``scanpaths`` maps every image the subject viewed to its scanpath, or
    ``None`` when no fixation survived. Images that cannot be scored against
    both groups, and images where both scores are equal, cast no vote.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    votes_a = votes_b = skipped = 0
    scores_a, scores_b = [], []
    for image_id in sorted(scanpaths):
        sp = scanpaths[image_id]
        if sp is None or len(sp.terms) < 2 or image_id not in graphs_a or image_id not in graphs_b:
            skipped += 1
            continue
        sa = score_with(sp, graphs_a[image_id], metric)
        sb = score_with(sp, graphs_b[image_id], metric)
        scores_a.append(sa)
        scores_b.append(sb)
        if sa > sb:
            votes_a += 1
        elif sb > sa:
            votes_b += 1
        else:
            skipped += 1
    if not scores_a:
        raise UnclassifiableError("no image could be scored against both groups")
    sum_a, sum_b = math.fsum(scores_a), math.fsum(scores_b)
    if votes_a != votes_b:
        winner = labels[0] if votes_a > votes_b else labels[1]
    else:
        winner = labels[1] if sum_b > sum_a else labels[0]
    return SubjectResult(winner, votes_a, votes_b, skipped, sum_a, sum_b)


@dataclass(frozen=True)
class SubjectOutcome:
    true_group: str
    predicted: str | None  # None when the subject could not be classified
    votes_a: int
    votes_b: int
    skipped: int

    @property
    def correct(self) -> bool:
        return self.predicted == self.true_group


@dataclass(frozen=True)
class ClassificationReport:
    group_a: str
    group_b: str
    per_subject: dict = field(default_factory=dict)  # subject_id -> SubjectOutcome

    @property
    def correct(self) -> int:
        return sum(o.correct for o in self.per_subject.values())

    @property
    def total(self) -> int:
        return len(self.per_subject)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def summary(self) -> str:
        """Accuracy in the ``0.80 (33/41)`` style."""
        return f"{self.accuracy:.2f} ({self.correct}/{self.total})"


def loso_evaluate(
    ds: CohortDataset,
    level: Level | str = Level.OBJECT,
    metric: str = S_SCAN,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
    sigma_px: float = DEFAULT_SIGMA_PX,
) -> ClassificationReport:
    """Leave-one-subject-out accuracy.

    Only the held-out subject's own group is rebuilt per fold; the other
    group never contained the subject. Unclassifiable subjects stay in the
    denominator with no prediction.
    """
    level = Level(level)
    for g in (ds.group_a, ds.group_b):
        if len(ds.members(g)) < 2:
            raise ValidationError(f"group {g!r} needs at least two subjects for leave-one-subject-out")
    weighted = metric == S_SCAN_WEIGHTED
    cache = _ScanpathCache(ds, level, tolerance_px)
    full = {
        g: build_group_graphs(ds, g, None, level, tolerance_px, sigma_px, weighted, cache)
        for g in (ds.group_a, ds.group_b)
    }
    labels = (ds.group_a, ds.group_b)
    outcomes = {}
    for sid in sorted(ds.subjects):
        sub = ds.subjects[sid]
        scanpaths = {image_id: cache.get(sid, image_id) for image_id in sub.viewings}
        try:
            own = build_group_graphs(ds, sub.group, sid, level, tolerance_px, sigma_px, weighted, cache)
        except EmptyGroupError:
            own = {}
        other = full[ds.other(sub.group)]
        graphs_a, graphs_b = (own, other) if sub.group == ds.group_a else (other, own)
        try:
            r = classify_subject(scanpaths, graphs_a, graphs_b, metric, labels)
            outcomes[sid] = SubjectOutcome(sub.group, r.predicted, r.votes_a, r.votes_b, r.skipped)
        except UnclassifiableError:
            outcomes[sid] = SubjectOutcome(sub.group, None, 0, 0, len(scanpaths))
    return ClassificationReport(ds.group_a, ds.group_b, outcomes)


@dataclass(frozen=True)
class IntensityComparison:
    group: str
    other: str
    intensities: dict  # image_id -> node intensity for ``group``
    other_intensities: dict
    mean: float
    other_mean: float
    t_statistic: float
    dof: float
    p_value: float


def welch_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float]:
    """Welch's unequal-variance t statistic, degrees of freedom and two-sided p."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValidationError("Welch's t-test needs at least two samples per group")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, float(a.size + b.size - 2), 1.0
        return math.copysign(math.inf, diff), float(a.size + b.size - 2), 0.0
    t = diff / math.sqrt(se2)
    dof = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return float(t), float(dof), float(p)


def group_node_intensity(
    ds: CohortDataset,
    group: str,
    level: Level | str = Level.OBJECT,
    tolerance_px: float = DEFAULT_TOLERANCE_PX,
) -> IntensityComparison:
    """Per-image node intensity of ``group``'s graphs compared against the other group."""
    other = ds.other(group)
    cache = _ScanpathCache(ds, Level(level), tolerance_px)
    mine = build_group_graphs(ds, group, None, level, tolerance_px, with_saliency=False, _cache=cache)
    theirs = build_group_graphs(ds, other, None, level, tolerance_px, with_saliency=False, _cache=cache)
    ia = {i: node_intensity(r.graph) for i, r in mine.items()}
    ib = {i: node_intensity(r.graph) for i, r in theirs.items()}
    t, dof, p = welch_t(list(ia.values()), list(ib.values()))
    return IntensityComparison(
        group, other, ia, ib, float(np.mean(list(ia.values()))), float(np.mean(list(ib.values()))), t, dof, p
    )
