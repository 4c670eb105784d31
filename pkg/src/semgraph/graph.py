"""Attention graphs: pooled gaze-shift counts over observers of one scene.

Counts are the stored representation. Transition probabilities and
max-normalised scores are derived on demand.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .core import (
    AttentionGraph,
    Level,
    Scene,
    ScoreGraph,
    SemanticScanpath,
    UnknownNodeError,
    ValidationError,
    sorted_nodes,
)


def scanpath_shift_counts(sp: SemanticScanpath) -> Counter:
    """Shift counts contributed by one scanpath.

    A single-term scanpath contributes a self-loop on its only node.
    """
    if len(sp.terms) == 1:
        return Counter({(sp.terms[0], sp.terms[0]): 1})
    return Counter(sp.shifts())


def build_attention_graph(scanpaths: Sequence[SemanticScanpath]) -> AttentionGraph:
    scanpaths = list(scanpaths)
    if not scanpaths:
        raise ValidationError("at least one scanpath is needed to build an attention graph")
    image_ids = {sp.image_id for sp in scanpaths}
    levels = {sp.level for sp in scanpaths}
    if len(image_ids) > 1 or len(levels) > 1:
        raise ValidationError(
            f"scanpaths mix images {sorted(image_ids)} or levels {sorted(l.value for l in levels)}"
        )
    counts: Counter = Counter()
    nodes: set = set()
    for sp in scanpaths:
        counts.update(scanpath_shift_counts(sp))
        nodes.update(sp.terms)
    return AttentionGraph(scanpaths[0].image_id, scanpaths[0].level, nodes, dict(counts), len(scanpaths))


def _require_node(g: AttentionGraph, u) -> None:
    if u not in g.nodes:
        raise UnknownNodeError(f"node {u!r} not in attention graph of {g.image_id!r}")


def edge_probability(g: AttentionGraph, u, v) -> float:
    """Share of the shifts leaving ``u`` that go to ``v``."""
    _require_node(g, u)
    out = g.successors(u)
    total = sum(out.values())
    if total == 0:
        return 0.0
    return out.get(v, 0) / total


def transition_probabilities(g: AttentionGraph) -> dict:
    """All edge probabilities keyed by (source, target)."""
    probs = {}
    for u in g.nodes:
        out = g.successors(u)
        total = sum(out.values())
        for v, c in out.items():
            probs[(u, v)] = c / total
    return probs


def normalize_score_graph(g: AttentionGraph) -> ScoreGraph:
    """Divide every outgoing count of a node by that node's largest outgoing count."""
    scores = {}
    for u in g.nodes:
        out = g.successors(u)
        if not out:
            continue
        top = max(out.values())
        for v, c in out.items():
            scores[(u, v)] = c / top
    return ScoreGraph(g.image_id, g.level, scores)


def merge_to_attribute_graph(g: AttentionGraph, scene: Scene) -> AttentionGraph:
    """Relabel object nodes by attribute key and sum the counts.

    Edges between two objects sharing a key become self-loops and are kept,
    so the total shift count is unchanged.
    """
    if g.level is not Level.OBJECT:
        raise ValidationError(f"expected an object-level graph, got {g.level.value}")

    def key(node):
        info = scene.objects.get(node)
        if info is None:
            raise UnknownNodeError(f"object {node!r} not in scene {scene.image_id!r}")
        return info.attribute_key

    counts: Counter = Counter()
    for (u, v), c in g.edge_counts.items():
        counts[(key(u), key(v))] += c
    nodes = {key(n) for n in g.nodes}
    return AttentionGraph(g.image_id, Level.ATTRIBUTE, nodes, dict(counts), g.observer_count)


def node_intensity(g: AttentionGraph) -> int:
    """Total number of gaze shifts stored in the graph, self-loops included."""
    return int(sum(g.edge_counts.values()))


def pool_graphs(graphs: Iterable[AttentionGraph]) -> AttentionGraph:
    """Sum counts of several graphs of the same image and level."""
    graphs = list(graphs)
    if not graphs:
        raise ValidationError("nothing to pool")
    if len({g.image_id for g in graphs}) > 1 or len({g.level for g in graphs}) > 1:
        raise ValidationError("cannot pool graphs of different images or levels")
    counts: Counter = Counter()
    nodes: set = set()
    for g in graphs:
        counts.update(g.edge_counts)
        nodes |= g.nodes
    return AttentionGraph(graphs[0].image_id, graphs[0].level, nodes, dict(counts), sum(g.observer_count for g in graphs))


def _successor_table(g: AttentionGraph, u):
    out = g.successors(u)
    targets = sorted_nodes(out)
    weights = np.array([out[v] for v in targets], dtype=float)
    return targets, np.cumsum(weights) / weights.sum()


def _step(g: AttentionGraph, u, tables: dict, rng: np.random.Generator):
    if u not in tables:
        tables[u] = _successor_table(g, u)
    targets, cdf = tables[u]
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return targets[min(i, len(targets) - 1)]


def sample_scanpath(
    g: AttentionGraph,
    start,
    max_len: int,
    seed: int | np.random.Generator | None = None,
    observer_id: str = "sampled",
) -> SemanticScanpath:
    """Draw one semantic scanpath by walking the graph from ``start``.

    Successors are chosen with the edge probabilities. The walk ends after
    ``max_len`` terms, at a node without outgoing edges, or when a self-loop
    is drawn (the observer stays on the node, so no further shift happens).
    """
    if max_len < 1:
        raise ValueError("max_len must be positive")
    _require_node(g, start)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    terms = [start]
    tables: dict = {}
    u = start
    while len(terms) < max_len and g.successors(u):
        v = _step(g, u, tables, rng)
        if v == u:
            break
        terms.append(v)
        u = v
    spans = [(t, t) for t in range(len(terms))]
    return SemanticScanpath(g.image_id, observer_id, g.level, terms, spans)
