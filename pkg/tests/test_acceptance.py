"""Exit-criteria suite.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion is both reported and red.
Run alone with ``pytest -m acceptance``.
"""

import hashlib
import json
import math
import os
import re
import subprocess
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from semgraph import io as sio
from semgraph.baselines import chance_scanpath, choose_donor, human_loo_scores, median_fixation_count, random_scanpath
from semgraph.cohort import loso_evaluate
from semgraph.core import (
    AttentionGraph,
    DegenerateScanpathError,
    EmptyScanpathError,
    Fixation,
    Level,
    ObjectSaliency,
    Scene,
    ScoreGraph,
    SemanticScanpath,
)
from semgraph.graph import (
    build_attention_graph,
    edge_probability,
    node_intensity,
    normalize_score_graph,
    pool_graphs,
    sample_scanpath,
    transition_probabilities,
)
from semgraph.metrics import build_image_reference, score_scanpath, score_scanpath_weighted, score_with
from semgraph.scanpath import build_object_scanpath, coverage_statistic, group_fixations

import synth
from oracles import brute_scanpath

pytestmark = pytest.mark.acceptance

TESTS_DIR = Path(__file__).resolve().parent


def path_of(terms, level=Level.ATTRIBUTE, image="img", observer="o"):
    return SemanticScanpath(image, observer, level, list(terms), [(i, i) for i in range(len(terms))])


def random_graph(rng, max_nodes=12, string_nodes=False, image="img"):
    n = int(rng.integers(1, max_nodes + 1))
    nodes = [f"n{k}" for k in range(n)] if string_nodes else [int(k) + 1 for k in rng.permutation(40)[:n]]
    counts = {}
    for u in nodes:
        for v in nodes:
            if rng.random() < 0.35:
                counts[(u, v)] = int(rng.integers(1, 20))
    if not counts:
        counts[(nodes[0], nodes[-1])] = 1
    level = Level.ATTRIBUTE if string_nodes else Level.OBJECT
    return AttentionGraph(image, level, set(nodes), counts, int(rng.integers(1, 30)))


def random_terms(rng, n_nodes, length):
    terms = [int(rng.integers(1, n_nodes + 1))]
    while len(terms) < length:
        t = int(rng.integers(1, n_nodes + 1))
        if t != terms[-1]:
            terms.append(t)
    return terms


# 1 ---------------------------------------------------------------------------------


def test_criterion_1_worked_examples(record):
    sg = ScoreGraph(
        "example",
        Level.ATTRIBUTE,
        {("F", "G"): 0.3, ("A", "B"): 1.0, ("B", "E"): 0.74, ("E", "D"): 0.75},
    )
    low = score_scanpath(path_of("FGI"), sg).value
    high = score_scanpath(path_of("ABED"), sg).value
    # the same two values reached from raw counts rather than a hand-built ScoreGraph
    g = AttentionGraph(
        "example",
        Level.ATTRIBUTE,
        set("ABDEFGIWYZ"),
        {("F", "G"): 3, ("F", "Z"): 10, ("A", "B"): 1, ("B", "E"): 74, ("B", "Y"): 100, ("E", "D"): 75, ("E", "W"): 100},
        1,
    )
    from_counts = (score_scanpath(path_of("FGI"), normalize_score_graph(g)).value,
                   score_scanpath(path_of("ABED"), normalize_score_graph(g)).value)
    ok = (
        abs(low - 0.15) <= 1e-12
        and abs(high - 0.83) <= 1e-12
        and abs(from_counts[0] - 0.15) <= 1e-12
        and abs(from_counts[1] - 0.83) <= 1e-12
    )
    record(1, ok, f"S_scan(F,G,I)={low!r}  S_scan(A,B,E,D)={high!r}")
    assert ok


# 2 ---------------------------------------------------------------------------------


def test_criterion_2_normalization(record):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst_sum = 0.0
    bad_max = 0
    for _ in range(1000):
        g = random_graph(rng)
        sg = normalize_score_graph(g)
        probs = transition_probabilities(g)
        by_src: dict = {}
        for (u, v), s in sg.scores.items():
            by_src.setdefault(u, []).append(s)
        for u, scores in by_src.items():
            bad_max += max(scores) != 1.0
            total = math.fsum(edge_probability(g, u, v) for v in g.successors(u))
            worst_sum = max(worst_sum, abs(total - 1.0))
            assert math.fsum(p for (a, _), p in probs.items() if a == u) == pytest.approx(total, abs=1e-15)
    elapsed = time.perf_counter() - start
    ok = bad_max == 0 and worst_sum <= 1e-12 and elapsed < 5
    record(2, ok, f"1000 graphs, sources with max!=1: {bad_max}, worst |sum p - 1| = {worst_sum:.2e}, {elapsed:.2f}s")
    assert ok


# 3 ---------------------------------------------------------------------------------


def test_criterion_3_metric_identity(record):
    rng = np.random.default_rng(3)
    worst_uniform = worst_scale = 0.0
    for _ in range(500):
        g = random_graph(rng)
        sg = normalize_score_graph(g)
        nodes = sorted(g.nodes)
        n_terms = int(rng.integers(2, 12))
        terms = [nodes[int(rng.integers(len(nodes)))]]
        while len(terms) < n_terms:
            t = nodes[int(rng.integers(len(nodes)))] if rng.random() < 0.8 else 999
            if t != terms[-1]:
                terms.append(t)
        p = path_of(terms, Level.OBJECT)
        plain = score_scanpath(p, sg).value
        values = {n: float(rng.uniform(0.01, 1.0)) for n in set(terms)}
        uniform = ObjectSaliency("img", {n: 0.37 for n in set(terms)})
        worst_uniform = max(worst_uniform, abs(score_scanpath_weighted(p, sg, uniform).value - plain))
        base = score_scanpath_weighted(p, sg, ObjectSaliency("img", values)).value
        c = float(10 ** rng.uniform(-3, 3))
        scaled = score_scanpath_weighted(p, sg, ObjectSaliency("img", {k: v * c for k, v in values.items()})).value
        worst_scale = max(worst_scale, abs(scaled - base))
    ok = worst_uniform <= 1e-12 and worst_scale <= 1e-12
    record(3, ok, f"500 triples, worst uniform gap {worst_uniform:.1e}, worst scaling gap {worst_scale:.1e}")
    assert ok


# 4 ---------------------------------------------------------------------------------


def small_scene(rng, image_id):
    h, w = int(rng.integers(20, 40)), int(rng.integers(30, 70))
    raster = np.zeros((h, w), dtype=np.int64)
    for oid in range(1, int(rng.integers(1, 4)) + 1):
        r0, c0 = int(rng.integers(0, h)), int(rng.integers(0, w))
        raster[r0 : r0 + int(rng.integers(1, 6)), c0 : c0 + int(rng.integers(1, 6))] = oid
    return Scene.from_raster(image_id, raster)


def boundary_scene():
    # one pixel of object 1 at the origin, object 2 further right
    raster = np.zeros((3, 100), dtype=np.int64)
    raster[0, 0] = 1
    raster[0, 99] = 2
    return Scene.from_raster("edge", raster)


def test_criterion_4_grouping_oracle(record):
    rng = np.random.default_rng(4)
    cases = []
    for k in range(1000):
        scene = small_scene(rng, f"s{k}")
        if not scene.objects:
            continue
        n = int(rng.integers(1, 12))
        pts = [(float(rng.uniform(0, scene.width)), float(rng.uniform(0, scene.height))) for _ in range(n)]
        if k % 4 == 0 and n >= 3:
            # same object, far-off fixation, same object again
            oid = next(iter(scene.objects))
            rr, cc = np.nonzero(scene.label_raster == oid)
            inside = (float(cc[0]) + 0.5, float(rr[0]) + 0.5)
            pts[0], pts[2] = inside, inside
        cases.append((scene, [Fixation(scene.image_id, "o", i, x, y) for i, (x, y) in enumerate(pts)]))
    edge = boundary_scene()
    for col in (29, 30, 31, 68, 69, 70):
        for frac in (0.0, 0.5, 0.999):
            xs = [0.5, col + frac, 0.5, 99.5, col + frac]
            cases.append((edge, [Fixation("edge", "o", i, x, 0.5) for i, x in enumerate(xs)]))

    mismatches = 0
    compared = 0
    for scene, fs in cases:
        expected = brute_scanpath(fs, scene, 30)
        try:
            sp = build_object_scanpath(fs, scene, 30)
            got = (list(sp.terms), [tuple(s) for s in sp.source_spans])
        except EmptyScanpathError:
            got = ([], [])
        compared += 1
        mismatches += got != expected
    ok = mismatches == 0 and compared >= 1000
    record(4, ok, f"{compared} sequences vs brute-force filter-then-collapse, {mismatches} mismatches")
    assert ok


# 5 ---------------------------------------------------------------------------------


def test_criterion_5_graph_additivity(record):
    rng = np.random.default_rng(5)
    failures = 0
    for c in range(200):
        n_obs = int(rng.integers(1, 8))
        n_nodes = int(rng.integers(2, 8))
        scanpaths = [
            path_of(random_terms(rng, n_nodes, int(rng.integers(1, 9))), Level.OBJECT, observer=f"o{k}")
            for k in range(n_obs)
        ]
        expected = Counter()
        for sp in scanpaths:
            t = list(sp.terms)
            expected.update([(t[0], t[0])] if len(t) == 1 else list(zip(t, t[1:])))
        pooled = build_attention_graph(scanpaths)
        per_observer = pool_graphs([build_attention_graph([sp]) for sp in scanpaths])
        intensity = sum(max(len(sp.terms) - 1, 1) for sp in scanpaths)
        failures += not (
            pooled.edge_counts == dict(expected)
            and per_observer.edge_counts == dict(expected)
            and node_intensity(pooled) == intensity
            and pooled.observer_count == n_obs
        )
    record(5, failures == 0, f"200 random cohorts, {failures} additivity/intensity failures")
    assert failures == 0


# 6 ---------------------------------------------------------------------------------


def test_criterion_6_sampling_convergence(record):
    g = AttentionGraph(
        "walk",
        Level.OBJECT,
        {1, 2, 3, 4, 5},
        {(1, 2): 4, (1, 3): 3, (1, 4): 2, (2, 1): 1, (2, 3): 5, (2, 5): 2, (3, 1): 3, (3, 4): 1,
         (4, 5): 6, (4, 2): 1, (5, 1): 2, (5, 3): 2, (5, 5): 1},
        1,
    )
    rng = np.random.default_rng(6)
    transitions = Counter()
    starts = [1, 2, 3, 4, 5]
    walks = [sample_scanpath(g, starts[k % 5], 12, rng) for k in range(100_000)]
    for w in walks:
        t = list(w.terms)
        transitions.update(zip(t, t[1:]))
    # a drawn self-loop ends the walk without adding a repeated term, so
    # recover self-loop draws from walks that stopped early on node 5
    self_loops = sum(1 for w in walks if len(w.terms) < 12 and w.terms[-1] == 5)
    transitions[(5, 5)] += self_loops
    out = Counter()
    for (u, _), n in transitions.items():
        out[u] += n
    worst = max(abs(transitions[(u, v)] / out[u] - edge_probability(g, u, v)) for (u, v) in g.edge_counts)
    rng_a, rng_b = np.random.default_rng(99), np.random.default_rng(99)
    text_a = sio.format_scanpaths(sample_scanpath(g, 1, 12, rng_a) for _ in range(1000))
    text_b = sio.format_scanpaths(sample_scanpath(g, 1, 12, rng_b) for _ in range(1000))
    ok = worst <= 0.01 and text_a == text_b
    record(6, ok, f"10^5 walks, worst |freq - p| = {worst:.4f}, seeded replay identical: {text_a == text_b}")
    assert ok


# 7 ---------------------------------------------------------------------------------


def test_criterion_7_loso_separability(record):
    start = time.perf_counter()
    sep = loso_evaluate(synth.cohort(20, 10, np.random.default_rng(70), separable=True))

    n_per_group, reps = 10, 50
    n_subjects = 2 * n_per_group
    lo, hi = stats.binom.interval(0.95, n_subjects, 0.5)
    accuracies, inside, pooled_correct = [], 0, 0
    for rep in range(reps):
        ds = synth.cohort(20, n_per_group, np.random.default_rng(7000 + rep), separable=False)
        r = loso_evaluate(ds)
        accuracies.append(r.accuracy)
        pooled_correct += r.correct
        inside += lo <= r.correct <= hi
    elapsed = time.perf_counter() - start
    mean_acc = float(np.mean(accuracies))
    # per-repetition band: expect about 95% of repetitions inside; allow
    # Monte-Carlo slack of roughly two standard deviations at 50 repetitions
    null_ok = lo / n_subjects <= mean_acc <= hi / n_subjects and inside >= 45
    ok = sep.accuracy == 1.0 and null_ok and elapsed < 120
    pooled_lo, pooled_hi = stats.binom.interval(0.95, reps * n_subjects, 0.5)
    record(
        7,
        ok,
        f"separable {sep.summary()}; shared: mean acc {mean_acc:.3f}, {inside}/{reps} repetitions inside "
        f"[{lo / n_subjects:.2f}, {hi / n_subjects:.2f}]; pooled {pooled_correct}/{reps * n_subjects} "
        f"(pooled band {int(pooled_lo)}-{int(pooled_hi)}); {elapsed:.1f}s",
    )
    assert ok


# 8 ---------------------------------------------------------------------------------


def trial_means(seed):
    rng = np.random.default_rng(seed)
    scenes, fixations = synth.multi_observer_images(5, 6, rng)
    viewings = group_fixations(fixations)
    human, random_, chance = [], [], []
    for image_id, scene in scenes.items():
        views = [v for (img, _), v in viewings.items() if img == image_id]
        loo = human_loo_scores([f for v in views for f in v], scene)
        human.extend(loo.values())
        ref = build_image_reference(views, scene, with_saliency=False)
        n = median_fixation_count([f for v in views for f in v])
        for _ in views:
            for kind, sink in (("random", random_), ("chance", chance)):
                try:
                    if kind == "random":
                        sp = random_scanpath(choose_donor(viewings, image_id, rng), scene)
                    else:
                        sp = chance_scanpath(scene, n, rng)
                    sink.append(score_with(sp, ref))
                except (EmptyScanpathError, DegenerateScanpathError):
                    continue
    return float(np.mean(human)), float(np.mean(random_)), float(np.mean(chance)) if chance else 0.0


def test_criterion_8_baseline_ordering(record):
    rows = np.array([trial_means(800 + t) for t in range(100)])
    human, random_, chance = rows[:, 0], rows[:, 1], rows[:, 2]
    p = stats.ttest_rel(human, random_, alternative="greater").pvalue
    ok = human.mean() > random_.mean() > 0 and p < 0.01
    record(
        8,
        ok,
        f"100 trials: Human {human.mean():.4f} > Random {random_.mean():.4f} > 0 "
        f"(Chance {chance.mean():.4f}), paired t p = {p:.1e}",
    )
    assert ok


# 9 ---------------------------------------------------------------------------------


def test_criterion_9_report_format(record):
    report = loso_evaluate(synth.cohort(3, 3, np.random.default_rng(9), separable=True))
    ok = re.fullmatch(r"\d\.\d\d \(\d+/\d+\)", report.summary()) is not None and report.summary() == "1.00 (6/6)"
    record(9, ok, f"classification report style {report.summary()!r}")
    assert ok


def test_criterion_9_osie_coverage(record):
    manifest = os.environ.get("SEMGRAPH_OSIE_MANIFEST")
    if not manifest:
        record(9, None, "OSIE coverage: no data supplied (set SEMGRAPH_OSIE_MANIFEST to run)")
        pytest.skip("OSIE data not supplied")
    m = sio.load_manifest(manifest)
    scenes = sio.load_scenes(m.scenes_dir, m.attributes)
    rep = coverage_statistic(sio.load_fixations(m.fixations), scenes, 30.0)
    ok = rep.overall >= 0.95
    record(9, ok, f"OSIE coverage at 30px: {rep.overall:.4f} ({rep.retained}/{rep.total})")
    assert ok


# 10 --------------------------------------------------------------------------------

EXPORT_SCRIPT = """
import hashlib, sys
import numpy as np
sys.path.insert(0, {tests!r})
from test_acceptance import random_graph
from semgraph.io import export_graph
h = hashlib.sha256()
rng = np.random.default_rng(10)
for k in range(500):
    g = random_graph(rng, string_nodes=k % 2 == 0, image=f"g{{k}}")
    for fmt in ("dot", "adjacency_csv"):
        for view in ("counts", "probability", "score"):
            h.update(export_graph(g, fmt, view).encode())
print(h.hexdigest())
"""


def test_criterion_10_canonical_serialization(record):
    rng = np.random.default_rng(10)
    graphs = [random_graph(rng, string_nodes=k % 2 == 0, image=f"g{k}") for k in range(500)]
    round_trip_failures = sum(sio.graph_from_dict(json.loads(sio.export_graph(g, "json"))) != g for g in graphs)
    json_stable = all(sio.export_graph(sio.graph_from_dict(sio.graph_to_dict(g))) == sio.export_graph(g) for g in graphs)

    digests = set()
    for hash_seed in ("0", "1", "12345"):
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        out = subprocess.run(
            [sys.executable, "-c", EXPORT_SCRIPT.format(tests=str(TESTS_DIR))],
            env=env, capture_output=True, text=True, check=True,
        )
        digests.add(out.stdout.strip())
    in_process = hashlib.sha256()
    for g in graphs:
        for fmt in ("dot", "adjacency_csv"):
            for view in ("counts", "probability", "score"):
                in_process.update(sio.export_graph(g, fmt, view).encode())
    digests.add(in_process.hexdigest())
    ok = round_trip_failures == 0 and json_stable and len(digests) == 1
    record(10, ok, f"500 graphs: {round_trip_failures} JSON round-trip failures; "
                   f"dot/csv digests across 4 runs: {len(digests)} distinct")
    assert ok
