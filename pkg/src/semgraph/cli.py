"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 when input data fails
validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .baselines import chance_scanpath, choose_donor, human_loo_scores, median_fixation_count, random_scanpath
from .cohort import CohortDataset, group_node_intensity, loso_evaluate, subjects_from_fixations
from .core import (
    DegenerateScanpathError,
    EmptyGroupError,
    EmptyScanpathError,
    Level,
    SemgraphError,
)
from .graph import build_attention_graph, merge_to_attribute_graph, normalize_score_graph, sample_scanpath
from .metrics import (
    DEFAULT_SIGMA_PX,
    METRICS,
    S_SCAN,
    S_SCAN_WEIGHTED,
    build_image_reference,
    score_scanpath,
    score_scanpath_weighted,
    score_with,
)
from .scanpath import DEFAULT_TOLERANCE_PX, build_scanpaths, coverage_statistic, group_fixations, to_attribute_scanpath

log = logging.getLogger("semgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--tolerance-px", type=float, default=d(None), help=f"near-object tolerance (default {DEFAULT_TOLERANCE_PX:g})")
    p.add_argument("--sigma-px", type=float, default=d(None), help=f"density kernel sigma (default {DEFAULT_SIGMA_PX:g})")
    p.add_argument("--level", choices=[l.value for l in Level], default=d(Level.OBJECT.value))
    p.add_argument("--metric", choices=METRICS, default=d(S_SCAN))
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--output", "-o", default=d(None), help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semgraph", description="Semantic scanpaths and attention graphs.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("build-scanpaths", parents=[common], help="fixations + scenes -> scanpath JSONL")
    p.add_argument("--fixations", required=True)
    p.add_argument("--scenes", required=True, help="directory of label rasters")
    p.add_argument("--attributes", help="combined attribute JSON (image -> object -> names)")

    p = sub.add_parser("build-graph", parents=[common], help="scanpaths -> graph exports")
    p.add_argument("--scanpaths", required=True)
    p.add_argument("--image", help="only this image")
    p.add_argument("--format", choices=sio.GRAPH_FORMATS, default="json")
    p.add_argument("--view", choices=sio.WEIGHT_VIEWS, default="counts")
    p.add_argument("--output-dir", help="one file per image")
    p.add_argument("--merge-attributes", action="store_true", help="merge object graphs to attribute level")
    p.add_argument("--scenes", help="scene directory (for --merge-attributes / saliency)")
    p.add_argument("--attributes")
    p.add_argument("--fixations", help="human fixations; writes <image>.saliency.json into --output-dir")

    p = sub.add_parser("score", parents=[common], help="score scanpaths against one graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--scanpaths", required=True)
    p.add_argument("--saliency", help="saliency JSON for the weighted score")

    p = sub.add_parser("eval", parents=[common], help="batch evaluation of predicted fixations")
    p.add_argument("--fixations", required=True, help="human fixations")
    p.add_argument("--predictions", help="model fixations; observer_id names the model")
    p.add_argument("--scenes", required=True)
    p.add_argument("--attributes")
    p.add_argument("--human", action="store_true", help="add the leave-one-observer-out human row")
    p.add_argument("--baselines", action="store_true", help="add Chance and Random rows")

    p = sub.add_parser("baseline", parents=[common], help="generate Chance or Random scanpaths")
    p.add_argument("kind", choices=["chance", "random"])
    p.add_argument("--fixations", required=True, help="human fixations")
    p.add_argument("--scenes", required=True)
    p.add_argument("--attributes")
    p.add_argument("--n-points", type=int, help="chance points per image (default: median human count)")

    p = sub.add_parser("classify", parents=[common], help="leave-one-subject-out cohort classification")
    p.add_argument("--manifest-a", required=True)
    p.add_argument("--manifest-b", required=True)

    p = sub.add_parser("stats", parents=[common], help="coverage or node-intensity statistics")
    p.add_argument("kind", choices=["coverage", "intensity"])
    p.add_argument("--fixations")
    p.add_argument("--scenes")
    p.add_argument("--attributes")
    p.add_argument("--manifest-a")
    p.add_argument("--manifest-b")

    p = sub.add_parser("sample", parents=[common], help="sample scanpaths from a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--max-len", type=int, default=10)
    p.add_argument("--count", type=int, default=1)
    return parser


# --------------------------------------------------------------------------


def _tolerance(args, fallback=DEFAULT_TOLERANCE_PX) -> float:
    return args.tolerance_px if args.tolerance_px is not None else fallback


def _sigma(args, fallback=DEFAULT_SIGMA_PX) -> float:
    return args.sigma_px if args.sigma_px is not None else fallback


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    return "nan" if x is None else sio.format_float(x)


def _load_human(args):
    scenes = sio.load_scenes(args.scenes, args.attributes)
    fixations = sio.load_fixations(args.fixations)
    sio.check_fixation_bounds(fixations, scenes)
    return fixations, scenes


def cmd_build_scanpaths(args) -> int:
    fixations, scenes = _load_human(args)
    sps = build_scanpaths(fixations, scenes, args.level, _tolerance(args))
    dropped = len(group_fixations(fixations)) - len(sps)
    if dropped:
        log.warning("%d viewing(s) had every fixation discarded and were skipped", dropped)
    _emit(args, sio.format_scanpaths(sps))
    return EXIT_OK


def cmd_build_graph(args) -> int:
    sps = sio.load_scanpaths(args.scanpaths)
    if args.image:
        sps = [sp for sp in sps if sp.image_id == args.image]
    by_image: dict = {}
    for sp in sps:
        by_image.setdefault(sp.image_id, []).append(sp)
    if not by_image:
        raise SemgraphError("no scanpaths selected")
    scenes = sio.load_scenes(args.scenes, args.attributes) if args.scenes else None
    if (args.merge_attributes or args.fixations) and scenes is None:
        raise UsageError("--merge-attributes and --fixations need --scenes")
    if len(by_image) > 1 and not args.output_dir:
        raise UsageError("several images selected; pass --image or --output-dir")

    fixations = group_fixations(sio.load_fixations(args.fixations)) if args.fixations else None
    for image_id in sorted(by_image):
        g = build_attention_graph(by_image[image_id])
        if args.merge_attributes:
            g = merge_to_attribute_graph(g, scenes[image_id])
        text = sio.export_graph(g, args.format, args.view)
        if args.output_dir:
            out = Path(args.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{image_id}{sio.GRAPH_SUFFIX[args.format]}").write_text(text, encoding="utf-8")
            if fixations is not None:
                views = [v for (img, _), v in fixations.items() if img == image_id]
                ref = build_image_reference(views, scenes[image_id], g.level, _tolerance(args), _sigma(args))
                doc = sio.saliency_to_dict(ref.saliency, g.level)
                (out / f"{image_id}.saliency.json").write_text(sio.dumps(doc) + "\n", encoding="utf-8")
        else:
            _emit(args, text)
    return EXIT_OK


def cmd_score(args) -> int:
    g = sio.load_graph(args.graph)
    sg = normalize_score_graph(g)
    sal = sio.load_saliency(args.saliency) if args.saliency else None
    if args.metric == S_SCAN_WEIGHTED and sal is None:
        raise UsageError("--metric s_scan_weighted needs --saliency")
    rows = ["image_id\tobserver_id\ts_scan" + ("\ts_scan_weighted" if sal else "")]
    for sp in sio.load_scanpaths(args.scanpaths):
        if sp.image_id != g.image_id:
            raise SemgraphError(f"scanpath of {sp.observer_id!r} is for image {sp.image_id!r}, graph is {g.image_id!r}")
        try:
            line = f"{sp.image_id}\t{sp.observer_id}\t{_fmt(score_scanpath(sp, sg).value)}"
            if sal:
                line += f"\t{_fmt(score_scanpath_weighted(sp, sg, sal).value)}"
        except DegenerateScanpathError as e:
            log.warning("skipped: %s", e)
            continue
        rows.append(line)
    _emit(args, "\n".join(rows) + "\n")
    return EXIT_OK


def _score_both(sp, ref):
    return score_with(sp, ref, S_SCAN), score_with(sp, ref, S_SCAN_WEIGHTED)


def cmd_eval(args) -> int:
    fixations, scenes = _load_human(args)
    level = Level(args.level)
    tol, sigma = _tolerance(args), _sigma(args)
    human = group_fixations(fixations)
    predictions = {}
    if args.predictions:
        pred = sio.load_fixations(args.predictions)
        sio.check_fixation_bounds(pred, scenes)
        predictions = group_fixations(pred)
    rng = np.random.default_rng(args.seed)

    results: dict = {}  # model -> list of (image_id, s, s')
    for image_id in sorted({k[0] for k in human}):
        scene = scenes[image_id]
        views = [v for (img, _), v in human.items() if img == image_id]
        try:
            ref = build_image_reference(views, scene, level, tol, sigma)
        except EmptyGroupError:
            log.warning("no usable human scanpaths on %s; image skipped", image_id)
            continue

        candidates = {}
        for (img, model), fs in sorted(predictions.items()):
            if img == image_id:
                candidates[model] = lambda fs=fs: build_scanpaths(fs, scenes, level, tol, skip_empty=False)[0]
        if args.baselines:
            n = median_fixation_count([f for v in views for f in v])
            candidates["Chance"] = lambda n=n: chance_scanpath(scene, n, rng, tol)
            candidates["Random"] = lambda: random_scanpath(choose_donor(human, image_id, rng), scene, tol)
        for model, make in candidates.items():
            try:
                sp = make()
                if level is Level.ATTRIBUTE and sp.level is Level.OBJECT:
                    sp = to_attribute_scanpath(sp, scene)
                s, sw = _score_both(sp, ref)
            except (EmptyScanpathError, DegenerateScanpathError):
                s = sw = None
            results.setdefault(model, []).append((image_id, s, sw))
        if args.human:
            for metric in (S_SCAN, S_SCAN_WEIGHTED):
                loo = human_loo_scores([f for v in views for f in v], scene, level, metric, tol, sigma)
                val = float(np.mean(list(loo.values()))) if loo else None
                results.setdefault(("Human", metric), []).append((image_id, val))
    if args.human:
        plain = dict(results.pop(("Human", S_SCAN), []))
        weighted = dict(results.pop(("Human", S_SCAN_WEIGHTED), []))
        results["Human"] = [(i, plain[i], weighted.get(i)) for i in sorted(plain)]

    lines = ["model\timage_id\ts_scan\ts_scan_weighted"]
    for model in sorted(results):
        for image_id, s, sw in results[model]:
            lines.append(f"{model}\t{image_id}\t{_fmt(s)}\t{_fmt(sw)}")
    lines.append("")
    lines.append("model\tmean_s_scan\tmean_s_scan_weighted\timages")
    for model in sorted(results):
        s_vals = [s for _, s, _ in results[model] if s is not None]
        w_vals = [w for _, _, w in results[model] if w is not None]
        ms = float(np.mean(s_vals)) if s_vals else None
        mw = float(np.mean(w_vals)) if w_vals else None
        lines.append(f"{model}\t{_fmt(ms)}\t{_fmt(mw)}\t{len(s_vals)}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_baseline(args) -> int:
    fixations, scenes = _load_human(args)
    level = Level(args.level)
    tol = _tolerance(args)
    human = group_fixations(fixations)
    rng = np.random.default_rng(args.seed)
    out = []
    for image_id in sorted({k[0] for k in human}):
        scene = scenes[image_id]
        try:
            if args.kind == "chance":
                n = args.n_points or median_fixation_count([f for (img, _), v in human.items() if img == image_id for f in v])
                sp = chance_scanpath(scene, n, rng, tol)
            else:
                sp = random_scanpath(choose_donor(human, image_id, rng), scene, tol)
        except EmptyScanpathError as e:
            log.warning("%s baseline empty on %s: %s", args.kind, image_id, e)
            continue
        if level is Level.ATTRIBUTE:
            sp = to_attribute_scanpath(sp, scene)
        out.append(sp)
    _emit(args, sio.format_scanpaths(out))
    return EXIT_OK


def _load_cohort(args) -> tuple[CohortDataset, sio.DatasetManifest]:
    ma, mb = sio.load_manifest(args.manifest_a), sio.load_manifest(args.manifest_b)
    ga, gb = ma.group or ma.name, mb.group or mb.name
    scenes = {}
    subjects = {}
    for m, g in ((ma, ga), (mb, gb)):
        sc = sio.load_scenes(m.scenes_dir, m.attributes)
        for image_id, scene in sc.items():
            if image_id in scenes and scenes[image_id] != scene:
                raise SemgraphError(f"manifests disagree on the annotation of image {image_id!r}")
            scenes[image_id] = scene
        fixations = sio.load_fixations(m.fixations)
        sio.check_fixation_bounds(fixations, sc)
        subjects.update(subjects_from_fixations(fixations, g, m.subject_convention, prefix=f"{g}/"))
    return CohortDataset(ga, gb, subjects, scenes), ma


def cmd_classify(args) -> int:
    ds, ma = _load_cohort(args)
    report = loso_evaluate(ds, args.level, args.metric, _tolerance(args, ma.tolerance_px), _sigma(args, ma.sigma_px))
    lines = ["subject\ttrue\tpredicted\tvotes_a\tvotes_b\tskipped"]
    for sid, o in sorted(report.per_subject.items()):
        lines.append(f"{sid}\t{o.true_group}\t{o.predicted or '-'}\t{o.votes_a}\t{o.votes_b}\t{o.skipped}")
    lines.append(f"accuracy\t{report.summary()}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.kind == "coverage":
        if not (args.fixations and args.scenes):
            raise UsageError("stats coverage needs --fixations and --scenes")
        fixations, scenes = _load_human(args)
        rep = coverage_statistic(fixations, scenes, _tolerance(args))
        lines = ["image_id\tretained_fraction"]
        lines += [f"{i}\t{_fmt(v)}" for i, v in rep.per_image.items()]
        lines.append(f"overall\t{_fmt(rep.overall)}\t({rep.retained}/{rep.total})")
    else:
        if not (args.manifest_a and args.manifest_b):
            raise UsageError("stats intensity needs --manifest-a and --manifest-b")
        ds, ma = _load_cohort(args)
        c = group_node_intensity(ds, ds.group_a, args.level, _tolerance(args, ma.tolerance_px))
        lines = [f"image_id\t{c.group}\t{c.other}"]
        for i in sorted(set(c.intensities) | set(c.other_intensities)):
            lines.append(f"{i}\t{c.intensities.get(i, '-')}\t{c.other_intensities.get(i, '-')}")
        lines.append(f"mean\t{_fmt(c.mean)}\t{_fmt(c.other_mean)}")
        lines.append(f"welch_t\t{_fmt(c.t_statistic)}\tdf\t{_fmt(c.dof)}\tp\t{_fmt(c.p_value)}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sample(args) -> int:
    g = sio.load_graph(args.graph)
    start = args.start
    if g.level is Level.OBJECT:
        try:
            start = int(start)
        except ValueError:
            raise UsageError(f"object-level start node must be an integer id, got {start!r}") from None
    if args.max_len < 1 or args.count < 1:
        raise UsageError("--max-len and --count must be positive")
    rng = np.random.default_rng(args.seed)
    sps = [sample_scanpath(g, start, args.max_len, rng, observer_id=f"sample{i}") for i in range(args.count)]
    _emit(args, sio.format_scanpaths(sps))
    return EXIT_OK


COMMANDS = {
    "build-scanpaths": cmd_build_scanpaths,
    "build-graph": cmd_build_graph,
    "score": cmd_score,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "classify": cmd_classify,
    "stats": cmd_stats,
    "sample": cmd_sample,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "semgraph: error: a subcommand is required")
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (SemgraphError, OSError, json.JSONDecodeError) as e:
        print(f"semgraph: error: {e}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s")
    sys.exit(cli_main())
