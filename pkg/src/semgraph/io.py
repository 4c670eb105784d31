"""File formats: fixation tables, label rasters, scanpaths, graphs and manifests.

All writers are canonical: the same value always produces the same bytes
(sorted keys, sorted nodes, floats rounded to 9 significant digits).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import (
    AttentionGraph,
    BoundsError,
    Fixation,
    Level,
    ObjectSaliency,
    ParseError,
    Scene,
    SemanticScanpath,
    ValidationError,
    node_sort_key,
    sorted_nodes,
    validate_scene,
)
from .graph import normalize_score_graph, transition_probabilities
from .metrics import DEFAULT_SIGMA_PX
from .scanpath import DEFAULT_TOLERANCE_PX

FIXATION_COLUMNS = ("image_id", "observer_id", "seq_index", "x", "y", "duration_ms")
COORDINATE_CONVENTION = "x=column,y=row,origin=top-left"

GRAPH_FORMATS = ("json", "dot", "adjacency_csv")
WEIGHT_VIEWS = ("counts", "probability", "score")


def canonical_float(x: float) -> float:
    return float(f"{float(x):.9g}")


def format_float(x: float) -> str:
    return repr(canonical_float(x))


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# --------------------------------------------------------------------------
# Fixations
# --------------------------------------------------------------------------


def _sniff_delimiter(header: str) -> str:
    for d in (",", "\t", ";"):
        if d in header:
            return d
    return ","


def parse_fixations(text: str, source="<string>") -> list[Fixation]:
    """Parse a delimited fixation table.

    Viewings keep their order of first appearance; fixations within a
    viewing are sorted by ``seq_index``.
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", source, 1)
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delim)
    header = [h.strip() for h in next(reader)]
    required = FIXATION_COLUMNS[:5]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"header lacks columns {missing}; expected {','.join(FIXATION_COLUMNS)}", source, 1)
    col = {name: header.index(name) for name in header}

    viewings: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", source, lineno)
        try:
            seq = row[col["seq_index"]].strip()
            if not seq.lstrip("+").isdigit():
                raise ValueError(f"seq_index {seq!r} is not a non-negative integer")
            dur = float(row[col["duration_ms"]]) if "duration_ms" in col and row[col["duration_ms"]].strip() else 0.0
            f = Fixation(
                row[col["image_id"]].strip(),
                row[col["observer_id"]].strip(),
                int(seq),
                float(row[col["x"]]),
                float(row[col["y"]]),
                dur,
            )
        except ValueError as e:
            raise ParseError(f"malformed row: {e}", source, lineno) from None
        if not np.isfinite([f.x, f.y, f.duration_ms]).all() or f.duration_ms < 0:
            raise ParseError("non-finite coordinate or negative duration", source, lineno)
        viewings.setdefault((f.image_id, f.observer_id), []).append((lineno, f))

    out = []
    for (image_id, obs), items in viewings.items():
        items.sort(key=lambda t: t[1].seq_index)
        for (la, a), (lb, b) in zip(items, items[1:]):
            if a.seq_index == b.seq_index:
                raise ParseError(
                    f"duplicate seq_index {a.seq_index} for observer {obs!r} on image {image_id!r} (also line {la})",
                    source,
                    lb,
                )
        idx = [f.seq_index for _, f in items]
        if idx != list(range(len(idx))):
            raise ParseError(
                f"seq_index of observer {obs!r} on image {image_id!r} is not a contiguous 0-based run",
                source,
                items[0][0],
            )
        out.extend(f for _, f in items)
    return out


def load_fixations(path) -> list[Fixation]:
    path = Path(path)
    return parse_fixations(path.read_text(encoding="utf-8"), path)


def format_fixations(fixations: Iterable[Fixation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIXATION_COLUMNS)
    for f in fixations:
        w.writerow([f.image_id, f.observer_id, f.seq_index, format_float(f.x), format_float(f.y), format_float(f.duration_ms)])
    return buf.getvalue()


def write_fixations(fixations: Iterable[Fixation], path) -> None:
    Path(path).write_text(format_fixations(fixations), encoding="utf-8")


def check_fixation_bounds(fixations: Iterable[Fixation], scenes: Mapping[str, Scene]) -> None:
    for f in fixations:
        scene = scenes.get(f.image_id)
        if scene is None:
            raise ValidationError(f"no scene for image {f.image_id!r} (observer {f.observer_id!r})")
        if not scene.contains(f.x, f.y):
            raise BoundsError(
                f"fixation {f.key} at ({f.x}, {f.y}) outside {scene.width}x{scene.height} scene"
            )


# --------------------------------------------------------------------------
# Label rasters
# --------------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    """First ``count`` header tokens of a netpbm file and the offset after them."""
    tokens, i, n = [], 0, len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Read a single-channel PGM (binary P5 or ASCII P2, 8- or 16-bit)."""
    path = Path(path)
    data = path.read_bytes()
    try:
        (magic, w, h, maxval), off = _pgm_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as e:
        raise ParseError(f"bad PGM header: {e}", path) from None
    if magic not in (b"P5", b"P2"):
        raise ParseError(f"unsupported netpbm type {magic.decode(errors='replace')}", path)
    if not (0 < maxval < 65536):
        raise ParseError(f"maxval {maxval} out of range", path)
    if magic == b"P2":
        values = data[off:].split()
        if len(values) < w * h:
            raise ParseError(f"expected {w * h} samples, got {len(values)}", path)
        return np.array([int(v) for v in values[: w * h]], dtype=np.int64).reshape(h, w)
    off += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(data) - off < need:
        raise ParseError(f"raster data truncated ({len(data) - off} of {need} bytes)", path)
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=off).astype(np.int64).reshape(h, w)


def write_pgm(raster: np.ndarray, path) -> None:
    raster = np.asarray(raster)
    if raster.min(initial=0) < 0 or raster.max(initial=0) > 65535:
        raise ValidationError("labels must fit in 16 bits")
    h, w = raster.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + raster.astype(">u2").tobytes())


def raster_to_rle(raster: np.ndarray) -> dict:
    flat = np.asarray(raster).ravel()
    runs = []
    if flat.size:
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [flat.size]))
        runs = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
    h, w = np.asarray(raster).shape
    return {"format": "rle", "height": int(h), "runs": runs, "width": int(w)}


def rle_to_raster(doc: Mapping, source="<rle>") -> np.ndarray:
    try:
        w, h = int(doc["width"]), int(doc["height"])
        runs = doc["runs"]
        labels = np.array([int(r[0]) for r in runs], dtype=np.int64)
        lengths = np.array([int(r[1]) for r in runs], dtype=np.int64)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ParseError(f"bad run-length document: {e}", source) from None
    if (lengths < 0).any() or lengths.sum() != w * h:
        raise ParseError(f"runs cover {int(lengths.sum())} pixels, expected {w * h}", source)
    return np.repeat(labels, lengths).reshape(h, w)


def _read_attributes(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return {int(k): list(v) for k, v in doc.items()}
    except (ValueError, AttributeError, TypeError) as e:
        raise ParseError(f"bad attribute file: {e}", path) from None


def read_raster(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ParseError(f"invalid JSON: {e}", path) from None
        return rle_to_raster(doc, path)
    return read_pgm(path)


def _image_id_for(path: Path) -> str:
    name = path.name
    for suffix in (".rle.json", ".pgm", ".json"):
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def load_scene(raster_path, attributes_path=None, image_id: str | None = None, attributes: Mapping | None = None) -> Scene:
    """Load a label raster and (optionally) its object-to-attributes map."""
    raster_path = Path(raster_path)
    raster = read_raster(raster_path)
    attrs = dict(attributes or {})
    if attributes_path is not None:
        attrs.update(_read_attributes(attributes_path))
    image_id = image_id or _image_id_for(raster_path)
    try:
        scene = Scene.from_raster(image_id, raster, attrs)
    except ValidationError as e:
        raise ValidationError(f"{raster_path}: {e}") from None
    problems = validate_scene(scene)
    if problems:
        raise ValidationError(f"{raster_path}: " + "; ".join(problems))
    return scene


def load_scenes(directory, attributes_path=None) -> dict:
    """Every ``<image_id>.pgm`` / ``<image_id>.rle.json`` in a directory.

    Attributes come from ``<image_id>.attributes.json`` beside the raster
    and/or a combined file mapping image id to object id to attribute names.
    """
    directory = Path(directory)
    combined = {}
    if attributes_path is not None:
        try:
            doc = json.loads(Path(attributes_path).read_text(encoding="utf-8"))
            combined = {str(img): {int(k): list(v) for k, v in objs.items()} for img, objs in doc.items()}
        except (ValueError, AttributeError, TypeError) as e:
            raise ParseError(f"bad combined attribute file: {e}", attributes_path) from None
    scenes = {}
    for path in sorted(directory.iterdir()):
        name = path.name.lower()
        if not (name.endswith(".pgm") or name.endswith(".rle.json")):
            continue
        image_id = _image_id_for(path)
        if image_id in scenes:
            raise ValidationError(f"two rasters for image {image_id!r} in {directory}")
        side = directory / f"{image_id}.attributes.json"
        scenes[image_id] = load_scene(
            path, side if side.exists() else None, image_id, combined.get(image_id)
        )
    unknown = sorted(set(combined) - set(scenes))
    if unknown:
        raise ValidationError(f"attributes given for images without rasters: {unknown}")
    return scenes


def write_scene(scene: Scene, directory, raster_format: str = "pgm") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if raster_format == "pgm":
        write_pgm(scene.label_raster, directory / f"{scene.image_id}.pgm")
    elif raster_format == "rle":
        (directory / f"{scene.image_id}.rle.json").write_text(dumps(raster_to_rle(scene.label_raster)) + "\n")
    else:
        raise ValueError(f"unknown raster format {raster_format!r}")
    attrs = {str(k): sorted(v.attributes) for k, v in sorted(scene.objects.items())}
    (directory / f"{scene.image_id}.attributes.json").write_text(dumps(attrs) + "\n")


# --------------------------------------------------------------------------
# Scanpaths
# --------------------------------------------------------------------------


def _decode_node(value, level: Level, source=None, line=None):
    if level is Level.OBJECT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"object-level node {value!r} is not an integer id", source, line)
        return value
    if not isinstance(value, str):
        raise ParseError(f"attribute-level node {value!r} is not a string", source, line)
    return value


def scanpath_to_dict(sp: SemanticScanpath) -> dict:
    return {
        "image_id": sp.image_id,
        "level": sp.level.value,
        "observer_id": sp.observer_id,
        "source_spans": [list(s) for s in sp.source_spans],
        "terms": list(sp.terms),
    }


def scanpath_from_dict(doc: Mapping, source=None, line=None) -> SemanticScanpath:
    try:
        level = Level(doc["level"])
        terms = [_decode_node(t, level, source, line) for t in doc["terms"]]
        spans = [(int(a), int(b)) for a, b in doc.get("source_spans") or [(i, i) for i in range(len(terms))]]
        return SemanticScanpath(str(doc["image_id"]), str(doc["observer_id"]), level, terms, spans)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad scanpath record: {e}", source, line) from None


def format_scanpaths(scanpaths: Iterable[SemanticScanpath]) -> str:
    return "".join(dumps(scanpath_to_dict(sp)) + "\n" for sp in scanpaths)


def write_scanpaths(scanpaths: Iterable[SemanticScanpath], path) -> None:
    Path(path).write_text(format_scanpaths(scanpaths), encoding="utf-8")


def load_scanpaths(path) -> list[SemanticScanpath]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except ValueError as e:
            raise ParseError(f"invalid JSON: {e}", path, lineno) from None
        out.append(scanpath_from_dict(doc, path, lineno))
    return out


# --------------------------------------------------------------------------
# Graphs
# --------------------------------------------------------------------------


def _edge_rows(g: AttentionGraph) -> list:
    probs = transition_probabilities(g)
    scores = normalize_score_graph(g).scores
    keys = sorted(g.edge_counts, key=lambda e: (node_sort_key(e[0]), node_sort_key(e[1])))
    return [(u, v, g.edge_counts[(u, v)], probs[(u, v)], scores[(u, v)]) for u, v in keys]


def graph_to_dict(g: AttentionGraph) -> dict:
    return {
        "edges": [
            {
                "count": int(c),
                "dst": v,
                "probability": canonical_float(p),
                "score": canonical_float(s),
                "src": u,
            }
            for u, v, c, p, s in _edge_rows(g)
        ],
        "image_id": g.image_id,
        "level": g.level.value,
        "nodes": sorted_nodes(g.nodes),
        "observer_count": int(g.observer_count),
    }


def graph_from_dict(doc: Mapping, source=None) -> AttentionGraph:
    """Rebuild a graph from its JSON form; derived weights are recomputed from counts."""
    try:
        level = Level(doc["level"])
        nodes = [_decode_node(n, level, source) for n in doc["nodes"]]
        counts = {}
        for e in doc["edges"]:
            key = (_decode_node(e["src"], level, source), _decode_node(e["dst"], level, source))
            if key in counts:
                raise ParseError(f"duplicate edge {key}", source)
            counts[key] = int(e["count"])
        observers = int(doc.get("observer_count", 1))
        return AttentionGraph(str(doc["image_id"]), level, nodes, counts, observers)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad graph document: {e}", source) from None


def load_graph(path) -> AttentionGraph:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ParseError(f"invalid JSON: {e}", path) from None
    return graph_from_dict(doc, path)


def _weight_table(g: AttentionGraph, view: str) -> dict:
    if view == "counts":
        return dict(g.edge_counts)
    if view == "probability":
        return transition_probabilities(g)
    if view == "score":
        return dict(normalize_score_graph(g).scores)
    raise ValueError(f"unknown weight view {view!r}; expected one of {WEIGHT_VIEWS}")


def _fmt_weight(w, view: str) -> str:
    return str(int(w)) if view == "counts" else format_float(w)


def _dot_id(value) -> str:
    text = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{text}"'


def export_graph(g: AttentionGraph, fmt: str = "json", view: str = "counts") -> str:
    """Render a graph as canonical JSON, Graphviz DOT, or an adjacency-matrix CSV."""
    if fmt == "json":
        return dumps(graph_to_dict(g)) + "\n"
    weights = _weight_table(g, view)
    nodes = sorted_nodes(g.nodes)
    if fmt == "dot":
        lines = [f"digraph {_dot_id(g.image_id)} {{"]
        lines.append(f"  graph [level={_dot_id(g.level.value)}, weight_view={_dot_id(view)}];")
        lines.extend(f"  {_dot_id(n)};" for n in nodes)
        for u, v in sorted(weights, key=lambda e: (node_sort_key(e[0]), node_sort_key(e[1]))):
            lines.append(f"  {_dot_id(u)} -> {_dot_id(v)} [label={_dot_id(_fmt_weight(weights[(u, v)], view))}];")
        lines.append("}")
        return "\n".join(lines) + "\n"
    if fmt == "adjacency_csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + [str(n) for n in nodes])
        zero = "0" if view == "counts" else format_float(0.0)
        for u in nodes:
            w.writerow([str(u)] + [_fmt_weight(weights[(u, v)], view) if (u, v) in weights else zero for v in nodes])
        return buf.getvalue()
    raise ValueError(f"unknown graph format {fmt!r}; expected one of {GRAPH_FORMATS}")


GRAPH_SUFFIX = {"json": ".graph.json", "dot": ".dot", "adjacency_csv": ".csv"}


# --------------------------------------------------------------------------
# Saliency
# --------------------------------------------------------------------------


def saliency_to_dict(sal: ObjectSaliency, level: Level) -> dict:
    return {
        "image_id": sal.image_id,
        "level": Level(level).value,
        "values": [[k, canonical_float(sal.values[k])] for k in sorted_nodes(sal.values)],
    }


def saliency_from_dict(doc: Mapping, source=None) -> ObjectSaliency:
    try:
        level = Level(doc["level"])
        values = {_decode_node(k, level, source): float(v) for k, v in doc["values"]}
        return ObjectSaliency(str(doc["image_id"]), values)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad saliency document: {e}", source) from None


def load_saliency(path) -> ObjectSaliency:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ParseError(f"invalid JSON: {e}", path) from None
    return saliency_from_dict(doc, path)


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    fixations: Path
    scenes_dir: Path
    attributes: Path | None = None
    tolerance_px: float = DEFAULT_TOLERANCE_PX
    sigma_px: float = DEFAULT_SIGMA_PX
    coordinate_convention: str = COORDINATE_CONVENTION
    group: str | None = None
    subject_convention: str = "observer_id"

    def validate(self) -> None:
        for label, p in (("fixations", self.fixations), ("scenes_dir", self.scenes_dir), ("attributes", self.attributes)):
            if p is not None and not Path(p).exists():
                raise ValidationError(f"manifest {self.name!r}: {label} path {p} does not exist")
        if not self.tolerance_px > 0 or not self.sigma_px > 0:
            raise ValidationError(f"manifest {self.name!r}: tolerance_px and sigma_px must be positive")
        if self.coordinate_convention.replace(" ", "") != COORDINATE_CONVENTION:
            raise ValidationError(
                f"manifest {self.name!r}: coordinate convention {self.coordinate_convention!r} "
                f"is not {COORDINATE_CONVENTION!r}"
            )
        if self.subject_convention not in ("observer_id", "sequence_order"):
            raise ValidationError(f"manifest {self.name!r}: unknown subject_convention {self.subject_convention!r}")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ParseError(f"invalid JSON: {e}", path) from None
    base = path.parent

    def resolve(key, required=True):
        if doc.get(key) is None:
            if required:
                raise ParseError(f"manifest lacks {key!r}", path)
            return None
        return Path(os.path.join(base, doc[key]))

    try:
        m = DatasetManifest(
            name=str(doc.get("name", path.stem)),
            fixations=resolve("fixations"),
            scenes_dir=resolve("scenes_dir"),
            attributes=resolve("attributes", required=False),
            tolerance_px=float(doc.get("tolerance_px", DEFAULT_TOLERANCE_PX)),
            sigma_px=float(doc.get("sigma_px", DEFAULT_SIGMA_PX)),
            coordinate_convention=str(doc.get("coordinate_convention", COORDINATE_CONVENTION)),
            group=doc.get("group"),
            subject_convention=str(doc.get("subject_convention", "observer_id")),
        )
    except (TypeError, ValueError) as e:
        raise ParseError(f"bad manifest field: {e}", path) from None
    m.validate()
    return m
