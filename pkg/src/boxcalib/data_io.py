"""Scene/extrinsic files, datasets, reports and mesh export.

File formats (all UTF-8 JSON unless noted):

* scene file: an array of boxes, each
  ``{"category": str, "center": [x, y, z], "size": [l, w, h], "yaw": rad,
  "confidence": float?, "track_id": int?}``
* extrinsic file: a 4x4 row-major homogeneous matrix as nested arrays, or
  ``{"matrix": [[...], ...]}``; DAIR-V2X style ``{"rotation": 3x3,
  "translation": 3x1}`` is accepted as well.
* dataset manifest (``manifest.json``): ``{"format", "prng", "params",
  "pairs": [{"id", "infra", "vehicle", "gt", "difficulty"?}]}`` with paths
  relative to the manifest.
* geometry export: ASCII PLY, 8 vertices and 6 quad faces per box, with a
  per-vertex ``source`` label (0 = vehicle, 1 = transformed infrastructure).
"""

from __future__ import annotations

import json
import math
import numbers
from pathlib import Path
from typing import Optional

import numpy as np

from .affinity import Scene
from .errors import IoError, NotRigid, ParseError, SchemaError
from .evaluation import BenchmarkReport, FramePairRecord
from .geometry import CATEGORIES, Box3D, RigidTransform, apply_transform, box_vertices
from .kernels import FACE_CORNERS

MANIFEST = "manifest.json"
DATASET_FORMAT = "boxcalib-dataset/1"


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def write_text(path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ParseError(f"{where}: non-finite number {value!r}")
    return out


def _vector3(value, where: str) -> list:
    if not isinstance(value, list) or len(value) != 3:
        raise ParseError(f"{where}: expected an array of 3 numbers, got {value!r}")
    return [_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def box_from_dict(obj, where: str = "box") -> Box3D:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    for key in ("category", "center", "size", "yaw"):
        if key not in obj:
            raise SchemaError(f"{where}: missing required field {key!r}")
    category = obj["category"]
    if not isinstance(category, str):
        raise SchemaError(f"{where}.category: expected a string")
    category = category.strip().lower()
    if category not in CATEGORIES:
        category = "other"
    center = _vector3(obj["center"], f"{where}.center")
    size = _vector3(obj["size"], f"{where}.size")
    if any(s <= 0 for s in size):
        raise SchemaError(f"{where}.size: all components must be positive, got {size}")
    yaw = _number(obj["yaw"], f"{where}.yaw")
    confidence = 1.0
    if obj.get("confidence") is not None:
        confidence = _number(obj["confidence"], f"{where}.confidence")
        if not 0.0 <= confidence <= 1.0:
            raise SchemaError(f"{where}.confidence: must lie in [0, 1], got {confidence}")
    track_id = obj.get("track_id")
    if track_id is not None and (isinstance(track_id, bool) or not isinstance(track_id, int)):
        raise ParseError(f"{where}.track_id: expected an integer, got {track_id!r}")
    return Box3D(category, center, size, yaw, confidence, track_id)


def box_to_dict(box: Box3D) -> dict:
    out = {
        "category": box.category,
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "yaw": float(box.yaw),
        "confidence": float(box.confidence),
    }
    if box.track_id is not None:
        out["track_id"] = int(box.track_id)
    return out


def load_scene(path, frame_id: Optional[str] = None) -> Scene:
    data = read_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: scene file must hold a JSON array of boxes")
    boxes = [box_from_dict(obj, f"{path}: box {k}") for k, obj in enumerate(data)]
    return Scene(boxes, frame_id if frame_id is not None else Path(path).stem)


def save_scene(scene: Scene, path):
    write_text(path, dumps([box_to_dict(b) for b in scene.boxes]))


def nearest_rotation(mat: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(mat)
    return u @ vt


def extrinsic_from_matrix(mat, where: str = "extrinsic") -> RigidTransform:
    """Validate a 4x4 homogeneous matrix and snap its rotation block onto SO(3)."""
    if (
        not isinstance(mat, list)
        or len(mat) != 4
        or any(not isinstance(row, list) or len(row) != 4 for row in mat)
    ):
        raise ParseError(f"{where}: expected a 4x4 array of numbers")
    m = np.array([[_number(v, f"{where}[{r}][{c}]") for c, v in enumerate(row)] for r, row in enumerate(mat)])
    if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
        raise ParseError(f"{where}: bottom row must be [0, 0, 0, 1], got {m[3].tolist()}")
    return _rigid(m[:3, :3], m[:3, 3], where)


def _rigid(rot, trans, where) -> RigidTransform:
    det = float(np.linalg.det(rot))
    ortho_err = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
    if abs(det - 1.0) > 1e-6 or ortho_err > 1e-6:
        raise NotRigid(f"{where}: rotation block is not a proper rotation (det={det:.9g}, orthonormality error={ortho_err:.3g})")
    return RigidTransform(nearest_rotation(rot), trans)


def load_extrinsic(path) -> RigidTransform:
    data = read_json(path)
    where = str(path)
    if isinstance(data, dict) and "matrix" in data:
        return extrinsic_from_matrix(data["matrix"], where)
    if isinstance(data, dict) and "rotation" in data and "translation" in data:
        rot = data["rotation"]
        trans = data["translation"]
        if not isinstance(rot, list) or len(rot) != 3 or any(not isinstance(r, list) or len(r) != 3 for r in rot):
            raise ParseError(f"{where}: rotation must be a 3x3 array")
        if not isinstance(trans, list) or len(trans) != 3:
            raise ParseError(f"{where}: translation must have 3 entries")
        flat = [t[0] if isinstance(t, list) and len(t) == 1 else t for t in trans]
        r = np.array([[_number(v, f"{where}.rotation") for v in row] for row in rot])
        t = np.array([_number(v, f"{where}.translation") for v in flat])
        return _rigid(r, t, where)
    return extrinsic_from_matrix(data, where)


def save_extrinsic(t: RigidTransform, path):
    write_text(path, dumps(t.matrix().tolist()))


# DAIR-V2X label types -> our categories.
_DAIR_TYPES = {
    "car": "car",
    "van": "van",
    "truck": "truck",
    "bus": "bus",
    "pedestrian": "pedestrian",
    "cyclist": "cyclist",
    "motorcyclist": "cyclist",
    "tricyclist": "cyclist",
}


def load_dair_v2x_labels(path, frame_id: Optional[str] = None) -> Scene:
    """Read a DAIR-V2X LiDAR label file.

    Mapping: ``3d_location`` -> center, ``3d_dimensions`` (h, w, l) ->
    size (l, w, h), ``rotation`` -> yaw. Axis and yaw-sign conventions differ
    between dataset releases; check a few frames visually before trusting it.
    """
    data = read_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a JSON array of labels")
    boxes = []
    for k, obj in enumerate(data):
        where = f"{path}: label {k}"
        try:
            loc = obj["3d_location"]
            dim = obj["3d_dimensions"]
            kind = str(obj["type"]).strip().lower()
            box = {
                "category": _DAIR_TYPES.get(kind, "other"),
                "center": [float(loc["x"]), float(loc["y"]), float(loc["z"])],
                "size": [float(dim["l"]), float(dim["w"]), float(dim["h"])],
                "yaw": float(obj["rotation"]),
            }
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{where}: missing or malformed field ({exc})") from exc
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from exc
        if "score" in obj:
            box["confidence"] = float(obj["score"])
        boxes.append(box_from_dict(box, where))
    return Scene(boxes, frame_id if frame_id is not None else Path(path).stem)


def save_dataset(records, out_dir, header: Optional[dict] = None):
    """Write scene/extrinsic triples plus a manifest into ``out_dir``."""
    out = Path(out_dir)
    pairs = []
    for k, rec in enumerate(records):
        fid = rec.frame_id or f"{k:05d}"
        entry = {"id": fid, "infra": f"{fid}_inf.json", "vehicle": f"{fid}_veh.json"}
        save_scene(rec.scene_inf, out / entry["infra"])
        save_scene(rec.scene_veh, out / entry["vehicle"])
        if rec.gt_extrinsic is not None:
            entry["gt"] = f"{fid}_gt.json"
            save_extrinsic(rec.gt_extrinsic, out / entry["gt"])
        if rec.difficulty != "unknown":
            entry["difficulty"] = rec.difficulty
        pairs.append(entry)
    manifest = {"format": DATASET_FORMAT, **(header or {}), "pairs": pairs}
    write_text(out / MANIFEST, dumps(manifest))


def load_dataset(root) -> list:
    root = Path(root)
    manifest = read_json(root / MANIFEST)
    if not isinstance(manifest, dict) or not isinstance(manifest.get("pairs"), list):
        raise SchemaError(f"{root / MANIFEST}: manifest needs a 'pairs' array")
    records = []
    for k, entry in enumerate(manifest["pairs"]):
        if not isinstance(entry, dict) or "infra" not in entry or "vehicle" not in entry:
            raise SchemaError(f"{root / MANIFEST}: pair {k} needs 'infra' and 'vehicle'")
        fid = str(entry.get("id", f"{k:05d}"))
        gt = load_extrinsic(root / entry["gt"]) if entry.get("gt") else None
        records.append(
            FramePairRecord(
                load_scene(root / entry["infra"], fid),
                load_scene(root / entry["vehicle"], fid),
                gt,
                entry.get("difficulty", "unknown"),
                fid,
            )
        )
    return records


def export_report(report: BenchmarkReport, path, timings: bool = True):
    if not timings:
        report = report.without_timing()
    write_text(path, dumps(report.to_dict()))


def load_report(path) -> BenchmarkReport:
    data = read_json(path)
    try:
        return BenchmarkReport.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: not a benchmark report ({exc})") from exc


def export_merged_geometry(result, scene_inf: Scene, scene_veh: Scene, path):
    """Vehicle boxes plus infrastructure boxes mapped by ``result.extrinsic`` as PLY."""
    extrinsic = result.extrinsic if hasattr(result, "extrinsic") else result
    if extrinsic is None:
        raise ValueError("result has no extrinsic to export")
    blocks = [(box_vertices(b), 0) for b in scene_veh.boxes]
    blocks += [(box_vertices(apply_transform(extrinsic, b)), 1) for b in scene_inf.boxes]
    lines = [
        "ply",
        "format ascii 1.0",
        "comment vehicle boxes (source 0) and transformed infrastructure boxes (source 1)",
        f"element vertex {8 * len(blocks)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar source",
        f"element face {6 * len(blocks)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for verts, label in blocks:
        lines.extend(f"{x!r} {y!r} {z!r} {label}" for x, y, z in verts.tolist())
    for k in range(len(blocks)):
        for face in FACE_CORNERS:
            idx = " ".join(str(8 * k + int(v)) for v in face)
            lines.append(f"4 {idx}")
    write_text(path, "\n".join(lines) + "\n")


def read_ply(path):
    """Minimal reader for files written by :func:`export_merged_geometry`."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    n_vert = n_face = 0
    k = 0
    while lines[k] != "end_header":
        parts = lines[k].split()
        if parts[:2] == ["element", "vertex"]:
            n_vert = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_face = int(parts[2])
        k += 1
    body = lines[k + 1 :]
    verts = np.array([[float(v) for v in ln.split()[:3]] for ln in body[:n_vert]]).reshape(-1, 3)
    labels = np.array([int(ln.split()[3]) for ln in body[:n_vert]], dtype=int)
    faces = np.array([[int(v) for v in ln.split()[1:]] for ln in body[n_vert : n_vert + n_face]], dtype=int)
    return verts, labels, faces.reshape(-1, 4)
