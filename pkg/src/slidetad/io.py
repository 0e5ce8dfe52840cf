"""Binary feature files and JSON annotation / detection / manifest documents."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import ClipFeatureSequence, GroundTruth, GTEntry, Segment, TimeBase
from .fusion import TASKS, Detection

FEATURE_MAGIC = b"TADF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4s5I")


class FormatError(ValueError):
    """A file or document does not match its expected layout."""


# ---------------------------------------------------------------------------
# feature files


def feature_bytes(seq: ClipFeatureSequence) -> bytes:
    head = _HEADER.pack(
        FEATURE_MAGIC, FEATURE_VERSION, seq.num_clips, seq.feature_dim, seq.num_verbs, seq.num_nouns
    )
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes()
        for a in (seq.features, seq.verb_scores, seq.noun_scores)
    )
    return head + body


def parse_feature_bytes(
    data: bytes, video_id: str = "", tb: TimeBase = TimeBase(), source: str = "<bytes>"
) -> ClipFeatureSequence:
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: header needs {_HEADER.size} bytes, file has {len(data)}")
    magic, version, n, c, v, nn = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at byte 0, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{source}: unsupported version {version} at byte 4")
    for name, val, off in (("N", n, 8), ("C", c, 12), ("V", v, 16), ("Nn", nn, 20)):
        if val < 1:
            raise FormatError(f"{source}: header field {name} at byte {off} is {val}, must be >= 1")
    expected = 4 * n * (c + v + nn)
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise FormatError(
            f"{source}: payload is {actual} bytes, header (N={n}, C={c}, V={v}, Nn={nn}) "
            f"requires {expected}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    feats = arr[: n * c].reshape(n, c)
    verbs = arr[n * c: n * (c + v)].reshape(n, v)
    nouns = arr[n * (c + v):].reshape(n, nn)
    try:
        return ClipFeatureSequence(video_id, feats, verbs, nouns, tb)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def write_feature_file(path: str | Path, seq: ClipFeatureSequence) -> None:
    Path(path).write_bytes(feature_bytes(seq))


def read_feature_file(path: str | Path, video_id: str | None = None, tb: TimeBase = TimeBase()) -> ClipFeatureSequence:
    path = Path(path)
    return parse_feature_bytes(path.read_bytes(), video_id or path.stem, tb, str(path))


# ---------------------------------------------------------------------------
# JSON documents


def _require(doc: dict, key: str, kind, where: str):
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise FormatError(f"{where}: missing field {key!r}")
    val = doc[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise FormatError(f"{where}: field {key!r} must be {kind.__name__}, got {type(val).__name__}")
    return val


def annotation_to_doc(gt: GroundTruth) -> dict:
    return {
        "video_id": gt.video_id,
        "duration_s": gt.duration_s,
        "entries": [
            {"start_s": e.segment.start_s, "end_s": e.segment.end_s, "verb_id": e.verb_id, "noun_id": e.noun_id}
            for e in gt.entries
        ],
    }


def annotation_from_doc(doc: dict) -> GroundTruth:
    vid = _require(doc, "video_id", str, "annotation")
    where = f"annotation {vid}"
    duration = _require(doc, "duration_s", float, where)
    entries = []
    for i, e in enumerate(_require(doc, "entries", list, where)):
        w = f"{where} entries[{i}]"
        try:
            seg = Segment(_require(e, "start_s", float, w), _require(e, "end_s", float, w))
        except ValueError as exc:
            raise FormatError(f"{w}: {exc}") from exc
        entries.append(GTEntry(seg, _require(e, "verb_id", int, w), _require(e, "noun_id", int, w)))
    try:
        return GroundTruth(vid, tuple(entries), duration)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def detections_to_doc(video_id: str, task: str, dets: list[Detection]) -> dict:
    entries = []
    for d in dets:
        e = {"start_s": d.segment.start_s, "end_s": d.segment.end_s}
        if d.verb_id is not None:
            e["verb_id"] = d.verb_id
        if d.noun_id is not None:
            e["noun_id"] = d.noun_id
        e["score"] = d.score
        entries.append(e)
    return {"video_id": video_id, "task": task, "entries": entries}


def detections_from_doc(doc: dict) -> list[Detection]:
    vid = _require(doc, "video_id", str, "detections")
    task = _require(doc, "task", str, f"detections {vid}")
    if task not in TASKS:
        raise FormatError(f"detections {vid}: unknown task {task!r}")
    out = []
    for i, e in enumerate(_require(doc, "entries", list, f"detections {vid}")):
        w = f"detections {vid} entries[{i}]"
        verb = _require(e, "verb_id", int, w) if task in ("verb", "action") else None
        noun = _require(e, "noun_id", int, w) if task in ("noun", "action") else None
        try:
            seg = Segment(_require(e, "start_s", float, w), _require(e, "end_s", float, w))
        except ValueError as exc:
            raise FormatError(f"{w}: {exc}") from exc
        out.append(Detection(vid, seg, task, _require(e, "score", float, w), verb, noun))
    return out


def dump_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def load_json(path: str | Path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def write_annotations(path: str | Path, gts: list[GroundTruth]) -> None:
    dump_json(path, [annotation_to_doc(g) for g in gts])


def read_annotations(path: str | Path) -> list[GroundTruth]:
    docs = load_json(path)
    if not isinstance(docs, list):
        raise FormatError(f"{path}: expected a list of annotation documents")
    return [annotation_from_doc(d) for d in docs]


def write_detections(path: str | Path, task: str, per_video: dict[str, list[Detection]]) -> None:
    dump_json(path, [detections_to_doc(vid, task, dets) for vid, dets in per_video.items()])


def read_detections(path: str | Path) -> list[Detection]:
    docs = load_json(path)
    if not isinstance(docs, list):
        raise FormatError(f"{path}: expected a list of detection documents")
    return [d for doc in docs for d in detections_from_doc(doc)]


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path: str | Path, split: str, seqs: list[ClipFeatureSequence], feature_paths: list[str],
                   annotations: str) -> None:
    tb = seqs[0].timebase
    dump_json(path, {
        "split": split,
        "timebase": {"fps": tb.fps, "clip_stride_frames": tb.clip_stride_frames},
        "feature_dim": seqs[0].feature_dim,
        "num_verbs": seqs[0].num_verbs,
        "num_nouns": seqs[0].num_nouns,
        "annotations": annotations,
        "videos": [
            {"video_id": s.video_id, "num_clips": s.num_clips, "duration_s": s.duration_s, "features": p}
            for s, p in zip(seqs, feature_paths)
        ],
    })


class Manifest:
    """A split's video list; relative paths resolve against the manifest's directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        doc = load_json(self.path)
        where = str(self.path)
        tbd = _require(doc, "timebase", dict, where)
        self.timebase = TimeBase(_require(tbd, "fps", float, where), _require(tbd, "clip_stride_frames", int, where))
        self.split = doc.get("split", "")
        self.feature_dim = _require(doc, "feature_dim", int, where)
        self.num_verbs = _require(doc, "num_verbs", int, where)
        self.num_nouns = _require(doc, "num_nouns", int, where)
        self.annotations = doc.get("annotations")
        self.videos = []
        for i, v in enumerate(_require(doc, "videos", list, where)):
            w = f"{where} videos[{i}]"
            self.videos.append((_require(v, "video_id", str, w), _require(v, "features", str, w)))

    def resolve(self, rel: str) -> Path:
        return self.path.parent / rel

    def load(self, video_id: str, rel: str) -> ClipFeatureSequence:
        seq = read_feature_file(self.resolve(rel), video_id, self.timebase)
        if seq.feature_dim != self.feature_dim:
            raise FormatError(
                f"{rel}: feature_dim {seq.feature_dim} disagrees with manifest feature_dim {self.feature_dim}"
            )
        return seq

    def sequences(self):
        for vid, rel in self.videos:
            yield self.load(vid, rel)

    def ground_truth(self) -> list[GroundTruth]:
        if not self.annotations:
            raise FormatError(f"{self.path}: manifest names no annotation file")
        return read_annotations(self.resolve(self.annotations))
