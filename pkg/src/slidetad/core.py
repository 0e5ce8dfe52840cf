"""Shared domain types, time-base arithmetic and temporal IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SIMPLEX_TOL = 1e-5
# rows within this distance of unit sum are left bit-exact
RENORM_TOL = 1e-6


@dataclass(frozen=True)
class TimeBase:
    fps: float = 60.0
    clip_stride_frames: int = 16

    def __post_init__(self) -> None:
        if not self.fps > 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if int(self.clip_stride_frames) != self.clip_stride_frames or self.clip_stride_frames < 1:
            raise ValueError(f"clip_stride_frames must be a positive integer, got {self.clip_stride_frames}")

    @property
    def seconds_per_clip(self) -> float:
        return self.clip_stride_frames / self.fps


def clip_to_seconds(clip_index: int, tb: TimeBase) -> float:
    """Start time of a clip in seconds."""
    if clip_index < 0:
        raise ValueError(f"clip_index must be >= 0, got {clip_index}")
    return clip_index * tb.clip_stride_frames / tb.fps


def num_clips_for_frames(num_frames: int, tb: TimeBase) -> int:
    # the trailing partial clip is dropped
    return int(num_frames) // tb.clip_stride_frames


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.start_s) or not np.isfinite(self.end_s):
            raise ValueError(f"non-finite segment [{self.start_s}, {self.end_s}]")
        if self.start_s < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start_s}")
        if not self.end_s > self.start_s:
            raise ValueError(f"segment end ({self.end_s}) must exceed start ({self.start_s})")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def contains(self, other: Segment) -> bool:
        return self.start_s <= other.start_s and other.end_s <= self.end_s


def segment_iou(a: Segment, b: Segment) -> float:
    inter = max(0.0, min(a.end_s, b.end_s) - max(a.start_s, b.start_s))
    union = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter
    return inter / union


def iou_with_segment(starts: np.ndarray, ends: np.ndarray, seg: Segment) -> np.ndarray:
    """Vectorised ``segment_iou`` of many intervals against one segment.

    Uses the same operation order as ``segment_iou`` so results agree bit for bit.
    """
    inter = np.maximum(0.0, np.minimum(ends, seg.end_s) - np.maximum(starts, seg.start_s))
    union = (ends - starts) + (seg.end_s - seg.start_s) - inter
    return inter / union


def _check_simplex(name: str, rows: np.ndarray) -> np.ndarray:
    if rows.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(rows < 0):
        r = int(np.argwhere(rows < 0)[0, 0])
        raise ValueError(f"{name} row {r} has negative entries")
    sums = rows.sum(axis=1, dtype=np.float64)
    bad = np.abs(sums - 1.0) > SIMPLEX_TOL
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise ValueError(f"{name} row {r} sums to {sums[r]:.8f}, not 1 within {SIMPLEX_TOL}")
    off = np.abs(sums - 1.0) > RENORM_TOL
    if np.any(off):
        rows = rows.astype(np.float64, copy=True)
        rows[off] /= sums[off, None]
    return rows


@dataclass(frozen=True)
class ClipFeatureSequence:
    """Per-video clip features with the verb/noun scores saved alongside them."""

    video_id: str
    features: np.ndarray
    verb_scores: np.ndarray
    noun_scores: np.ndarray
    timebase: TimeBase = field(default_factory=TimeBase)

    def __post_init__(self) -> None:
        feats = np.asarray(self.features)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"features must be N x C with N, C >= 1, got shape {feats.shape}")
        verbs = _check_simplex("verb_scores", np.asarray(self.verb_scores))
        nouns = _check_simplex("noun_scores", np.asarray(self.noun_scores))
        for name, rows in (("verb_scores", verbs), ("noun_scores", nouns)):
            if rows.shape[0] != feats.shape[0]:
                raise ValueError(f"{name} has {rows.shape[0]} rows, features have {feats.shape[0]}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "verb_scores", verbs)
        object.__setattr__(self, "noun_scores", nouns)

    @property
    def num_clips(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_verbs(self) -> int:
        return self.verb_scores.shape[1]

    @property
    def num_nouns(self) -> int:
        return self.noun_scores.shape[1]

    @property
    def duration_s(self) -> float:
        return clip_to_seconds(self.num_clips, self.timebase)


class GTEntry(NamedTuple):
    segment: Segment
    verb_id: int
    noun_id: int


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    entries: tuple[GTEntry, ...] = ()
    duration_s: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(GTEntry(*e) for e in self.entries))
        if self.duration_s is not None:
            for e in self.entries:
                if e.segment.end_s > self.duration_s + 1e-9:
                    raise ValueError(
                        f"{self.video_id}: segment end {e.segment.end_s} beyond duration {self.duration_s}"
                    )

    def validate_classes(self, num_verbs: int, num_nouns: int) -> None:
        for e in self.entries:
            if not 0 <= e.verb_id < num_verbs:
                raise ValueError(f"{self.video_id}: verb id {e.verb_id} outside [0, {num_verbs})")
            if not 0 <= e.noun_id < num_nouns:
                raise ValueError(f"{self.video_id}: noun id {e.noun_id} outside [0, {num_nouns})")
