"""Sliding-window planning over clip sequences and window/video coordinate maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClipFeatureSequence, Segment, TimeBase, clip_to_seconds


@dataclass(frozen=True)
class WindowConfig:
    window_len_clips: int = 200
    stride_clips: int = 100
    max_duration_clips: int = 100

    def __post_init__(self) -> None:
        if self.window_len_clips < 1 or self.stride_clips < 1 or self.max_duration_clips < 1:
            raise ValueError(f"window sizes must be positive: {self}")
        if self.stride_clips > self.window_len_clips:
            raise ValueError(
                f"stride_clips ({self.stride_clips}) exceeds window_len_clips ({self.window_len_clips})"
            )
        if self.max_duration_clips > self.window_len_clips:
            raise ValueError(
                f"max_duration_clips ({self.max_duration_clips}) exceeds window_len_clips ({self.window_len_clips})"
            )

    @property
    def covers_all_segments(self) -> bool:
        """True when every segment up to ``max_duration_clips`` long fits in some window."""
        return self.max_duration_clips <= self.window_len_clips - self.stride_clips


@dataclass(frozen=True)
class Window:
    start_clip: int
    len_clips: int
    pad_clips: int = 0

    def __post_init__(self) -> None:
        if self.start_clip < 0:
            raise ValueError(f"window start must be >= 0, got {self.start_clip}")
        if not 0 <= self.pad_clips < self.len_clips:
            raise ValueError(f"pad_clips must be in [0, {self.len_clips}), got {self.pad_clips}")

    @property
    def end_clip(self) -> int:
        return self.start_clip + self.len_clips

    @property
    def valid_clips(self) -> int:
        return self.len_clips - self.pad_clips

    def span(self, tb: TimeBase) -> Segment:
        return Segment(clip_to_seconds(self.start_clip, tb), clip_to_seconds(self.end_clip, tb))


def plan_windows(num_clips: int, cfg: WindowConfig = WindowConfig()) -> list[Window]:
    """Windows on a uniform grid of ``stride_clips``; the tail window is zero-padded."""
    if num_clips < 1:
        raise ValueError(f"num_clips must be >= 1, got {num_clips}")
    L = cfg.window_len_clips
    windows = []
    for start in range(0, num_clips, cfg.stride_clips):
        windows.append(Window(start, L, max(0, start + L - num_clips)))
    return windows


def slice_window(
    seq: ClipFeatureSequence, w: Window
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Copy the window's rows; padded rows get zero features and uniform scores."""
    if w.start_clip >= seq.num_clips or w.start_clip + w.valid_clips != min(w.end_clip, seq.num_clips):
        raise ValueError(
            f"window (start={w.start_clip}, len={w.len_clips}, pad={w.pad_clips}) "
            f"does not match a sequence of {seq.num_clips} clips"
        )
    L, n = w.len_clips, w.valid_clips
    rows = slice(w.start_clip, w.start_clip + n)
    feats = np.zeros((L, seq.feature_dim), dtype=np.float64)
    feats[:n] = seq.features[rows]
    verbs = np.full((L, seq.num_verbs), 1.0 / seq.num_verbs)
    verbs[:n] = seq.verb_scores[rows]
    nouns = np.full((L, seq.num_nouns), 1.0 / seq.num_nouns)
    nouns[:n] = seq.noun_scores[rows]
    return feats, verbs, nouns


def localize(w: Window, start_idx: int, duration_clips: int, tb: TimeBase) -> Segment:
    """Map a window-local candidate (start, duration in clips) to video seconds."""
    if start_idx < 0 or duration_clips < 1 or start_idx + duration_clips > w.len_clips:
        raise ValueError(
            f"candidate (start={start_idx}, duration={duration_clips}) exceeds window length {w.len_clips}"
        )
    first = w.start_clip + start_idx
    return Segment(clip_to_seconds(first, tb), clip_to_seconds(first + duration_clips, tb))


def to_local(w: Window, seg: Segment, tb: TimeBase) -> tuple[int, int]:
    """Inverse of ``localize`` for grid-aligned segments inside the window."""
    spc = tb.seconds_per_clip
    first = int(round(seg.start_s / spc))
    last = int(round(seg.end_s / spc))
    start_idx = first - w.start_clip
    duration = last - first
    if start_idx < 0 or duration < 1 or start_idx + duration > w.len_clips:
        raise ValueError(f"segment {seg} is not inside window starting at clip {w.start_clip}")
    return start_idx, duration


def containing_windows(seg: Segment, windows: list[Window], tb: TimeBase) -> list[int]:
    """Indices of windows whose time span fully contains ``seg``."""
    spc = tb.seconds_per_clip
    out = []
    for i, w in enumerate(windows):
        # compare on the clip grid to avoid rounding at shared boundaries
        if w.start_clip <= seg.start_s / spc + 1e-9 and seg.end_s / spc <= w.end_clip + 1e-9:
            out.append(i)
    return out


def max_overlap_count(cfg: WindowConfig) -> int:
    return math.ceil(cfg.window_len_clips / cfg.stride_clips)
