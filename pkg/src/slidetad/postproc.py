"""Candidate maps to proposals, cross-window pooling and Soft-NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Segment, TimeBase
from .windowing import Window


@dataclass(frozen=True)
class Proposal:
    segment: Segment
    score: float
    source_window: int = 0


@dataclass(frozen=True)
class NmsConfig:
    low_threshold: float = 0.25
    high_threshold: float = 0.9
    alpha: float = 0.4
    max_keep: int = 100
    duration_normalizer: float = 26.667

    def __post_init__(self) -> None:
        if not 0 <= self.low_threshold <= self.high_threshold <= 1:
            raise ValueError(
                f"need 0 <= low_threshold <= high_threshold <= 1, got "
                f"{self.low_threshold}, {self.high_threshold}"
            )
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.max_keep < 1:
            raise ValueError(f"max_keep must be >= 1, got {self.max_keep}")
        if not self.duration_normalizer > 0:
            raise ValueError(f"duration_normalizer must be > 0, got {self.duration_normalizer}")


@dataclass
class ProposalArrays:
    """Column-oriented proposals; the pipeline works on these to avoid
    materialising hundreds of thousands of objects per video."""

    starts: np.ndarray
    ends: np.ndarray
    scores: np.ndarray
    windows: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def empty(cls) -> ProposalArrays:
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_proposals(cls, props: list[Proposal]) -> ProposalArrays:
        if not props:
            return cls.empty()
        return cls(
            np.array([p.segment.start_s for p in props], dtype=np.float64),
            np.array([p.segment.end_s for p in props], dtype=np.float64),
            np.array([p.score for p in props], dtype=np.float64),
            np.array([p.source_window for p in props], dtype=np.int64),
        )

    def to_proposals(self) -> list[Proposal]:
        return [
            Proposal(Segment(float(s), float(e)), float(c), int(w))
            for s, e, c, w in zip(self.starts, self.ends, self.scores, self.windows)
        ]

    def take(self, idx) -> ProposalArrays:
        return ProposalArrays(self.starts[idx], self.ends[idx], self.scores[idx], self.windows[idx])


def score_candidate_arrays(
    cls_map: np.ndarray,
    reg_map: np.ndarray,
    w: Window,
    tb: TimeBase = TimeBase(),
    window_index: int = 0,
    video_end_s: float | None = None,
    score_floor: float = 1e-4,
) -> ProposalArrays:
    if cls_map.shape != reg_map.shape:
        raise ValueError(f"cls map {cls_map.shape} and reg map {reg_map.shape} differ in shape")
    D, L = cls_map.shape
    if L != w.len_clips:
        raise ValueError(f"maps cover {L} clips, window has {w.len_clips}")
    d, s = np.nonzero(s_plus_d_valid(D, L))
    scores = cls_map[d, s] * reg_map[d, s]
    first = w.start_clip + s
    starts = first * tb.clip_stride_frames / tb.fps
    ends = (first + d + 1) * tb.clip_stride_frames / tb.fps
    if video_end_s is not None:
        ends = np.minimum(ends, video_end_s)
    keep = (scores >= score_floor) & (ends > starts)
    return ProposalArrays(
        starts[keep], ends[keep], scores[keep], np.full(int(keep.sum()), window_index, dtype=np.int64)
    )


def s_plus_d_valid(D: int, L: int) -> np.ndarray:
    return np.arange(L)[None, :] + np.arange(D)[:, None] + 1 <= L


def score_candidates(
    cls_map: np.ndarray,
    reg_map: np.ndarray,
    w: Window,
    tb: TimeBase = TimeBase(),
    window_index: int = 0,
    video_end_s: float | None = None,
    score_floor: float = 1e-4,
) -> list[Proposal]:
    """One proposal per valid cell scored by cls * reg, clipped to the video end."""
    arrs = score_candidate_arrays(cls_map, reg_map, w, tb, window_index, video_end_s, score_floor)
    return arrs.to_proposals()


def pool_window_arrays(per_window: list[ProposalArrays]) -> ProposalArrays:
    if not per_window:
        return ProposalArrays.empty()
    cat = ProposalArrays(
        np.concatenate([p.starts for p in per_window]),
        np.concatenate([p.ends for p in per_window]),
        np.concatenate([p.scores for p in per_window]),
        np.concatenate([p.windows for p in per_window]),
    )
    return cat.take(np.argsort(-cat.scores, kind="stable"))


def pool_windows(per_window: list[list[Proposal]]) -> list[Proposal]:
    merged = [p for props in per_window for p in props]
    return sorted(merged, key=lambda p: -p.score)


def soft_nms_arrays(props: ProposalArrays, cfg: NmsConfig = NmsConfig()) -> ProposalArrays:
    """Gaussian Soft-NMS with a duration-adaptive trigger threshold.

    A remaining proposal is decayed by exp(-iou^2 / alpha) only when its IoU with
    the selected one exceeds ``t1 + (t2 - t1) * width / duration_normalizer``,
    where width is the selected proposal's duration.
    """
    order = np.argsort(-props.scores, kind="stable")
    p = props.take(order)
    starts, ends = p.starts, p.ends
    scores = p.scores.astype(np.float64, copy=True)
    live = np.ones(len(scores), dtype=bool)
    work = scores.copy()
    picked, picked_scores = [], []
    t1, t2 = cfg.low_threshold, cfg.high_threshold
    while len(picked) < cfg.max_keep and live.any():
        i = int(np.argmax(work))
        picked.append(i)
        picked_scores.append(scores[i])
        live[i] = False
        work[i] = -np.inf
        s0, e0 = starts[i], ends[i]
        inter = np.maximum(0.0, np.minimum(ends, e0) - np.maximum(starts, s0))
        iou = inter / ((ends - starts) + (e0 - s0) - inter)
        thr = t1 + (t2 - t1) * ((e0 - s0) / cfg.duration_normalizer)
        for k in np.flatnonzero(live & (iou > thr)):
            v = float(iou[k])
            scores[k] = scores[k] * math.exp(-(v * v) / cfg.alpha)
            work[k] = scores[k]
    idx = np.array(picked, dtype=np.int64)
    out = p.take(idx)
    out.scores = np.array(picked_scores, dtype=np.float64)
    return out


def soft_nms(props: list[Proposal], cfg: NmsConfig = NmsConfig()) -> list[Proposal]:
    return soft_nms_arrays(ProposalArrays.from_proposals(props), cfg).to_proposals()
