"""Attach verb/noun/action labels to proposals from the stored per-clip scores.

Classification never goes through the proposal network: each proposal reads the
clip-level predictions saved during feature extraction at evenly spaced points
inside its span, and the averaged vectors are fused with the proposal score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClipFeatureSequence, Segment, TimeBase
from .postproc import Proposal

TASKS = ("verb", "noun", "action")


@dataclass(frozen=True)
class Detection:
    video_id: str
    segment: Segment
    task: str
    score: float
    verb_id: int | None = None
    noun_id: int | None = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        need_verb = self.task in ("verb", "action")
        need_noun = self.task in ("noun", "action")
        if need_verb != (self.verb_id is not None) or need_noun != (self.noun_id is not None):
            raise ValueError(
                f"{self.task} detection must carry "
                f"{'verb_id ' if need_verb else ''}{'noun_id' if need_noun else ''}".strip()
            )


def sample_indices(segment: Segment, num_clips: int, tb: TimeBase, k_points: int = 10) -> np.ndarray:
    """Clip index under each of ``k_points`` bin-centre sample times."""
    i = np.arange(k_points)
    t = segment.start_s + (i + 0.5) / k_points * (segment.end_s - segment.start_s)
    idx = np.floor(t / tb.seconds_per_clip).astype(np.int64)
    return np.clip(idx, 0, num_clips - 1)


def sample_class_scores(
    clip_scores: np.ndarray, p: Proposal | Segment, tb: TimeBase = TimeBase(), k_points: int = 10
) -> np.ndarray:
    seg = p.segment if isinstance(p, Proposal) else p
    idx = sample_indices(seg, clip_scores.shape[0], tb, k_points)
    clips, counts = np.unique(idx, return_counts=True)
    return (counts / k_points) @ clip_scores[clips]


def make_detections(
    props: list[Proposal],
    seq: ClipFeatureSequence,
    k_points: int = 10,
    max_keep: int = 100,
) -> dict[str, list[Detection]]:
    """Fuse proposal scores with the top-1 verb and noun of each proposal.

    verb: score * max(verb); noun: score * max(noun);
    action: score * max(verb) * max(noun). Ties in argmax go to the lowest id.
    """
    out: dict[str, list[Detection]] = {t: [] for t in TASKS}
    tb = seq.timebase
    for p in props:
        v = sample_class_scores(seq.verb_scores, p, tb, k_points)
        n = sample_class_scores(seq.noun_scores, p, tb, k_points)
        vi, ni = int(np.argmax(v)), int(np.argmax(n))
        vs, ns = float(v[vi]), float(n[ni])
        out["verb"].append(Detection(seq.video_id, p.segment, "verb", p.score * vs, verb_id=vi))
        out["noun"].append(Detection(seq.video_id, p.segment, "noun", p.score * ns, noun_id=ni))
        out["action"].append(
            Detection(seq.video_id, p.segment, "action", p.score * vs * ns, verb_id=vi, noun_id=ni)
        )
    for task, dets in out.items():
        order = sorted(range(len(dets)), key=lambda k: -dets[k].score)[:max_keep]
        out[task] = [dets[k] for k in order]
    return out
