"""Average precision at temporal IoU thresholds for verb, noun and action tasks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GroundTruth, Segment, segment_iou
from .fusion import TASKS, Detection

DEFAULT_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5)


def match_detections(dets: list[Segment], gts: list[Segment], tiou: float) -> list[bool]:
    """Greedy matching; ``dets`` must already be in descending score order."""
    matched = [False] * len(gts)
    flags = []
    for d in dets:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if matched[j]:
                continue
            iou = segment_iou(d, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= tiou:
            matched[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags, num_gt: int) -> float:
    """Sum of precision at each true positive, divided by ``num_gt``."""
    if num_gt <= 0:
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    precision = tp / np.arange(1, flags.size + 1)
    return float(precision[flags].sum() / num_gt)


def class_key(task: str, verb_id: int | None, noun_id: int | None, num_nouns: int) -> int:
    if task == "verb":
        return verb_id
    if task == "noun":
        return noun_id
    return verb_id * num_nouns + noun_id


@dataclass
class TaskResult:
    thresholds: tuple[float, ...]
    mAP: list[float]
    per_class_ap: dict[int, list[float]] = field(default_factory=dict)

    @property
    def average(self) -> float:
        return float(np.mean(self.mAP)) if self.mAP else 0.0


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    tasks: dict[str, TaskResult]

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "tasks": {
                name: {
                    "mAP": {f"{t:.1f}": r.mAP[i] for i, t in enumerate(self.thresholds)},
                    "avg": r.average,
                    "per_class_ap": {str(k): v for k, v in sorted(r.per_class_ap.items())},
                }
                for name, r in self.tasks.items()
            },
        }

    def format_table(self) -> str:
        head = "Task    | " + " ".join(f"@{t:<5.1f}" for t in self.thresholds) + " | Avg"
        lines = [head, "-" * len(head)]
        for name, r in self.tasks.items():
            cells = " ".join(f"{100 * v:6.2f}" for v in r.mAP)
            lines.append(f"{name:<7} | {cells} | {100 * r.average:6.2f}")
        return "\n".join(lines)


def _gt_by_class(task: str, gts: list[GroundTruth], num_nouns: int) -> dict[int, dict[str, list[Segment]]]:
    out: dict[int, dict[str, list[Segment]]] = {}
    for g in gts:
        for e in g.entries:
            k = class_key(task, e.verb_id, e.noun_id, num_nouns)
            out.setdefault(k, {}).setdefault(g.video_id, []).append(e.segment)
    return out


def _check_ids(dets: list[Detection], num_verbs: int, num_nouns: int) -> None:
    for d in dets:
        if d.verb_id is not None and not 0 <= d.verb_id < num_verbs:
            raise ValueError(f"{d.video_id}: detection verb id {d.verb_id} outside [0, {num_verbs})")
        if d.noun_id is not None and not 0 <= d.noun_id < num_nouns:
            raise ValueError(f"{d.video_id}: detection noun id {d.noun_id} outside [0, {num_nouns})")


def evaluate_task(
    task: str,
    dets: list[Detection],
    gts: list[GroundTruth],
    num_verbs: int,
    num_nouns: int,
    thresholds=DEFAULT_THRESHOLDS,
) -> TaskResult:
    _check_ids(dets, num_verbs, num_nouns)
    for d in dets:
        if d.task != task:
            raise ValueError(f"{task} evaluation received a {d.task} detection")
    gt_cls = _gt_by_class(task, gts, num_nouns)
    det_cls: dict[int, list[Detection]] = {}
    for d in dets:
        det_cls.setdefault(class_key(task, d.verb_id, d.noun_id, num_nouns), []).append(d)

    per_class: dict[int, list[float]] = {}
    for k, by_video in gt_cls.items():
        cand = det_cls.get(k, [])
        # stable: equal scores keep input order
        cand = sorted(cand, key=lambda d: -d.score)
        num_gt = sum(len(v) for v in by_video.values())
        aps = []
        for t in thresholds:
            flags = _match_across_videos(cand, by_video, t)
            aps.append(average_precision(flags, num_gt))
        per_class[k] = aps
    mAP = [
        float(np.mean([aps[i] for aps in per_class.values()])) if per_class else 0.0
        for i in range(len(thresholds))
    ]
    return TaskResult(tuple(thresholds), mAP, per_class)


def _match_across_videos(cand: list[Detection], by_video: dict[str, list[Segment]], tiou: float) -> list[bool]:
    # matching is independent per video; only the global order matters for AP
    per_video: dict[str, list[int]] = {}
    for i, d in enumerate(cand):
        per_video.setdefault(d.video_id, []).append(i)
    flags = [False] * len(cand)
    for vid, idx in per_video.items():
        gts = by_video.get(vid, [])
        for i, f in zip(idx, match_detections([cand[i].segment for i in idx], gts, tiou)):
            flags[i] = f
    return flags


def evaluate(
    dets_by_task: dict[str, list[Detection]],
    gts: list[GroundTruth],
    num_verbs: int,
    num_nouns: int,
    thresholds=DEFAULT_THRESHOLDS,
) -> EvalReport:
    for g in gts:
        g.validate_classes(num_verbs, num_nouns)
    tasks = {}
    for task in TASKS:
        if task in dets_by_task:
            tasks[task] = evaluate_task(task, dets_by_task[task], gts, num_verbs, num_nouns, thresholds)
    unknown = set(dets_by_task) - set(TASKS)
    if unknown:
        raise ValueError(f"unknown task(s): {sorted(unknown)}")
    return EvalReport(tuple(thresholds), tasks)
