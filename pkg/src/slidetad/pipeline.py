"""End-to-end stages: dataset generation, training, detection and evaluation."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .bmn import BmnModel, ModelParams, compute_giou_map, load_checkpoint, save_checkpoint
from .config import PipelineConfig
from .core import ClipFeatureSequence, GroundTruth
from .evaluation import EvalReport, evaluate
from .fusion import TASKS, Detection, make_detections
from .io import (
    FormatError,
    Manifest,
    detections_from_doc,
    dump_json,
    load_json,
    read_annotations,
    write_annotations,
    write_detections,
    write_feature_file,
    write_manifest,
)
from .optim import TrainResult, train
from .postproc import pool_window_arrays, score_candidate_arrays, soft_nms_arrays
from .synth import generate_videos, split_ids
from .windowing import plan_windows, slice_window

log = logging.getLogger(__name__)


def generate_dataset(cfg: PipelineConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write features, annotations and one manifest per split. Returns manifest paths."""
    train_ids, val_ids = split_ids(cfg.synth)
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    videos = {s.video_id: (s, g) for s, g in generate_videos(cfg.synth, cfg.timebase)}
    manifests = {}
    for split, ids in (("train", train_ids), ("val", val_ids)):
        seqs = [videos[i][0] for i in ids]
        rels = []
        for s in seqs:
            rel = f"features/{s.video_id}.tadf"
            write_feature_file(out / rel, s)
            rels.append(rel)
        ann = f"annotations_{split}.json"
        write_annotations(out / ann, [videos[i][1] for i in ids])
        manifests[split] = out / f"manifest_{split}.json"
        write_manifest(manifests[split], split, seqs, rels, ann)
    return manifests


def training_windows(
    videos: list[tuple[ClipFeatureSequence, GroundTruth]], cfg: PipelineConfig
) -> list[tuple[np.ndarray, np.ndarray]]:
    if not videos:
        raise ValueError("no training videos")
    bcfg = cfg.bmn(videos[0][0].feature_dim)
    out = []
    for seq, gt in videos:
        for w in plan_windows(seq.num_clips, cfg.window):
            x, _, _ = slice_window(seq, w)
            out.append((x, compute_giou_map(w, gt, bcfg, seq.timebase)))
    return out


def train_model(
    videos: list[tuple[ClipFeatureSequence, GroundTruth]], cfg: PipelineConfig, on_record=None
) -> tuple[BmnModel, TrainResult]:
    model = BmnModel(cfg.bmn(videos[0][0].feature_dim))
    data = training_windows(videos, cfg)
    log.info("training on %d windows from %d videos", len(data), len(videos))
    return model, train(model, data, cfg.train, on_record=on_record)


def detect_video(
    model: BmnModel, params: ModelParams, seq: ClipFeatureSequence, cfg: PipelineConfig
) -> dict[str, list[Detection]]:
    if seq.feature_dim != model.cfg.feature_dim:
        raise ValueError(
            f"{seq.video_id}: feature_dim {seq.feature_dim} does not match checkpoint feature_dim "
            f"{model.cfg.feature_dim}"
        )
    per_window = []
    for k, w in enumerate(plan_windows(seq.num_clips, cfg.window)):
        x, _, _ = slice_window(seq, w)
        cls, reg = model.forward(params, x)
        per_window.append(
            score_candidate_arrays(
                cls, reg, w, seq.timebase, k, video_end_s=seq.duration_s, score_floor=cfg.detect.score_floor
            )
        )
    props = soft_nms_arrays(pool_window_arrays(per_window), cfg.nms).to_proposals()
    return make_detections(props, seq, cfg.detect.k_points, cfg.detect.max_keep)


def detect_all(model, params, seqs, cfg) -> dict[str, dict[str, list[Detection]]]:
    """task -> video_id -> detections."""
    out: dict[str, dict[str, list[Detection]]] = {t: {} for t in TASKS}
    for seq in seqs:
        for task, dets in detect_video(model, params, seq, cfg).items():
            out[task][seq.video_id] = dets
    return out


def flatten(per_video: dict[str, list[Detection]]) -> list[Detection]:
    return [d for dets in per_video.values() for d in dets]


def evaluate_detections(
    dets: dict[str, dict[str, list[Detection]]], gts, num_verbs, num_nouns, cfg: PipelineConfig
) -> EvalReport:
    return evaluate({t: flatten(v) for t, v in dets.items()}, gts, num_verbs, num_nouns, cfg.eval.thresholds)


# ---------------------------------------------------------------------------
# file-level stages used by the CLI


def run_train(cfg: PipelineConfig, manifest_path, checkpoint_path, log_path=None) -> TrainResult:
    man = Manifest(manifest_path)
    gts = {g.video_id: g for g in man.ground_truth()}
    videos = []
    for seq in man.sequences():
        if seq.video_id not in gts:
            raise FormatError(f"{man.path}: no annotation for video {seq.video_id}")
        gts[seq.video_id].validate_classes(seq.num_verbs, seq.num_nouns)
        videos.append((seq, gts[seq.video_id]))
    if not videos:
        raise FormatError(f"{man.path}: manifest lists no videos")
    fh = open(log_path, "w") if log_path else None
    try:
        def record(rec):
            if fh:
                fh.write(json.dumps(rec) + "\n")
        model, result = train_model(videos, cfg, on_record=record)
    finally:
        if fh:
            fh.close()
    save_checkpoint(checkpoint_path, result.params, model.cfg)
    return result


def run_detect(cfg: PipelineConfig, checkpoint_path, manifest_path, out_dir) -> dict[str, Path]:
    params, bcfg = load_checkpoint(checkpoint_path)
    man = Manifest(manifest_path)
    if man.feature_dim != bcfg.feature_dim:
        raise ValueError(
            f"manifest feature_dim {man.feature_dim} does not match checkpoint feature_dim {bcfg.feature_dim}"
        )
    if (bcfg.L, bcfg.D) != (cfg.window.window_len_clips, cfg.window.max_duration_clips):
        raise ValueError(
            f"checkpoint was trained with L={bcfg.L}, D={bcfg.D}; config has "
            f"L={cfg.window.window_len_clips}, D={cfg.window.max_duration_clips}"
        )
    model = BmnModel(bcfg)
    dets = detect_all(model, params, list(man.sequences()), cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for task in TASKS:
        paths[task] = out / f"detections_{task}.json"
        write_detections(paths[task], task, dets[task])
    return paths


def run_eval(cfg: PipelineConfig, det_paths: list, annotations_path, num_verbs: int, num_nouns: int,
             out_path=None) -> EvalReport:
    gts = read_annotations(annotations_path)
    by_task: dict[str, list[Detection]] = {}
    for p in det_paths:
        docs = load_json(p)
        if not isinstance(docs, list):
            raise FormatError(f"{p}: expected a list of detection documents")
        for doc in docs:
            dets = detections_from_doc(doc)
            # an empty document still enrolls its task, which then scores 0
            by_task.setdefault(doc["task"], []).extend(dets)
    known = {g.video_id for g in gts}
    for dets in by_task.values():
        for d in dets:
            if d.video_id not in known:
                raise FormatError(f"detection for video {d.video_id!r} has no annotation")
    report = evaluate(by_task, gts, num_verbs, num_nouns, cfg.eval.thresholds)
    if out_path is not None:
        dump_json(out_path, report.to_dict())
    return report
