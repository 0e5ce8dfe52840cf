import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reference_evaluate
from slidetad.core import GroundTruth, GTEntry, Segment
from slidetad.evaluation import (
    DEFAULT_THRESHOLDS,
    average_precision,
    evaluate,
    match_detections,
)
from slidetad.fusion import TASKS, Detection


def test_match_single():
    assert match_detections([Segment(0, 10)], [Segment(2, 10)], 0.5) == [True]  # IoU 0.8


def test_match_iou_06():
    # intersection 6, union 10
    assert match_detections([Segment(0, 8)], [Segment(2, 10)], 0.5) == [True]


def test_match_no_gt():
    assert match_detections([Segment(0, 1)], [], 0.1) == [False]


def test_match_gt_claimed_once():
    assert match_detections([Segment(0, 10), Segment(0, 9)], [Segment(0, 10)], 0.5) == [True, False]


def test_match_prefers_best_unmatched():
    gts = [Segment(0, 4), Segment(0, 10)]
    assert match_detections([Segment(0, 10), Segment(0, 4)], gts, 0.3) == [True, True]


def test_ap_examples():
    assert average_precision([True], 1) == 1.0
    assert average_precision([False, True], 1) == 0.5
    assert average_precision([True, True], 2) == 1.0
    assert average_precision([], 3) == 0.0
    assert average_precision([True], 0) == 0.0


def _perfect(gts):
    out = {t: [] for t in TASKS}
    for g in gts:
        for e in g.entries:
            out["verb"].append(Detection(g.video_id, e.segment, "verb", 1.0, verb_id=e.verb_id))
            out["noun"].append(Detection(g.video_id, e.segment, "noun", 1.0, noun_id=e.noun_id))
            out["action"].append(Detection(g.video_id, e.segment, "action", 1.0, e.verb_id, e.noun_id))
    return out


def _random_instance(rng, n_det=20, n_gt=10, nv=3, nn=3, n_videos=2):
    gts = []
    for v in range(n_videos):
        entries = []
        for _ in range(n_gt // n_videos):
            s = rng.uniform(0, 40)
            entries.append(GTEntry(Segment(s, s + rng.uniform(0.5, 8)), int(rng.integers(nv)), int(rng.integers(nn))))
        gts.append(GroundTruth(f"v{v}", entries))
    dets = {t: [] for t in TASKS}
    for _ in range(n_det):
        vid = f"v{rng.integers(n_videos)}"
        s = rng.uniform(0, 40)
        seg = Segment(s, s + rng.uniform(0.5, 8))
        vi, ni = int(rng.integers(nv)), int(rng.integers(nn))
        # coarse scores force ties
        score = float(rng.integers(0, 6)) / 5
        dets["verb"].append(Detection(vid, seg, "verb", score, verb_id=vi))
        dets["noun"].append(Detection(vid, seg, "noun", score, noun_id=ni))
        dets["action"].append(Detection(vid, seg, "action", score, vi, ni))
    return dets, gts


def _as_tuples(dets, gts):
    d = {
        t: [(x.video_id, x.segment.start_s, x.segment.end_s, x.verb_id, x.noun_id, x.score) for x in v]
        for t, v in dets.items()
    }
    g = [(gt.video_id, e.segment.start_s, e.segment.end_s, e.verb_id, e.noun_id) for gt in gts for e in gt.entries]
    return d, g


def test_perfect_detector():
    rng = np.random.default_rng(0)
    _, gts = _random_instance(rng)
    rep = evaluate(_perfect(gts), gts, 3, 3)
    for r in rep.tasks.values():
        assert r.mAP == [1.0] * 5 and r.average == 1.0


def test_empty_detections():
    rng = np.random.default_rng(0)
    _, gts = _random_instance(rng)
    rep = evaluate({t: [] for t in TASKS}, gts, 3, 3)
    for r in rep.tasks.values():
        assert r.mAP == [0.0] * 5


def test_action_requires_both_ids():
    gts = [GroundTruth("v", [GTEntry(Segment(0, 5), 1, 2)])]
    wrong = {"action": [Detection("v", Segment(0, 5), "action", 1.0, 1, 0)]}
    assert evaluate(wrong, gts, 3, 3).tasks["action"].average == 0.0


def test_unknown_ids_rejected():
    gts = [GroundTruth("v", [GTEntry(Segment(0, 5), 1, 2)])]
    with pytest.raises(ValueError, match="verb id"):
        evaluate({"verb": [Detection("v", Segment(0, 5), "verb", 1.0, verb_id=9)]}, gts, 3, 3)
    with pytest.raises(ValueError, match="noun id"):
        evaluate({"noun": []}, [GroundTruth("v", [GTEntry(Segment(0, 5), 1, 7)])], 3, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_reference_evaluator(seed):
    rng = np.random.default_rng(seed)
    dets, gts = _random_instance(rng)
    rep = evaluate(dets, gts, 3, 3)
    d, g = _as_tuples(dets, gts)
    ref = reference_evaluate(d, g, TASKS, 3, DEFAULT_THRESHOLDS)
    for t in TASKS:
        np.testing.assert_allclose(rep.tasks[t].mAP, ref[t], rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariances(seed):
    rng = np.random.default_rng(seed)
    dets, gts = _random_instance(rng)
    # strictly monotone transform of scores keeps AP
    warped = {
        t: [Detection(x.video_id, x.segment, x.task, np.exp(3 * x.score) - 7, x.verb_id, x.noun_id) for x in v]
        for t, v in dets.items()
    }
    base = evaluate(dets, gts, 3, 3)
    again = evaluate(warped, gts, 3, 3)
    # a top-scoring detection in a video without ground truth is always a false positive
    ghost = {
        "verb": dets["verb"] + [Detection("ghost", Segment(0, 1), "verb", 9.0, verb_id=0)],
        "noun": dets["noun"] + [Detection("ghost", Segment(0, 1), "noun", 9.0, noun_id=0)],
        "action": dets["action"] + [Detection("ghost", Segment(0, 1), "action", 9.0, 0, 0)],
    }
    worse = evaluate(ghost, gts, 3, 3)
    for t in TASKS:
        assert again.tasks[t].mAP == base.tasks[t].mAP
        m = base.tasks[t].mAP
        assert all(a >= b - 1e-12 for a, b in zip(m, m[1:]))
        assert all(x <= y + 1e-12 for x, y in zip(worse.tasks[t].mAP, m))


def test_report_layout():
    rng = np.random.default_rng(3)
    dets, gts = _random_instance(rng)
    rep = evaluate(dets, gts, 3, 3)
    doc = rep.to_dict()
    assert list(doc["tasks"]) == list(TASKS)
    assert list(doc["tasks"]["action"]["mAP"]) == ["0.1", "0.2", "0.3", "0.4", "0.5"]
    assert doc["tasks"]["verb"]["avg"] == pytest.approx(np.mean(list(doc["tasks"]["verb"]["mAP"].values())))
    table = rep.format_table()
    assert "@0.1" in table and "action" in table and "Avg" in table
