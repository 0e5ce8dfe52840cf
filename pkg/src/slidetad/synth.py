"""Synthetic untrimmed videos with planted action segments.

Segment durations follow a log-normal truncated to [min, max] whose spread is
solved so that a configured fraction of segments (98% by default) is shorter
than 20 s. Features are Gaussian background with an additive verb motif and
noun motif over active clips; clip scores are a softmax of noisy logits peaked
at the active class.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .core import ClipFeatureSequence, clip_to_seconds, GroundTruth, GTEntry, Segment, TimeBase


_MAX_PACKING_TRIES = 50


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 50
    val_fraction: float = 0.2
    video_mean_s: float = 512.43
    video_spread: float = 0.5
    segment_median_s: float = 5.0
    segment_min_s: float = 1.0
    segment_max_s: float = 26.0
    short_cutoff_s: float = 20.0
    short_fraction: float = 0.98
    segments_per_video: int = 24
    min_gap_s: float = 1.0
    feature_dim: int = 32
    num_verbs: int = 5
    num_nouns: int = 5
    motif_strength: float = 3.0
    feature_noise: float = 1.0
    score_peak: float = 3.0
    score_noise: float = 0.5
    score_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("num_videos", "segments_per_video", "feature_dim", "num_verbs", "num_nouns"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.segment_min_s < self.segment_median_s < self.segment_max_s:
            raise ValueError("need 0 < segment_min_s < segment_median_s < segment_max_s")
        if not self.segment_min_s < self.short_cutoff_s < self.segment_max_s:
            raise ValueError("short_cutoff_s must lie inside the segment duration range")
        if self.segment_max_s >= 26.667:
            raise ValueError(f"segment_max_s ({self.segment_max_s}) must stay below the 26.667 s proposal limit")
        if not 0 <= self.video_spread < 1:
            raise ValueError("video_spread must be in [0, 1)")
        if self.score_temperature < 0:
            raise ValueError("score_temperature must be >= 0")
        shortest = self.video_mean_s * (1 - self.video_spread)
        need = 1.5 * self.segments_per_video * self.segment_median_s + (self.segments_per_video + 1) * self.min_gap_s
        if need > shortest:
            raise ValueError(
                f"cannot pack {self.segments_per_video} segments into a {shortest:.1f}s video "
                f"(typical packing needs {need:.1f}s)"
            )

    @cached_property
    def log_sigma(self) -> float:
        """Log-normal spread giving ``short_fraction`` of the truncated mass below the cutoff."""
        mu = np.log(self.segment_median_s)
        a, b, c = (np.log(x) - mu for x in (self.segment_min_s, self.segment_max_s, self.short_cutoff_s))

        def frac(sigma):
            lo = norm.cdf(a / sigma)
            return (norm.cdf(c / sigma) - lo) / (norm.cdf(b / sigma) - lo) - self.short_fraction

        return float(brentq(frac, 1e-3, 10.0))


def sample_durations(rng: np.random.Generator, cfg: SynthConfig, n: int) -> np.ndarray:
    mu, sigma = np.log(cfg.segment_median_s), cfg.log_sigma
    lo = norm.cdf((np.log(cfg.segment_min_s) - mu) / sigma)
    hi = norm.cdf((np.log(cfg.segment_max_s) - mu) / sigma)
    u = rng.uniform(lo, hi, size=n)
    return np.exp(mu + sigma * norm.ppf(u))


def make_motifs(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 0x6D6F])
    m = rng.normal(size=(cfg.num_verbs + cfg.num_nouns, cfg.feature_dim))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    return m[:cfg.num_verbs], m[cfg.num_verbs:]


def class_score_rows(
    rng: np.random.Generator, active: np.ndarray, num_classes: int, cfg: SynthConfig
) -> np.ndarray:
    """Softmax rows over noisy logits; ``active`` is -1 for background clips."""
    n = len(active)
    logits = cfg.score_noise * rng.normal(size=(n, num_classes))
    on = active >= 0
    logits[np.flatnonzero(on), active[on]] += cfg.score_peak
    T = cfg.score_temperature
    if np.isinf(T):
        return np.full((n, num_classes), 1.0 / num_classes)
    if T == 0:
        hard = (logits == logits.max(axis=1, keepdims=True)).astype(np.float64)
        return hard / hard.sum(axis=1, keepdims=True)
    z = logits / T
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def generate_video(
    rng: np.random.Generator,
    cfg: SynthConfig,
    video_id: str = "vid_0000",
    tb: TimeBase = TimeBase(),
    motifs: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[ClipFeatureSequence, GroundTruth]:
    if motifs is None:
        motifs = make_motifs(cfg)
    verb_motifs, noun_motifs = motifs
    spc = tb.seconds_per_clip
    lo, hi = 1 - cfg.video_spread, 1 + cfg.video_spread
    num_clips = int(cfg.video_mean_s * rng.uniform(lo, hi) / spc)
    duration = clip_to_seconds(num_clips, tb)

    k = cfg.segments_per_video
    for _ in range(_MAX_PACKING_TRIES):
        durs = sample_durations(rng, cfg, k)
        free = duration - durs.sum() - (k + 1) * cfg.min_gap_s
        if free >= 0:
            break
    else:
        raise ValueError(f"{video_id}: {k} segments do not fit in {duration:.1f}s")
    gaps = np.diff(np.concatenate([[0.0], np.sort(rng.uniform(0, free, size=k)), [free]]))
    verbs = rng.integers(0, cfg.num_verbs, size=k)
    nouns = rng.integers(0, cfg.num_nouns, size=k)

    entries = []
    t = 0.0
    for i in range(k):
        t += cfg.min_gap_s + gaps[i]
        entries.append(GTEntry(Segment(float(t), float(t + durs[i])), int(verbs[i]), int(nouns[i])))
        t += durs[i]

    centers = (np.arange(num_clips) + 0.5) * spc
    active_v = np.full(num_clips, -1)
    active_n = np.full(num_clips, -1)
    for e in entries:
        on = (centers >= e.segment.start_s) & (centers < e.segment.end_s)
        active_v[on] = e.verb_id
        active_n[on] = e.noun_id

    feats = cfg.feature_noise * rng.normal(size=(num_clips, cfg.feature_dim))
    on = active_v >= 0
    feats[on] += cfg.motif_strength * (verb_motifs[active_v[on]] + noun_motifs[active_n[on]])
    verb_scores = class_score_rows(rng, active_v, cfg.num_verbs, cfg)
    noun_scores = class_score_rows(rng, active_n, cfg.num_nouns, cfg)
    seq = ClipFeatureSequence(video_id, feats, verb_scores, noun_scores, tb)
    return seq, GroundTruth(video_id, tuple(entries), float(duration))


def generate_videos(
    cfg: SynthConfig, tb: TimeBase = TimeBase()
) -> list[tuple[ClipFeatureSequence, GroundTruth]]:
    motifs = make_motifs(cfg)
    return [
        generate_video(np.random.default_rng([cfg.seed, i + 1]), cfg, f"vid_{i:04d}", tb, motifs)
        for i in range(cfg.num_videos)
    ]


def split_ids(cfg: SynthConfig) -> tuple[list[str], list[str]]:
    """Last ``val_fraction`` of the videos form the held-out split."""
    n_val = int(round(cfg.num_videos * cfg.val_fraction))
    n_train = cfg.num_videos - n_val
    ids = [f"vid_{i:04d}" for i in range(cfg.num_videos)]
    if n_train < 1:
        raise ValueError(f"num_videos={cfg.num_videos} leaves no training videos")
    if n_val < 1:
        raise ValueError(
            f"num_videos={cfg.num_videos} with val_fraction={cfg.val_fraction} leaves the val split empty"
        )
    return ids[:n_train], ids[n_train:]
