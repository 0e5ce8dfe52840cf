"""Desk-scale boundary-matching proposal evaluator.

The network keeps only the proposal-evaluation branch: a two-layer temporal
convolution base, the boundary-matching contraction that turns a clip sequence
into one feature per (duration, start) candidate, a 3x3 convolution over the
candidate map, and two logistic heads (classification and regression maps).
Gradients are derived by hand; no autodiff framework is involved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .core import GroundTruth, TimeBase, clip_to_seconds
from .windowing import Window


@dataclass(frozen=True)
class BmnConfig:
    L: int = 200
    D: int = 100
    num_samples: int = 32
    feature_dim: int = 32
    base_hidden: int = 16
    hidden: int = 8
    map_hidden: int = 8
    pos_threshold: float = 0.9
    neg_threshold: float = 0.3

    def __post_init__(self) -> None:
        if not 1 <= self.D <= self.L:
            raise ValueError(f"need 1 <= D <= L, got D={self.D}, L={self.L}")
        if self.num_samples < 2:
            raise ValueError(f"num_samples must be >= 2, got {self.num_samples}")
        for name in ("feature_dim", "base_hidden", "hidden", "map_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def validity_mask(self) -> np.ndarray:
        d = np.arange(self.D)[:, None]
        s = np.arange(self.L)[None, :]
        return s + d + 1 <= self.L


# ---------------------------------------------------------------------------
# boundary-matching sampling weights


@dataclass(frozen=True)
class SamplingWeights:
    """Interpolation weights of shape (D, L, Ns, L), stored as a sparse
    (D*L*Ns, L) matrix since each row has at most two nonzeros."""

    matrix: sp.csr_matrix
    D: int
    L: int
    num_samples: int
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.D, self.L, self.num_samples, self.L)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray().reshape(self.shape)

    def mean_over_samples(self) -> sp.csr_matrix:
        """(D*L, L) matrix equal to the sample-axis mean of the weights."""
        n = self.D * self.L
        ns = self.num_samples
        avg = sp.kron(sp.identity(n, format="csr"), np.full((1, ns), 1.0 / ns), format="csr")
        return (avg @ self.matrix).tocsr()


def sample_points(s: int, dur: int, num_samples: int) -> np.ndarray:
    return s + np.arange(num_samples) * (dur / (num_samples - 1))


def build_sampling_weights(cfg: BmnConfig) -> SamplingWeights:
    L, D, ns = cfg.L, cfg.D, cfg.num_samples
    mask = cfg.validity_mask()
    d_idx, s_idx = np.nonzero(mask)
    dur = (d_idx + 1).astype(np.float64)
    j = np.arange(ns, dtype=np.float64)
    # (num_valid, ns) continuous sample positions
    pts = s_idx[:, None] + j[None, :] * (dur[:, None] / (ns - 1))
    lo = np.floor(pts).astype(np.int64)
    frac = pts - lo
    at_end = lo >= L
    lo[at_end] = L - 1
    frac[at_end] = 0.0
    hi = np.minimum(lo + 1, L - 1)
    rows = ((d_idx * L + s_idx)[:, None] * ns + j[None, :].astype(np.int64))
    rows = np.broadcast_to(rows, pts.shape)
    w_lo = 1.0 - frac
    w_hi = frac
    keep_hi = w_hi > 0
    r = np.concatenate([rows.ravel(), rows[keep_hi]])
    c = np.concatenate([lo.ravel(), hi[keep_hi]])
    v = np.concatenate([w_lo.ravel(), w_hi[keep_hi]])
    nz = v != 0
    matrix = sp.csr_matrix((v[nz], (r[nz], c[nz])), shape=(D * L * ns, L))
    matrix.sum_duplicates()
    return SamplingWeights(matrix, D, L, ns, mask)


def candidate_features(weights: SamplingWeights, hidden: np.ndarray) -> np.ndarray:
    """Boundary-matching contraction: (L, H) sequence -> (D, L, Ns, H) candidate features."""
    out = weights.matrix @ hidden
    return np.asarray(out).reshape(weights.D, weights.L, weights.num_samples, hidden.shape[1])


# ---------------------------------------------------------------------------
# parameters

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "wc", "bc", "wr", "br")


@dataclass
class ModelParams:
    w1: np.ndarray  # (3, C, H1)
    b1: np.ndarray  # (H1,)
    w2: np.ndarray  # (3, H1, H)
    b2: np.ndarray  # (H,)
    w3: np.ndarray  # (3, 3, H, M)
    b3: np.ndarray  # (M,)
    wc: np.ndarray  # (M,)
    bc: np.ndarray  # (1,)
    wr: np.ndarray  # (M,)
    br: np.ndarray  # (1,)

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self) -> ModelParams:
        return ModelParams(**{k: v.copy() for k, v in self.blocks()})

    def zeros_like(self) -> ModelParams:
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.blocks()})

    def num_parameters(self) -> int:
        return sum(v.size for _, v in self.blocks())


def param_shapes(cfg: BmnConfig) -> dict[str, tuple[int, ...]]:
    C, H1, H, M = cfg.feature_dim, cfg.base_hidden, cfg.hidden, cfg.map_hidden
    return {
        "w1": (3, C, H1), "b1": (H1,),
        "w2": (3, H1, H), "b2": (H,),
        "w3": (3, 3, H, M), "b3": (M,),
        "wc": (M,), "bc": (1,),
        "wr": (M,), "br": (1,),
    }


def init_params(cfg: BmnConfig, seed: int = 0) -> ModelParams:
    """Fan-in scaled centred uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in param_shapes(cfg).items():
        if name.startswith("b"):
            out[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        out[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(**out)


def check_params(params: ModelParams, cfg: BmnConfig) -> None:
    for name, shape in param_shapes(cfg).items():
        got = getattr(params, name).shape
        if got != shape:
            raise ValueError(f"parameter {name} has shape {got}, config expects {shape}")


# ---------------------------------------------------------------------------
# forward / backward


def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((1, 1), (0, 0)))
    return xp[:-2] @ w[0] + xp[1:-1] @ w[1] + xp[2:] @ w[2] + b


def _conv1d_backward(x: np.ndarray, w: np.ndarray, dz: np.ndarray):
    xp = np.pad(x, ((1, 1), (0, 0)))
    dw = np.stack([xp[:-2].T @ dz, xp[1:-1].T @ dz, xp[2:].T @ dz])
    db = dz.sum(axis=0)
    dzp = np.pad(dz, ((1, 1), (0, 0)))
    # output t reads x[t-1+k] through w[k]
    dx = dzp[2:] @ w[0].T + dzp[1:-1] @ w[1].T + dzp[:-2] @ w[2].T
    return dx, dw, db


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 same-size convolution over the (D, L) grid; x is (D, L, H), w is (3, 3, H, M)."""
    D, L, H = x.shape
    M = w.shape[-1]
    # project once, then add the nine shifted taps
    y = (x.reshape(-1, H) @ w.transpose(2, 0, 1, 3).reshape(H, 9 * M)).reshape(D, L, 3, 3, M)
    z = np.empty((D, L, M))
    z[:] = b
    for a in range(3):
        for c in range(3):
            # output (d, s) reads input (d + a - 1, s + c - 1)
            od, id_ = _shift(a, D)
            os_, is_ = _shift(c, L)
            z[od, os_] += y[id_, is_, a, c]
    return z


def _conv2d_backward(x: np.ndarray, w: np.ndarray, dz: np.ndarray):
    D, L, H = x.shape
    M = w.shape[-1]
    dy = np.zeros((D, L, 3, 3, M))
    for a in range(3):
        for c in range(3):
            od, id_ = _shift(a, D)
            os_, is_ = _shift(c, L)
            dy[id_, is_, a, c] = dz[od, os_]
    dy = dy.reshape(D * L, 9 * M)
    wr = w.transpose(2, 0, 1, 3).reshape(H, 9 * M)
    dw = (x.reshape(-1, H).T @ dy).reshape(H, 3, 3, M).transpose(1, 2, 0, 3)
    dx = (dy @ wr.T).reshape(D, L, H)
    return dx, dw, dz.sum(axis=(0, 1))


def _shift(k: int, n: int) -> tuple[slice, slice]:
    """(output slice, input slice) for tap k of a same-padded width-3 kernel."""
    if k == 0:
        return slice(1, n), slice(0, n - 1)
    if k == 1:
        return slice(0, n), slice(0, n)
    return slice(0, n - 1), slice(1, n)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class BmnModel:
    """Binds a config to its precomputed sampling matrices."""

    def __init__(self, cfg: BmnConfig):
        self.cfg = cfg
        self.weights = build_sampling_weights(cfg)
        self.mean_weights = self.weights.mean_over_samples()
        self.mean_weights_T = self.mean_weights.T.tocsr()
        self.mask = self.weights.mask

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape != (self.cfg.L, self.cfg.feature_dim):
            raise ValueError(
                f"window features have shape {x.shape}, model expects ({self.cfg.L}, {self.cfg.feature_dim})"
            )

    def forward(self, params: ModelParams, x: np.ndarray, cache: dict | None = None):
        """Return (cls_map, reg_map), each D x L with invalid cells set to 0."""
        self._check_input(x)
        cfg = self.cfg
        z1 = _conv1d(x, params.w1, params.b1)
        a1 = np.maximum(z1, 0.0)
        z2 = _conv1d(a1, params.w2, params.b2)
        a2 = np.maximum(z2, 0.0)
        # sample-axis mean folded into the contraction matrix
        feat = np.asarray(self.mean_weights @ a2).reshape(cfg.D, cfg.L, cfg.hidden)
        z3 = _conv2d(feat, params.w3, params.b3).reshape(-1, cfg.map_hidden)
        a3 = np.maximum(z3, 0.0)
        cls = _sigmoid(a3 @ params.wc + params.bc[0]).reshape(cfg.D, cfg.L)
        reg = _sigmoid(a3 @ params.wr + params.br[0]).reshape(cfg.D, cfg.L)
        cls = np.where(self.mask, cls, 0.0)
        reg = np.where(self.mask, reg, 0.0)
        if cache is not None:
            cache.update(x=x, z1=z1, a1=a1, z2=z2, a2=a2, feat=feat, z3=z3, a3=a3, cls=cls, reg=reg)
        return cls, reg

    def loss(self, cls: np.ndarray, reg: np.ndarray, giou: np.ndarray, lam: float = 1.0):
        """Return (loss, dL/dcls, dL/dreg) on valid cells."""
        return pem_loss(cls, reg, giou, self.mask, lam, self.cfg.pos_threshold, self.cfg.neg_threshold)

    def loss_and_grad(self, params: ModelParams, x: np.ndarray, giou: np.ndarray, lam: float = 1.0):
        cfg = self.cfg
        if giou.shape != (cfg.D, cfg.L):
            raise ValueError(f"gIoU map has shape {giou.shape}, expected ({cfg.D}, {cfg.L})")
        cache: dict = {}
        cls, reg = self.forward(params, x, cache)
        loss, dcls, dreg = self.loss(cls, reg, giou, lam)

        # through the logistic heads (mask already zeroes invalid cells)
        dzc = (dcls * cls * (1.0 - cls)).ravel()
        dzr = (dreg * reg * (1.0 - reg)).ravel()
        a3 = cache["a3"]
        g = {
            "wc": a3.T @ dzc, "bc": np.array([dzc.sum()]),
            "wr": a3.T @ dzr, "br": np.array([dzr.sum()]),
        }
        da3 = np.outer(dzc, params.wc) + np.outer(dzr, params.wr)
        dz3 = da3 * (cache["z3"] > 0)
        dfeat, g["w3"], g["b3"] = _conv2d_backward(
            cache["feat"], params.w3, dz3.reshape(cfg.D, cfg.L, cfg.map_hidden)
        )
        dfeat = dfeat.reshape(cfg.D * cfg.L, cfg.hidden)
        da2 = np.asarray(self.mean_weights_T @ dfeat)
        dz2 = da2 * (cache["z2"] > 0)
        da1, g["w2"], g["b2"] = _conv1d_backward(cache["a1"], params.w2, dz2)
        dz1 = da1 * (cache["z1"] > 0)
        _, g["w1"], g["b1"] = _conv1d_backward(x, params.w1, dz1)
        return loss, ModelParams(**g)


def pem_loss(cls, reg, giou, mask, lam=1.0, pos_threshold=0.9, neg_threshold=0.3):
    """Regression MSE plus balanced binary cross-entropy over valid cells.

    Positives have gIoU > ``pos_threshold``, negatives gIoU < ``neg_threshold``;
    each side is averaged on its own and weighted one half.
    """
    n_valid = mask.sum()
    diff = np.where(mask, reg - giou, 0.0)
    l_reg = float((diff ** 2).sum() / n_valid)
    dreg = 2.0 * diff / n_valid

    pos = mask & (giou > pos_threshold)
    neg = mask & (giou < neg_threshold)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    l_cls = 0.0
    dcls = np.zeros_like(cls)
    if n_pos:
        p = cls[pos]
        l_cls -= 0.5 * np.log(p).sum() / n_pos
        dcls[pos] = -0.5 / (n_pos * p)
    if n_neg:
        q = 1.0 - cls[neg]
        l_cls -= 0.5 * np.log(q).sum() / n_neg
        dcls[neg] = 0.5 / (n_neg * q)
    return l_reg + lam * float(l_cls), lam * dcls, dreg


# ---------------------------------------------------------------------------
# labels


def compute_giou_map(
    w: Window, gt: GroundTruth, cfg: BmnConfig, tb: TimeBase = TimeBase()
) -> np.ndarray:
    """Max IoU of every valid candidate against the ground-truth segments."""
    first = w.start_clip + np.arange(cfg.L)[None, :]
    last = first + np.arange(1, cfg.D + 1)[:, None]
    # same operation order as clip_to_seconds / segment_iou
    starts = np.broadcast_to(first * tb.clip_stride_frames / tb.fps, (cfg.D, cfg.L))
    ends = last * tb.clip_stride_frames / tb.fps
    mask = cfg.validity_mask()
    out = np.zeros((cfg.D, cfg.L))
    for e in gt.entries:
        seg = e.segment
        inter = np.maximum(0.0, np.minimum(ends, seg.end_s) - np.maximum(starts, seg.start_s))
        union = (ends - starts) + (seg.end_s - seg.start_s) - inter
        np.maximum(out, inter / union, out=out)
    out[~mask] = 0.0
    return out


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"TADM"
CHECKPOINT_VERSION = 1
_INT_FIELDS = ("L", "D", "num_samples", "feature_dim", "base_hidden", "hidden", "map_hidden")
_FLOAT_FIELDS = ("pos_threshold", "neg_threshold")


def save_checkpoint(path: str | Path, params: ModelParams, cfg: BmnConfig) -> None:
    check_params(params, cfg)
    header = CHECKPOINT_MAGIC + struct.pack(
        f"<I{len(_INT_FIELDS)}I{len(_FLOAT_FIELDS)}d",
        CHECKPOINT_VERSION,
        *(getattr(cfg, f) for f in _INT_FIELDS),
        *(getattr(cfg, f) for f in _FLOAT_FIELDS),
    )
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in params.blocks())
    Path(path).write_bytes(header + body)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, BmnConfig]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {data[:4]!r} at byte 0")
    fmt = f"<I{len(_INT_FIELDS)}I{len(_FLOAT_FIELDS)}d"
    hsize = 4 + struct.calcsize(fmt)
    if len(data) < hsize:
        raise ValueError(f"{path}: truncated checkpoint header ({len(data)} < {hsize} bytes)")
    vals = struct.unpack(fmt, data[4:hsize])
    if vals[0] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {vals[0]} at byte 4")
    kw = dict(zip(_INT_FIELDS + _FLOAT_FIELDS, vals[1:]))
    cfg = BmnConfig(**kw)
    shapes = param_shapes(cfg)
    expected = hsize + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != expected:
        raise ValueError(f"{path}: checkpoint payload is {len(data)} bytes, header implies {expected}")
    off = hsize
    out = {}
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        out[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
    return ModelParams(**out), cfg
