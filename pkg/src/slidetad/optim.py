"""AdamW, cosine learning-rate schedule and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bmn import BmnModel, ModelParams, init_params


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.002
    epochs: int = 10
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 1
    seed: int = 0
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not self.base_lr >= 0:
            raise ValueError(f"base_lr must be >= 0, got {self.base_lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        object.__setattr__(self, "betas", tuple(self.betas))


@dataclass
class OptState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> OptState:
        return cls(params.zeros_like(), params.zeros_like(), 0)


def cosine_lr(progress: float, base_lr: float) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def adamw_step(
    params: ModelParams, grads: ModelParams, state: OptState, lr: float, cfg: TrainConfig
) -> tuple[ModelParams, OptState]:
    """Decoupled weight decay followed by a bias-corrected Adam step. Updates in place."""
    for name, g in grads.blocks():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in block {name!r} at step {state.step + 1}")
    beta1, beta2 = cfg.betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.blocks():
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        if cfg.weight_decay:
            p -= lr * cfg.weight_decay * p
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return params, state


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float]
    log: list[dict] = field(default_factory=list)


def train(
    model: BmnModel,
    dataset: list[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig = TrainConfig(),
    params: ModelParams | None = None,
    on_record: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Fit the proposal network on (window features, gIoU map) pairs.

    The learning rate follows the cosine schedule over global step progress.
    Batch gradients are summed in a fixed order, so a given seed always
    reproduces the same parameters bit for bit.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(model.cfg, seed=cfg.seed)
    state = OptState.zeros(params)
    n = len(dataset)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    log: list[dict] = []
    epoch_losses = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            batch = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            grad_sum = None
            loss_sum = 0.0
            for i in batch:
                x, giou = dataset[i]
                loss, g = model.loss_and_grad(params, x, giou, cfg.lam)
                loss_sum += loss
                if grad_sum is None:
                    grad_sum = g
                else:
                    for name, v in grad_sum.blocks():
                        v += getattr(g, name)
            for _, v in grad_sum.blocks():
                v /= len(batch)
            lr = cosine_lr(step / total, cfg.base_lr)
            adamw_step(params, grad_sum, state, lr, cfg)
            rec = {"epoch": epoch, "step": step, "lr": lr, "loss": loss_sum / len(batch)}
            log.append(rec)
            if on_record:
                on_record(rec)
            losses.append(loss_sum / len(batch))
            step += 1
        epoch_losses.append(float(np.mean(losses)))
        rec = {"epoch": epoch, "mean_loss": epoch_losses[-1]}
        log.append(rec)
        if on_record:
            on_record(rec)
    return TrainResult(params, epoch_losses, log)
