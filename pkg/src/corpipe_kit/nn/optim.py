"""Adam, AdaFactor, and the linear-warmup cosine-decay learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerConfig:
    kind: str = "adafactor"  # adam | adafactor
    peak_lr: float = 5e-4
    warmup_fraction: float = 0.1
    total_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # AdaFactor: regularizer added to squared gradients, and update RMS clip
    eps1: float = 1e-30
    clip_threshold: float = 1.0
    momentum: float | None = None

    def __post_init__(self):
        if self.kind not in ("adam", "adafactor"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in (0, 1)")
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")

    @property
    def warmup_end(self) -> float:
        return self.warmup_fraction * self.total_steps


def lr_at(step: float, cfg: OptimizerConfig) -> float:
    warmup_end = cfg.warmup_end
    if step <= warmup_end:
        return cfg.peak_lr * step / warmup_end
    progress = (step - warmup_end) / (cfg.total_steps - warmup_end)
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: dict, cfg: OptimizerConfig, step: int) -> None:
    """In-place bias-corrected Adam; ``step`` is 1-based and also selects the learning rate."""
    lr = lr_at(step, cfg)
    for name, g in grads.items():
        m, v = state.setdefault(name, (np.zeros_like(g), np.zeros_like(g)))
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1 ** step)
        v_hat = v / (1 - cfg.beta2 ** step)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def factored_second_moment(row: np.ndarray, col: np.ndarray) -> np.ndarray:
    """Rank-1 reconstruction ``row col^T / sum(row)`` of a second-moment matrix."""
    return np.outer(row, col) / row.sum()


def adafactor_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                   state: dict, cfg: OptimizerConfig, step: int) -> None:
    """In-place AdaFactor with factored second moments for matrices and an external lr."""
    lr = lr_at(step, cfg)
    correction = 1 - cfg.beta2 ** step
    for name, g in grads.items():
        sq = g * g + cfg.eps1
        slot = state.setdefault(name, {})
        if g.ndim == 2:
            row = slot.setdefault("row", np.zeros(g.shape[0]))
            col = slot.setdefault("col", np.zeros(g.shape[1]))
            row *= cfg.beta2
            row += (1 - cfg.beta2) * sq.sum(axis=1)
            col *= cfg.beta2
            col += (1 - cfg.beta2) * sq.sum(axis=0)
            v_hat = factored_second_moment(row, col) / correction
        else:
            v = slot.setdefault("v", np.zeros_like(g))
            v *= cfg.beta2
            v += (1 - cfg.beta2) * sq
            v_hat = v / correction
        update = g / np.sqrt(v_hat)
        rms = np.sqrt(np.mean(update * update))
        update /= max(1.0, rms / cfg.clip_threshold)
        if cfg.momentum is not None:
            m = slot.setdefault("m", np.zeros_like(g))
            m *= cfg.momentum
            m += (1 - cfg.momentum) * update
            update = m
        params[name] -= lr * update


class Optimizer:
    """Binds a parameter dict of Tensors to one of the update rules above."""

    def __init__(self, params: Mapping[str, Tensor], cfg: OptimizerConfig):
        self.params = dict(params)
        self.cfg = cfg
        self.state: dict = {}
        self.steps = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> float:
        self.steps += 1
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        arrays = {n: self.params[n].data for n in grads}
        rule = adam_step if self.cfg.kind == "adam" else adafactor_step
        rule(arrays, grads, self.state, self.cfg, self.steps)
        return lr_at(self.steps, self.cfg)
