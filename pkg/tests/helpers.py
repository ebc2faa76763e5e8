"""Shared test utilities: central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from corpipe_kit.nn.tensor import Tensor

EPS = 1e-3
REL_TOL = 1e-4


def numeric_grad(fn: Callable[[], Tensor], tensor: Tensor, eps: float = EPS) -> np.ndarray:
    grad = np.zeros_like(tensor.data)
    for idx in np.ndindex(tensor.shape):
        orig = tensor.data[idx]
        tensor.data[idx] = orig + eps
        plus = float(fn().data)
        tensor.data[idx] = orig - eps
        minus = float(fn().data)
        tensor.data[idx] = orig
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_errors(fn: Callable[[], Tensor], tensors: Mapping[str, Tensor],
                    eps: float = EPS) -> dict[str, float]:
    """``|analytic - numeric| / (|analytic| + |numeric|)`` per tensor, in the 2-norm."""
    for t in tensors.values():
        t.grad = None
    fn().backward()
    errors = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(fn, t, eps)
        scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        errors[name] = 0.0 if scale < 1e-12 else float(np.linalg.norm(analytic - numeric) / scale)
    return errors


def away_from_zero(rng: np.random.Generator, shape, margin: float = 0.05) -> np.ndarray:
    """Normal samples pushed off ``[-margin, margin]`` so ReLU kinks stay out of reach."""
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def keep_off_kinks(x: np.ndarray, w: Tensor, b: Tensor, margin: float = 0.02) -> None:
    """Shift bias entries until every ReLU input ``x w + b`` is at least ``margin`` from zero.

    A finite difference straddling a kink is not a gradient, so checks are run
    at points where a step of EPS cannot cross one.
    """
    z = x @ w.data
    for j in range(z.shape[1]):
        while np.abs(z[:, j] + b.data[j]).min() < margin:
            b.data[j] += margin


def head_cases(seed: int) -> dict[str, tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    """One scalar objective per differentiable head, built on small random models."""
    from corpipe_kit.coref_model import CorefConfig, CorefModel
    from corpipe_kit.empty_nodes import EmptyHeadConfig, EmptyNodeModel
    from corpipe_kit.antecedents import antecedent_loss
    from corpipe_kit.nn import tensor as T

    rng = np.random.default_rng(seed)
    n, d = 5, 4
    empty = EmptyNodeModel(EmptyHeadConfig(d_word=d, d_hidden=6, d_attn=3, buckets=16,
                                           deprels=("nsubj", "obj", "iobj"), seed=seed))
    coref = CorefModel(CorefConfig(d_model=d, buckets=16, d_hidden=6, d_attn=3, seed=seed))
    ep, cp = empty.params, coref.params

    def pick(params, prefix):
        return {k: v for k, v in params.items() if k.startswith(prefix)}

    reps = T.param(rng.normal(size=(n, d)))
    cands = T.param(rng.normal(size=(3, d)))
    preceding = T.param(rng.normal(size=(3, d)))
    weights = [rng.normal(size=(n, d)) for _ in range(2)]
    exists = rng.integers(0, 2, size=(3, 1)).astype(float)
    positions = rng.integers(0, n + 1, size=3)
    labels = rng.integers(0, 3, size=3)
    hidden = T.param(rng.normal(size=(n, d)))
    tags = rng.integers(0, len(coref.vocab), size=n)
    starts, ends = [0, 1, 1, 3], [0, 2, 4, 3]
    ante_targets = [0, 0, 2, 1]

    keep_off_kinks(reps.data, ep["cand1.w1"], ep["cand1.b1"])
    first, _ = empty.candidate_reps(reps)
    keep_off_kinks(np.hstack([first.data, reps.data]), ep["cand2.w1"], ep["cand2.b1"])
    keep_off_kinks(cands.data, ep["exist.w1"], ep["exist.b1"])
    keep_off_kinks(cands.data, ep["pos.w1"], ep["pos.b1"])
    keep_off_kinks(np.hstack([cands.data, preceding.data]), ep["dep.w1"], ep["dep.b1"])
    keep_off_kinks(hidden.data, cp["tag.w1"], cp["tag.b1"])

    def cand_fn():
        first, second = empty.candidate_reps(reps)
        return T.add(T.tensor_sum(T.mul(first, T.const(weights[0]))),
                     T.tensor_sum(T.mul(second, T.const(weights[1]))))

    return {
        "candidate": (cand_fn, {"reps": reps, **pick(ep, "cand")}),
        "existence": (lambda: T.binary_cross_entropy(empty.existence_logits(cands), exists),
                      {"cands": cands, **pick(ep, "exist")}),
        "position": (lambda: T.cross_entropy(empty.position_logits(cands, reps), positions),
                     {"cands": cands, "reps": reps, **pick(ep, "pos")}),
        "deprel": (lambda: T.cross_entropy(empty.deprel_logits(cands, preceding), labels),
                   {"cands": cands, "preceding": preceding, **pick(ep, "dep")}),
        "tag": (lambda: T.cross_entropy(coref.tag_logits(hidden), tags),
                {"hidden": hidden, **pick(cp, "tag")}),
        "antecedent": (lambda: antecedent_loss(coref.antecedent_scores(hidden, starts, ends),
                                               [0, 1, 2, 3], ante_targets),
                       {"hidden": hidden, **pick(cp, "ante")}),
    }
