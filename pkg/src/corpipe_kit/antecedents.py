"""Mention representations, antecedent scoring, cluster decoding, and ensembling."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .corefud import EntityCluster, MentionSpan
from .nn import tensor as T
from .nn.tensor import Tensor

DEFAULT_ENSEMBLE_SIZE = 5


@dataclass
class MentionRep:
    vector: np.ndarray
    mention_index: int
    span: MentionSpan | None = None


@dataclass
class AntecedentMatrix:
    """Row ``i`` holds the scores of mentions ``j <= i`` as antecedents of mention ``i``.

    ``allowed`` marks unmasked cells; the diagonal (self, i.e. a new entity) is
    always allowed.  Masked cells read as ``-inf``.
    """

    values: np.ndarray
    allowed: np.ndarray

    def __post_init__(self):
        n = self.values.shape[0]
        if self.values.shape != (n, n) or self.allowed.shape != (n, n):
            raise ValueError("antecedent matrix must be square")
        if n and not self.allowed[np.arange(n), np.arange(n)].all():
            raise ValueError("diagonal must stay unmasked")
        if np.triu(self.allowed, 1).any():
            raise ValueError("entries above the diagonal must be masked")

    @classmethod
    def causal(cls, values: np.ndarray) -> "AntecedentMatrix":
        n = values.shape[0]
        return cls(np.asarray(values, dtype=np.float64), np.tril(np.ones((n, n), dtype=bool)))

    @property
    def scores(self) -> np.ndarray:
        return np.where(self.allowed, self.values, -np.inf)

    def antecedents(self) -> np.ndarray:
        """Row argmax over unmasked cells; ``np.argmax`` already breaks ties to the smallest j."""
        if not len(self.values):
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.scores, axis=1)

    def to_tsv(self) -> str:
        return "".join("\t".join("-inf" if not ok else repr(float(v)) for v, ok in zip(row, mask)) + "\n"
                       for row, mask in zip(self.values, self.allowed))


def mention_reps(hidden: Tensor, starts: Sequence[int], ends: Sequence[int]) -> Tensor:
    """Concatenate first- and last-token rows of ``hidden`` for every mention."""
    return T.concat([T.take_rows(hidden, starts), T.take_rows(hidden, ends)], axis=1)


def score_antecedents(reps: Tensor, query: Tensor, key: Tensor,
                      allowed: np.ndarray | None = None) -> Tensor:
    """Masked ``(rep_i W_q) . (rep_j W_k) / sqrt(d_attn)``; differentiable in all inputs."""
    if reps.data.ndim != 2 or reps.shape[1] != query.shape[0] or reps.shape[1] != key.shape[0]:
        raise ValueError(f"mention reps {reps.shape} do not fit attention maps "
                         f"{query.shape}, {key.shape}")
    n = reps.shape[0]
    if allowed is None:
        allowed = np.tril(np.ones((n, n), dtype=bool))
    return T.scaled_dot_attention(T.matmul(reps, query), T.matmul(reps, key), allowed)


def gold_antecedents(entities: Sequence[str], allowed: np.ndarray) -> np.ndarray:
    """Earliest allowed same-entity mention for each row, or the row itself."""
    targets = np.arange(len(entities))
    for i, eid in enumerate(entities):
        for j in range(i):
            if allowed[i, j] and entities[j] == eid:
                targets[i] = j
                break
    return targets


def antecedent_loss(scores: Tensor, rows: Sequence[int], targets: Sequence[int]) -> Tensor:
    if not len(rows):
        return Tensor(0.0)
    return T.cross_entropy(T.take_rows(scores, rows), targets)


def decode_links(matrix: AntecedentMatrix) -> list[list[int]]:
    """Connected components of the argmax antecedent graph, ordered by first mention."""
    n = matrix.values.shape[0]
    sets = DisjointSet(range(n))
    for i, a in enumerate(matrix.antecedents()):
        if a != i:
            sets.merge(int(i), int(a))
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(sets[i], []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def decode_clusters(matrix: AntecedentMatrix, spans: Sequence[MentionSpan]) -> list[EntityCluster]:
    if matrix.values.shape[0] != len(spans):
        raise ValueError("one matrix row per mention required")
    clusters = []
    for number, group in enumerate(decode_links(matrix), start=1):
        eid = f"e{number}"
        clusters.append(EntityCluster(
            eid, tuple(dataclasses.replace(spans[i], entity_id=eid) for i in group)))
    return clusters


def ensemble_average(members: Sequence[np.ndarray], tolerance: float = 1e-6) -> np.ndarray:
    """Elementwise mean of probability arrays whose last axis sums to one.

    Computed as ``min + mean(member - min)`` over the elementwise-sorted stack,
    which is exact for a single member or identical members and independent
    of member order.
    """
    if not len(members):
        raise ValueError("ensemble needs at least one member")
    shape = np.shape(members[0])
    if any(np.shape(m) != shape for m in members):
        raise ValueError("ensemble members differ in shape")
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in members])
    if stack.size and np.abs(stack.sum(axis=-1) - 1.0).max() > tolerance:
        raise ValueError("ensemble member rows do not sum to 1")
    stack = np.sort(stack, axis=0)
    base = stack[0]
    return base + (stack - base).sum(axis=0) / len(members)
