"""Desk-scale token encoder: hashed embeddings plus one self-attention block."""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def stable_hash(token: str) -> int:
    """64-bit hash that does not depend on PYTHONHASHSEED."""
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def positional_encoding(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    rate = 1.0 / (10000.0 ** (np.arange(0, d, 2) / d))
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(pos * rate)
    table[:, 1::2] = np.cos(pos * rate[: d // 2])
    return table


def init_matrix(rng: np.random.Generator, rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
    return rng.normal(0.0, gain / np.sqrt(rows), size=(rows, cols))


class HashedEncoder:
    """Maps a token sequence to an ``n x d`` matrix.

    Each token is hashed into one of ``buckets`` trainable embeddings, a fixed
    sinusoidal position signal is added, and a single residual self-attention
    block with a ReLU feed-forward layer mixes the segment.
    """

    def __init__(self, d: int = 32, buckets: int = 2048, seed: int = 0, prefix: str = "enc"):
        self.d = d
        self.buckets = buckets
        self.prefix = prefix
        rng = T.rng_for(seed, prefix, "init")
        p = prefix
        self.params: dict[str, Tensor] = {
            f"{p}.embed": T.param(rng.normal(0.0, 1.0, size=(buckets, d))),
            f"{p}.query": T.param(init_matrix(rng, d, d)),
            f"{p}.key": T.param(init_matrix(rng, d, d)),
            f"{p}.value": T.param(init_matrix(rng, d, d)),
            f"{p}.out": T.param(init_matrix(rng, d, d)),
            f"{p}.ff1": T.param(init_matrix(rng, d, 2 * d)),
            f"{p}.ff1_b": T.param(np.zeros(2 * d)),
            f"{p}.ff2": T.param(init_matrix(rng, 2 * d, d)),
            f"{p}.ff2_b": T.param(np.zeros(d)),
        }
        self._bucket_cache: dict[str, int] = {}

    @property
    def d_enc(self) -> int:
        return self.d

    def bucket_ids(self, tokens: Sequence[str]) -> np.ndarray:
        cache = self._bucket_cache
        ids = []
        for tok in tokens:
            b = cache.get(tok)
            if b is None:
                b = cache[tok] = stable_hash(tok) % self.buckets
            ids.append(b)
        return np.array(ids, dtype=np.int64)

    def encode(self, tokens: Sequence[str]) -> Tensor:
        return self(tokens)

    def __call__(self, tokens: Sequence[str], training: bool = False,
                 rng: np.random.Generator | None = None, dropout: float = 0.0) -> Tensor:
        p, w = self.prefix, self.params
        n = len(tokens)
        if n == 0:
            return Tensor(np.zeros((0, self.d)))
        x = T.add(T.take_rows(w[f"{p}.embed"], self.bucket_ids(tokens)),
                  Tensor(positional_encoding(n, self.d)))
        q = T.matmul(x, w[f"{p}.query"])
        k = T.matmul(x, w[f"{p}.key"])
        v = T.matmul(x, w[f"{p}.value"])
        attn = T.softmax(T.scaled_dot_attention(q, k))
        x = T.add(x, T.matmul(T.matmul(attn, v), w[f"{p}.out"]))
        hidden = T.relu(T.linear(x, w[f"{p}.ff1"], w[f"{p}.ff1_b"]))
        hidden = T.dropout(hidden, dropout, rng, training)
        return T.add(x, T.linear(hidden, w[f"{p}.ff2"], w[f"{p}.ff2_b"]))
