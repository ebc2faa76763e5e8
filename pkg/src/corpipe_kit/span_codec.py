"""Stack-operation tags for overlapping and crossing mention spans.

Each token carries a number of pushes (mentions starting there) followed by a
list of pops.  ``POP:d`` closes the span at depth ``d`` (1 = top) of the stack
as it stands when that pop is applied.  Spans that start together are pushed
longest first, and the spans ending at a token are closed top first, so the
emitted depths are nondecreasing and every span set has one encoding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np


class DecodeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TagOps:
    pushes: int = 0
    pops: tuple[int, ...] = ()

    def __post_init__(self):
        if self.pushes < 0 or any(d < 1 for d in self.pops):
            raise ValueError(f"invalid tag {self.pushes}, {self.pops}")

    def __str__(self) -> str:
        items = ["PUSH"] * self.pushes + [f"POP:{d}" for d in self.pops]
        return ",".join(items) if items else "O"

    @classmethod
    def parse(cls, text: str) -> "TagOps":
        if text == "O":
            return cls()
        pushes, pops = 0, []
        for item in text.split(","):
            if item == "PUSH":
                if pops:
                    raise ValueError(f"PUSH after POP in {text!r}")
                pushes += 1
            elif item.startswith("POP:"):
                pops.append(int(item[4:]))
            else:
                raise ValueError(f"bad tag item {item!r}")
        return cls(pushes, tuple(pops))


O = TagOps()

Span = tuple  # (start, end) inclusive


def canonical(spans: Iterable[Span]) -> list[tuple[int, int, int]]:
    """Sorted ``(start, end, slot)`` triples; ``slot`` numbers duplicates of one span."""
    out: list[tuple[int, int, int]] = []
    prev, slot = None, 0
    for pair in sorted((int(sp[0]), int(sp[1])) for sp in spans):
        slot = slot + 1 if pair == prev else 0
        out.append((pair[0], pair[1], slot))
        prev = pair
    return out


@lru_cache(maxsize=None)
def _tag(pushes: int, pops: tuple[int, ...]) -> TagOps:
    return TagOps(pushes, pops)


def encode(spans: Iterable[Span], n: int) -> list[TagOps]:
    by_start: list[list[int]] = [[] for _ in range(n)]
    for sp in spans:
        s, e = int(sp[0]), int(sp[1])
        if not 0 <= s <= e < n:
            raise ValueError(f"span ({s}, {e}) outside [0, {n})")
        by_start[s].append(e)
    stack: list[int] = []  # end positions, top last
    tags = []
    for t in range(n):
        opened = by_start[t]
        if opened:
            # longest first; equal spans are interchangeable on the stack
            opened.sort(reverse=True)
            stack.extend(opened)
        pops = ()
        if t in stack:
            # top-first closing keeps the depth sequence nondecreasing
            height = len(stack)
            closing = [i for i in range(height - 1, -1, -1) if stack[i] == t]
            pops = tuple(height - removed - i for removed, i in enumerate(closing))
            stack = [end for end in stack if end != t]
        tags.append(_tag(len(opened), pops))
    return tags


def decode(tags: Sequence[TagOps], n: int | None = None, lenient: bool = False):
    """Replay the stack machine; returns canonical ``(start, end, slot)`` triples.

    With ``lenient`` unclosed spans and invalid pops are dropped and counted;
    the return value is then ``(spans, dropped)``.
    """
    if n is not None and len(tags) != n:
        raise DecodeError(f"expected {n} tags, got {len(tags)}")
    stack: list[int] = []
    closed = []
    dropped = 0
    for t, tag in enumerate(tags):
        if tag.pushes:
            stack.extend([t] * tag.pushes)
        for depth in tag.pops:
            if depth > len(stack):
                if not lenient:
                    raise DecodeError(f"POP:{depth} at token {t} with stack height {len(stack)}")
                dropped += 1
                continue
            closed.append((stack.pop(len(stack) - depth), t))
    if stack:
        if not lenient:
            raise DecodeError(f"{len(stack)} spans left open at sentence end")
        dropped += len(stack)
    spans = canonical(closed)
    return (spans, dropped) if lenient else spans


def _vocab_key(tag: TagOps):
    return tag.pops, tag.pushes


def tag_vocabulary(max_pushes: int, max_depth: int, max_pops: int | None = None) -> list[TagOps]:
    """All tags with at most ``max_pushes`` pushes and ``max_pops`` pops of depth <= ``max_depth``.

    Ordered by pop sequence, then push count, so index 0 is always ``O``.
    ``max_pops`` defaults to ``max_pushes``.
    """
    if max_pops is None:
        max_pops = max_pushes
    pop_lists = [()]
    if max_depth >= 1:
        for k in range(1, max_pops + 1):
            pop_lists.extend(itertools.combinations_with_replacement(range(1, max_depth + 1), k))
    tags = [TagOps(p, pops) for pops in pop_lists for p in range(max_pushes + 1)]
    return sorted(tags, key=_vocab_key)


def project(tag: TagOps, max_pushes: int, max_depth: int, max_pops: int | None = None) -> TagOps:
    """Nearest representable tag: drop extra pushes and the deepest pops."""
    if max_pops is None:
        max_pops = max_pushes
    pops = tuple(d for d in tag.pops if d <= max_depth)[:max_pops]
    return TagOps(min(tag.pushes, max_pushes), pops)


@dataclass
class Vocabulary:
    """Tag inventory for a classifier, with projection counters for out-of-range gold tags."""

    max_pushes: int = 2
    max_depth: int = 3
    max_pops: int = 2
    tags: list[TagOps] = field(init=False)
    projected: int = field(default=0, init=False)

    def __post_init__(self):
        self.tags = tag_vocabulary(self.max_pushes, self.max_depth, self.max_pops)
        self._index = {t: i for i, t in enumerate(self.tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, tag: TagOps) -> int:
        found = self._index.get(tag)
        if found is None:
            self.projected += 1
            found = self._index[project(tag, self.max_pushes, self.max_depth, self.max_pops)]
        return found

    def encode_ids(self, spans: Iterable[Span], n: int) -> list[int]:
        return [self.index(t) for t in encode(spans, n)]

    def _transitions(self):
        if not hasattr(self, "_trans"):
            pushes = np.array([t.pushes for t in self.tags])
            pops = np.array([len(t.pops) for t in self.tags])
            # a tag is applicable at height h iff its deepest pop fits after the earlier pops
            need = np.array([max((d + k for k, d in enumerate(t.pops)), default=0) - t.pushes
                             for t in self.tags])
            self._trans = pushes, pops, need
        return self._trans

    def best_valid(self, log_probs: np.ndarray, max_height: int | None = None) -> list[TagOps]:
        """Highest-scoring tag sequence that decodes without error.

        Exact Viterbi over the stack height, which is all a tag's validity depends on.
        ``log_probs`` is ``n x len(self)``.
        """
        n = log_probs.shape[0]
        if n == 0:
            return []
        pushes, pops, need = self._transitions()
        delta = pushes - pops
        if max_height is None:
            max_height = n * self.max_pushes
        heights = np.arange(max_height + 1)
        score = np.full(max_height + 1, -np.inf)
        score[0] = 0.0
        back = np.zeros((n, max_height + 1, 2), dtype=np.int64)
        for t in range(n):
            new = np.full(max_height + 1, -np.inf)
            arg = np.zeros((max_height + 1, 2), dtype=np.int64)
            for v in range(len(self.tags)):
                ok = heights >= need[v]
                target = heights + delta[v]
                ok &= (target >= 0) & (target <= max_height) & np.isfinite(score)
                if not ok.any():
                    continue
                cand = score + log_probs[t, v]
                src = heights[ok]
                dst = target[ok]
                better = cand[ok] > new[dst]
                new[dst[better]] = cand[ok][better]
                arg[dst[better], 0] = src[better]
                arg[dst[better], 1] = v
            score = new
            back[t] = arg
        if not np.isfinite(score[0]):
            raise DecodeError("no valid tag sequence")
        out, h = [], 0
        for t in range(n - 1, -1, -1):
            src, v = back[t, h]
            out.append(self.tags[v])
            h = src
        return out[::-1]


def to_tsv(tags: Sequence[TagOps]) -> str:
    return "".join(f"{i}\t{t}\n" for i, t in enumerate(tags))


def from_tsv(text: str) -> list[TagOps]:
    tags = []
    for line in text.splitlines():
        if line:
            index, tag = line.split("\t")
            if int(index) != len(tags):
                raise ValueError(f"tag index {index} out of order")
            tags.append(TagOps.parse(tag))
    return tags
