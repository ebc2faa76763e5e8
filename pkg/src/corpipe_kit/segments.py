"""Encoder windows around a target sentence."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

PROIEL_CORPORA = ("cu_proiel", "grc_proiel")


@dataclass
class SegmenterConfig:
    train_len: int = 512
    infer_len: int = 2560
    tail: int = 50
    # corpora whose inference windows keep the training length
    per_corpus_overrides: dict[str, int] = field(
        default_factory=lambda: {c: 512 for c in PROIEL_CORPORA})

    def __post_init__(self):
        if self.tail < 0 or self.train_len < 1 or self.infer_len < 1:
            raise ValueError("segment lengths must be positive and tail nonnegative")

    def length(self, mode: str, corpus_id: str = "") -> int:
        if mode == "train":
            return self.train_len
        if mode != "infer":
            raise ValueError(f"unknown segment mode {mode!r}")
        return self.per_corpus_overrides.get(corpus_id, self.infer_len)


@dataclass(frozen=True)
class Segment:
    """Window ``[start, end)`` over document tokens; ``[target_start, target_end)`` is predicted."""

    start: int
    end: int
    target_start: int
    target_end: int
    truncated: bool = False

    def mask(self) -> list[bool]:
        return [self.target_start <= t < self.target_end for t in range(self.start, self.end)]


truncation_count = 0


def build_segment(doc_len: int, sentence: tuple[int, int], cfg: SegmenterConfig,
                  mode: str = "train", corpus_id: str = "") -> Segment:
    """Sentence, then at most ``cfg.tail`` following tokens, then preceding context to fill."""
    global truncation_count
    s, e = sentence
    if not 0 <= s <= e <= doc_len:
        raise ValueError(f"sentence [{s}, {e}) outside document of {doc_len} tokens")
    limit = cfg.length(mode, corpus_id)
    if e - s > limit:
        truncation_count += 1
        logger.warning("sentence of %d tokens truncated to segment length %d", e - s, limit)
        return Segment(s, s + limit, s, s + limit, truncated=True)
    tail = min(cfg.tail, doc_len - e, limit - (e - s))
    before = min(s, limit - (e - s) - tail)
    return Segment(s - before, e + tail, s, e)
