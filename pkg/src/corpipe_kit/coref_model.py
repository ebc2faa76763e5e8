"""Mention tagging plus antecedent attention over one shared encoder."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import span_codec
from .antecedents import (AntecedentMatrix, antecedent_loss, decode_clusters, ensemble_average,
                          gold_antecedents, mention_reps, score_antecedents)
from .corefud import Document, make_mention, set_entities
from .nn import tensor as T
from .nn.encoder import HashedEncoder, init_matrix
from .nn.tensor import Tensor
from .segments import SegmenterConfig, build_segment


@dataclass
class CorefConfig:
    d_model: int = 32
    buckets: int = 2048
    d_hidden: int = 64
    d_attn: int = 32
    dropout: float = 0.1
    max_pushes: int = 2
    max_depth: int = 3
    max_pops: int = 2
    seed: int = 0


def node_token(node) -> str:
    if node.is_empty:
        return "#empty" if node.form == "_" else "#" + node.form
    return node.form


@dataclass
class PreparedDoc:
    """Flattened token view of a document with gold mentions in token coordinates."""

    doc: Document
    tokens: list[str]
    offsets: list[int]  # sentence i covers tokens [offsets[i], offsets[i + 1])
    mentions: list[tuple[int, int, str]]  # (start, end inclusive, entity), document order

    @classmethod
    def from_document(cls, doc: Document) -> "PreparedDoc":
        tokens, offsets = [], [0]
        for sent in doc.sentences:
            tokens.extend(node_token(n) for n in sent.nodes)
            offsets.append(len(tokens))
        mentions = [(offsets[m.sentence] + m.start, offsets[m.sentence] + m.end, m.entity_id)
                    for m in doc.mentions]
        mentions.sort(key=lambda m: (m[0], -m[1]))
        return cls(doc, tokens, offsets, mentions)

    def sentence_range(self, i: int) -> tuple[int, int]:
        return self.offsets[i], self.offsets[i + 1]

    def locate(self, token: int) -> tuple[int, int]:
        sent = int(np.searchsorted(self.offsets, token, side="right") - 1)
        return sent, token - self.offsets[sent]


class CorefModel:
    def __init__(self, cfg: CorefConfig):
        self.cfg = cfg
        self.vocab = span_codec.Vocabulary(cfg.max_pushes, cfg.max_depth, cfg.max_pops)
        self.encoder = HashedEncoder(cfg.d_model, cfg.buckets, cfg.seed, prefix="enc")
        rng = T.rng_for(cfg.seed, "coref", "init")
        d, h = cfg.d_model, cfg.d_hidden
        self.params: dict[str, Tensor] = dict(self.encoder.params)
        self.params.update({
            "tag.w1": T.param(init_matrix(rng, d, h)),
            "tag.b1": T.param(np.zeros(h)),
            "tag.w2": T.param(init_matrix(rng, h, len(self.vocab))),
            "tag.b2": T.param(np.zeros(len(self.vocab))),
            "ante.query": T.param(init_matrix(rng, 2 * d, cfg.d_attn)),
            "ante.key": T.param(init_matrix(rng, 2 * d, cfg.d_attn)),
        })

    # -- pieces -------------------------------------------------------------

    def encode(self, tokens: Sequence[str], training: bool = False, rng=None) -> Tensor:
        return self.encoder(tokens, training, rng, self.cfg.dropout)

    def tag_logits(self, hidden: Tensor, training: bool = False, rng=None) -> Tensor:
        p = self.params
        x = T.relu(T.linear(hidden, p["tag.w1"], p["tag.b1"]))
        x = T.dropout(x, self.cfg.dropout, rng, training)
        return T.linear(x, p["tag.w2"], p["tag.b2"])

    def antecedent_scores(self, hidden: Tensor, starts, ends) -> Tensor:
        reps = mention_reps(hidden, starts, ends)
        return score_antecedents(reps, self.params["ante.query"], self.params["ante.key"])

    # -- training -----------------------------------------------------------

    def loss(self, prep: PreparedDoc, sentence: int, seg_cfg: SegmenterConfig,
             training: bool = True, rng_key: tuple = ()) -> Tensor:
        seed = self.cfg.seed
        seg = build_segment(len(prep.tokens), prep.sentence_range(sentence), seg_cfg, "train",
                            prep.doc.corpus_id)
        hidden = self.encode(prep.tokens[seg.start:seg.end], training,
                             T.rng_for(seed, *rng_key, "encoder"))
        ts, te = seg.target_start - seg.start, seg.target_end - seg.start
        target = T.take_rows(hidden, np.arange(ts, te))
        logits = self.tag_logits(target, training, T.rng_for(seed, *rng_key, "tags"))
        spans = [(s - seg.target_start, e - seg.target_start) for s, e, _ in prep.mentions
                 if seg.target_start <= s and e < seg.target_end]
        gold_tags = self.vocab.encode_ids(spans, te - ts)
        total = T.scale(T.cross_entropy(logits, gold_tags), 1.0 / max(te - ts, 1))

        window = [m for m in prep.mentions if seg.start <= m[0] and m[1] < seg.target_end]
        rows = [i for i, m in enumerate(window) if m[0] >= seg.target_start]
        if rows:
            scores = self.antecedent_scores(hidden, [m[0] - seg.start for m in window],
                                            [m[1] - seg.start for m in window])
            n = len(window)
            targets = gold_antecedents([m[2] for m in window], np.tril(np.ones((n, n), bool)))
            ante = antecedent_loss(scores, rows, targets[rows])
            total = T.add(total, T.scale(ante, 1.0 / len(rows)))
        return total

    # -- persistence --------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"parameter {name}: shape {arrays[name].shape} != {p.shape}")
            p.data = arrays[name].copy()


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict_document(models: Sequence[CorefModel], doc: Document,
                     seg_cfg: SegmenterConfig | None = None) -> Document:
    """Tag mentions and link antecedents, averaging member probabilities when ensembling."""
    if not models:
        raise ValueError("no models given")
    seg_cfg = seg_cfg or SegmenterConfig()
    vocab = models[0].vocab
    if any(m.vocab.tags != vocab.tags for m in models):
        raise ValueError("ensemble members use different tag vocabularies")
    prep = PreparedDoc.from_document(doc)
    mentions: list[tuple[int, int]] = []
    rows: dict[int, tuple[list[int], np.ndarray]] = {}

    for sentence in range(len(doc.sentences)):
        seg = build_segment(len(prep.tokens), prep.sentence_range(sentence), seg_cfg, "infer",
                            doc.corpus_id)
        if seg.target_end == seg.target_start:
            continue
        window_tokens = prep.tokens[seg.start:seg.end]
        ts, te = seg.target_start - seg.start, seg.target_end - seg.start
        hiddens, tag_probs = [], []
        for model in models:
            hidden = model.encode(window_tokens)
            hiddens.append(hidden)
            logits = model.tag_logits(T.take_rows(hidden, np.arange(ts, te))).data
            tag_probs.append(_softmax_rows(logits))
        probs = ensemble_average(tag_probs)
        with np.errstate(divide="ignore"):
            tags = vocab.best_valid(np.log(probs))
        new = sorted(((s + seg.target_start, e + seg.target_start, k)
                      for s, e, k in span_codec.decode(tags)), key=lambda m: (m[0], -m[1], m[2]))
        first_new = len(mentions)
        mentions.extend((s, e) for s, e, _ in new)
        if not new:
            continue
        window = [i for i, (s, e) in enumerate(mentions) if s >= seg.start and e < seg.end]
        starts = [mentions[i][0] - seg.start for i in window]
        ends = [mentions[i][1] - seg.start for i in window]
        member_rows = []
        for model, hidden in zip(models, hiddens):
            scores = model.antecedent_scores(hidden, starts, ends).data
            member_rows.append(np.where(np.tril(np.ones_like(scores, bool)),
                                        _softmax_rows(scores), 0.0))
        local = {g: i for i, g in enumerate(window)}
        averaged = ensemble_average([r[[local[g] for g in range(first_new, len(mentions))]]
                                     for r in member_rows])
        for offset, g in enumerate(range(first_new, len(mentions))):
            rows[g] = (window, averaged[offset])

    n = len(mentions)
    values = np.zeros((n, n))
    allowed = np.zeros((n, n), dtype=bool)
    for g, (window, row) in rows.items():
        for col, prob in zip(window, row):
            if col <= g:
                values[g, col] = prob
                allowed[g, col] = True
    matrix = AntecedentMatrix(values, allowed)
    spans = []
    for s, e in mentions:
        sent, start = prep.locate(s)
        spans.append(make_mention(doc.sentences, sent, start, e - prep.offsets[sent], ""))
    return set_entities(doc, decode_clusters(matrix, spans))


def config_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
