"""Non-autoregressive empty node prediction: up to two candidates per word.

Every word proposes two candidates whose dependency head is the word itself.
Three heads then decide whether a candidate exists, which word it follows
(position 0 = sentence start), and its dependency relation.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corefud import Document, Node, Sentence
from .nn import tensor as T
from .nn.encoder import HashedEncoder, init_matrix
from .nn.tensor import Tensor

logger = logging.getLogger(__name__)

SLOTS = 2


@dataclass
class EmptyHeadConfig:
    # desk-scale widths; full-size models use 768 -> 2048 -> 768
    d_word: int = 32
    d_hidden: int = 64
    d_attn: int = 32
    dropout_rate: float = 0.5
    exist_threshold: float = 0.5
    buckets: int = 2048
    deprels: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        self.deprels = tuple(self.deprels)
        if self.d_hidden <= 0:
            raise ValueError("d_hidden must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0.0 < self.exist_threshold < 1.0:
            raise ValueError("exist_threshold must be in (0, 1)")


@dataclass
class EmptyCandidate:
    source_word: int  # 1-based word id, also the dependency head
    slot: int
    position: int  # the empty node follows this word; 0 = sentence start
    deprel: str
    exist_prob: float
    sentence: int = 0
    rep: np.ndarray | None = None


@dataclass
class GoldEmpty:
    source_word: int
    slot: int
    position: int
    deprel: str


dropped_gold = 0


def gold_empties(sent: Sentence) -> list[GoldEmpty]:
    """Assign a sentence's empty nodes to (head word, slot); extras beyond two are counted."""
    global dropped_gold
    per_word: dict[int, list[Node]] = {}
    for node in sent.empties:
        head = node.head_id()
        if head is None or head[1] != 0 or head[0] == 0:
            dropped_gold += 1
            continue
        per_word.setdefault(head[0], []).append(node)
    gold = []
    for word, nodes in sorted(per_word.items()):
        nodes.sort(key=lambda n: (n.word, n.minor))
        if len(nodes) > SLOTS:
            dropped_gold += len(nodes) - SLOTS
        for slot, node in enumerate(nodes[:SLOTS], start=1):
            gold.append(GoldEmpty(word, slot, node.word, node.deps_relation() or "dep"))
    return gold


def collect_deprels(docs: Iterable[Document]) -> tuple[str, ...]:
    labels = {g.deprel for d in docs for s in d.sentences for g in gold_empties(s)}
    return tuple(sorted(labels)) or ("dep",)


class EmptyNodeModel:
    def __init__(self, cfg: EmptyHeadConfig):
        if not cfg.deprels:
            raise ValueError("empty node model needs a deprel inventory")
        self.cfg = cfg
        self.deprel_index = {label: i for i, label in enumerate(cfg.deprels)}
        self.encoder = HashedEncoder(cfg.d_word, cfg.buckets, cfg.seed, prefix="enc")
        rng = T.rng_for(cfg.seed, "empty", "init")
        d, h, a, k = cfg.d_word, cfg.d_hidden, cfg.d_attn, len(cfg.deprels)
        z = np.zeros
        self.params: dict[str, Tensor] = dict(self.encoder.params)
        self.params.update({name: T.param(value) for name, value in {
            "cand1.w1": init_matrix(rng, d, h), "cand1.b1": z(h),
            "cand1.w2": init_matrix(rng, h, d), "cand1.b2": z(d),
            "cand2.w1": init_matrix(rng, 2 * d, h), "cand2.b1": z(h),
            "cand2.w2": init_matrix(rng, h, d), "cand2.b2": z(d),
            "exist.w1": init_matrix(rng, d, h), "exist.b1": z(h),
            "exist.w2": init_matrix(rng, h, 1), "exist.b2": z(1),
            "pos.w1": init_matrix(rng, d, h), "pos.b1": z(h),
            "pos.query": init_matrix(rng, h, a), "pos.key": init_matrix(rng, d, a),
            "pos.start": rng.normal(0.0, 1.0, size=(1, d)),
            "dep.w1": init_matrix(rng, 2 * d, h), "dep.b1": z(h),
            "dep.w2": init_matrix(rng, h, k), "dep.b2": z(k),
        }.items()})

    def _drop(self, x: Tensor, training: bool, rng_key: tuple, layer: str) -> Tensor:
        if not training:
            return x
        return T.dropout(x, self.cfg.dropout_rate, T.rng_for(self.cfg.seed, *rng_key, layer), True)

    def _hidden(self, x: Tensor, prefix: str, training: bool, rng_key: tuple) -> Tensor:
        p = self.params
        return self._drop(T.relu(T.linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"])),
                          training, rng_key, prefix)

    def candidate_reps(self, word_reps: Tensor, training: bool = False,
                       rng_key: tuple = ()) -> tuple[Tensor, Tensor]:
        if word_reps.data.ndim != 2 or word_reps.shape[1] != self.cfg.d_word:
            raise ValueError(f"word reps {word_reps.shape} do not match d_word={self.cfg.d_word}")
        p = self.params
        first = T.linear(self._hidden(word_reps, "cand1", training, rng_key), p["cand1.w2"], p["cand1.b2"])
        joined = T.concat([first, word_reps], axis=1)
        second = T.linear(self._hidden(joined, "cand2", training, rng_key), p["cand2.w2"], p["cand2.b2"])
        return first, second

    def existence_logits(self, cands: Tensor, training: bool = False, rng_key: tuple = ()) -> Tensor:
        p = self.params
        return T.linear(self._hidden(cands, "exist", training, rng_key), p["exist.w2"], p["exist.b2"])

    def position_logits(self, cands: Tensor, word_reps: Tensor, training: bool = False,
                        rng_key: tuple = ()) -> Tensor:
        """Logit of position p is query(cand) . key(rep_p); rep_0 is the learned start vector."""
        p = self.params
        query = T.matmul(self._hidden(cands, "pos", training, rng_key), p["pos.query"])
        keys = T.matmul(self.position_reps(word_reps), p["pos.key"])
        return T.matmul(query, T.transpose(keys))

    def position_reps(self, word_reps: Tensor) -> Tensor:
        return T.concat([self.params["pos.start"], word_reps], axis=0)

    def deprel_logits(self, cands: Tensor, preceding: Tensor, training: bool = False,
                      rng_key: tuple = ()) -> Tensor:
        p = self.params
        joined = T.concat([cands, preceding], axis=1)
        return T.linear(self._hidden(joined, "dep", training, rng_key), p["dep.w2"], p["dep.b2"])

    def encode(self, forms: Sequence[str], training: bool = False, rng_key: tuple = ()) -> Tensor:
        rng = T.rng_for(self.cfg.seed, *rng_key, "encoder") if training else None
        return self.encoder(forms, training, rng, 0.0)

    # -- training -----------------------------------------------------------

    def loss(self, sent: Sentence, training: bool = True, rng_key: tuple = ()) -> Tensor:
        n = len(sent.words)
        reps = self.encode([w.form for w in sent.words], training, rng_key)
        first, second = self.candidate_reps(reps, training, rng_key)
        cands = T.concat([first, second], axis=0)  # row (slot - 1) * n + word - 1
        gold = gold_empties(sent)
        exists = np.zeros((2 * n, 1))
        rows = []
        for g in gold:
            row = (g.slot - 1) * n + g.source_word - 1
            exists[row, 0] = 1.0
            rows.append(row)
        total = T.scale(T.binary_cross_entropy(self.existence_logits(cands, training, rng_key), exists),
                        1.0 / (2 * n))
        if gold:
            picked = T.take_rows(cands, rows)
            positions = [g.position for g in gold]
            pos_loss = T.cross_entropy(self.position_logits(picked, reps, training, rng_key), positions)
            labels = []
            for g in gold:
                if g.deprel not in self.deprel_index:
                    raise KeyError(f"deprel {g.deprel!r} missing from the label inventory")
                labels.append(self.deprel_index[g.deprel])
            # teacher forcing: the gold position picks the preceding word
            preceding = T.take_rows(self.position_reps(reps), positions)
            dep_loss = T.cross_entropy(self.deprel_logits(picked, preceding, training, rng_key), labels)
            total = T.add(total, T.scale(T.add(pos_loss, dep_loss), 1.0 / len(gold)))
        return total

    # -- inference ----------------------------------------------------------

    def predict(self, sent: Sentence, sentence_index: int = 0) -> list[EmptyCandidate]:
        n = len(sent.words)
        if n == 0:
            return []
        reps = self.encode([w.form for w in sent.words])
        first, second = self.candidate_reps(reps)
        cands = T.concat([first, second], axis=0)
        probs = _sigmoid(self.existence_logits(cands).data[:, 0])
        thr = self.cfg.exist_threshold
        accepted = []
        for word in range(1, n + 1):
            if probs[word - 1] < thr:
                continue
            accepted.append((word, 1, word - 1))
            if probs[n + word - 1] >= thr:
                accepted.append((word, 2, n + word - 1))
        if not accepted:
            return []
        rows = [r for _, _, r in accepted]
        picked = T.take_rows(cands, rows)
        positions = np.argmax(self.position_logits(picked, reps).data, axis=1)
        preceding = T.take_rows(self.position_reps(reps), positions)
        labels = np.argmax(self.deprel_logits(picked, preceding).data, axis=1)
        return [EmptyCandidate(word, slot, int(pos), self.cfg.deprels[int(lab)], float(probs[row]),
                               sentence_index, cands.data[row].copy())
                for (word, slot, row), pos, lab in zip(accepted, positions, labels)]

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"parameter {name}: shape {arrays[name].shape} != {p.shape}")
            p.data = arrays[name].copy()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def predict_empty_nodes(doc: Document, model: EmptyNodeModel) -> list[EmptyCandidate]:
    return [c for i, sent in enumerate(doc.sentences) for c in model.predict(sent, i)]


def insert_empty_nodes(doc: Document, candidates: Sequence[EmptyCandidate]) -> Document:
    """Add one empty node per candidate, numbered with the next free minor index at its anchor."""
    if not candidates:
        return doc
    by_sentence: dict[int, list[EmptyCandidate]] = {}
    for cand in candidates:
        by_sentence.setdefault(cand.sentence, []).append(cand)
    sentences = list(doc.sentences)
    for index, cands in by_sentence.items():
        sent = sentences[index]
        n = len(sent.words)
        empties = list(sent.empties)
        used: dict[int, int] = {}
        for e in empties:
            used[e.word] = max(used.get(e.word, 0), e.minor)
        for cand in sorted(cands, key=lambda c: (c.source_word, c.slot)):
            if not 1 <= cand.source_word <= n or not 0 <= cand.position <= n:
                raise ValueError(f"candidate {cand} outside sentence of {n} words")
            minor = used.get(cand.position, 0) + 1
            used[cand.position] = minor
            empties.append(Node(cand.position, minor, deps=f"{cand.source_word}:{cand.deprel}"))
        empties.sort(key=lambda e: (e.word, e.minor))
        sentences[index] = dataclasses.replace(sent, empties=tuple(empties))
    return dataclasses.replace(doc, sentences=tuple(sentences))


def existence_f1(gold_docs: Sequence[Document], predicted: Sequence[Sequence[EmptyCandidate]]) -> float:
    """F1 of (sentence, head word, slot) existence decisions."""
    gold = {(d, g_sent, g.source_word, g.slot)
            for d, doc in enumerate(gold_docs) for g_sent, s in enumerate(doc.sentences)
            for g in gold_empties(s)}
    pred = {(d, c.sentence, c.source_word, c.slot) for d, cands in enumerate(predicted) for c in cands}
    if not gold and not pred:
        return 1.0
    hit = len(gold & pred)
    return 2 * hit / (len(gold) + len(pred))
