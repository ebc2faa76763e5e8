"""Corpus sampling, the training loop, checkpoint pools, and submission selection."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .coref_model import CorefConfig, CorefModel, PreparedDoc, predict_document
from .corefud import Document
from .empty_nodes import (EmptyHeadConfig, EmptyNodeModel, collect_deprels, existence_f1,
                          predict_empty_nodes)
from .nn import checkpoint as ckpt_io
from .nn import tensor as T
from .nn.optim import Optimizer, OptimizerConfig
from .scorer import MatchMode, score_documents
from .segments import SegmenterConfig

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# corpora and sampling


@dataclass
class Corpus:
    corpus_id: str
    documents: list[Document]

    @property
    def language(self) -> str:
        return language_of(self.corpus_id)

    def sentence_index(self) -> list[tuple[int, int]]:
        return [(d, s) for d, doc in enumerate(self.documents) for s in range(len(doc.sentences))]

    def size(self, unit: str = "sentences") -> int:
        if unit == "sentences":
            return sum(len(doc.sentences) for doc in self.documents)
        if unit == "words":
            return sum(len(s.words) for doc in self.documents for s in doc.sentences)
        raise ValueError(f"unknown size unit {unit!r}")


def language_of(corpus_id: str) -> str:
    return corpus_id.split("_", 1)[0]


def exclude_language(corpora: Sequence[Corpus], language: str) -> list[Corpus]:
    return [c for c in corpora if c.language != language]


@dataclass
class SamplerConfig:
    ratio: float = 0.5
    unit: str = "sentences"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError("sampling ratio must lie in [0, 1]")
        if self.unit not in ("sentences", "words"):
            raise ValueError(f"unknown size unit {self.unit!r}")


def sampling_weights(sizes: Sequence[float], ratio: float) -> np.ndarray:
    """``size_i ** ratio`` normalized; 0 is uniform, 0.5 square root, 1 proportional."""
    if not len(sizes):
        raise ValueError("no corpora to sample from")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("sampling ratio must lie in [0, 1]")
    sizes = np.asarray(sizes, dtype=np.float64)
    if (sizes <= 0).any():
        raise ValueError("corpus sizes must be positive")
    powered = sizes ** ratio
    return powered / powered.sum()


class SentenceSampler:
    """Draws (corpus, document, sentence) triples with replacement."""

    def __init__(self, corpora: Sequence[Corpus], cfg: SamplerConfig):
        self.corpora = list(corpora)
        self.index = [c.sentence_index() for c in self.corpora]
        self.weights = sampling_weights([c.size(cfg.unit) for c in self.corpora], cfg.ratio)
        self.rng = T.rng_for(cfg.seed, "sampler")

    def draw_corpora(self, k: int) -> np.ndarray:
        return self.rng.choice(len(self.corpora), size=k, p=self.weights)

    def draw(self, k: int) -> list[tuple[int, int, int]]:
        out = []
        for c in self.draw_corpora(k):
            d, s = self.index[c][int(self.rng.integers(len(self.index[c])))]
            out.append((int(c), d, s))
        return out


# ---------------------------------------------------------------------------
# checkpoints and selection


@dataclass
class Checkpoint:
    run_id: str
    epoch: int
    scores: dict[str, float]  # per-corpus dev score in [0, 100]
    blob: bytes = b""
    path: Path | None = None

    @property
    def mean_score(self) -> float:
        return float(np.mean(list(self.scores.values()))) if self.scores else 0.0

    def load_blob(self) -> bytes:
        return self.blob or Path(self.path).read_bytes()


@dataclass
class RunPool:
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.checkpoints)

    def ordered(self) -> list[Checkpoint]:
        return sorted(self.checkpoints, key=lambda c: (c.run_id, c.epoch))

    def extend(self, other: "RunPool") -> None:
        self.checkpoints.extend(other.checkpoints)

    def save(self, run_dir: Path | str) -> None:
        """``<run_dir>/epoch<N>.ckpt`` per checkpoint plus ``scores.tsv``."""
        run_dir = Path(run_dir)
        lines = ["run\tcorpus\tepoch\tscore"]
        for c in self.ordered():
            target = run_dir / f"epoch{c.epoch}.ckpt"
            ckpt_io.atomic_write(target, c.load_blob())
            c.path = target
            lines.extend(f"{c.run_id}\t{corpus}\t{c.epoch}\t{score!r}"
                         for corpus, score in sorted(c.scores.items()))
        ckpt_io.atomic_write(run_dir / "scores.tsv", "\n".join(lines) + "\n")

    @classmethod
    def load(cls, run_dirs: Sequence[Path | str]) -> "RunPool":
        pool = cls()
        for run_dir in map(Path, run_dirs):
            scores: dict[tuple[str, int], dict[str, float]] = {}
            with open(run_dir / "scores.tsv", encoding="utf-8") as fh:
                for row in csv.DictReader(fh, delimiter="\t"):
                    scores.setdefault((row["run"], int(row["epoch"])), {})[row["corpus"]] = float(row["score"])
            for (run_id, epoch), per_corpus in scores.items():
                pool.checkpoints.append(Checkpoint(run_id, epoch, per_corpus,
                                                   path=run_dir / f"epoch{epoch}.ckpt"))
        return pool


@dataclass
class Plan:
    strategy: str
    checkpoints: list[Checkpoint]
    per_corpus: dict[str, Checkpoint] = field(default_factory=dict)

    def for_corpus(self, corpus_id: str) -> list[Checkpoint]:
        if self.strategy == "per_corpus_best" and corpus_id in self.per_corpus:
            return [self.per_corpus[corpus_id]]
        return self.checkpoints


def select(pool: RunPool, strategy: str = "single_best", k: int = 5) -> Plan:
    """single_best, per_corpus_best, or ensemble_topk; ties go to the earliest run/epoch."""
    if not len(pool):
        raise ValueError("empty checkpoint pool")
    ordered = pool.ordered()
    by_mean = sorted(range(len(ordered)), key=lambda i: (-ordered[i].mean_score, i))
    if strategy == "single_best":
        return Plan(strategy, [ordered[by_mean[0]]])
    if strategy == "ensemble_topk":
        if not 1 <= k <= len(ordered):
            raise ValueError(f"cannot ensemble {k} of {len(ordered)} checkpoints")
        return Plan(strategy, [ordered[i] for i in by_mean[:k]])
    if strategy == "per_corpus_best":
        corpora = sorted({c for ck in ordered for c in ck.scores})
        per_corpus = {}
        for corpus in corpora:
            best = max(range(len(ordered)),
                       key=lambda i: (ordered[i].scores.get(corpus, float("-inf")), -i))
            per_corpus[corpus] = ordered[best]
        return Plan(strategy, [ordered[by_mean[0]]], per_corpus)
    raise ValueError(f"unknown selection strategy {strategy!r}")


# ---------------------------------------------------------------------------
# model (de)serialization


def model_to_bytes(model, kind: str, meta: dict | None = None) -> bytes:
    config = {"kind": kind, "model": dataclasses.asdict(model.cfg)}
    return ckpt_io.to_bytes(model.state(), config, meta)


def model_from_bytes(blob: bytes):
    arrays, config, _ = ckpt_io.from_bytes(blob)
    if config["kind"] == "coref":
        model = CorefModel(CorefConfig(**config["model"]))
    elif config["kind"] == "empty":
        model = EmptyNodeModel(EmptyHeadConfig(**config["model"]))
    else:
        raise ckpt_io.CheckpointError(f"unknown model kind {config['kind']!r}")
    model.load_state(arrays)
    return model


# ---------------------------------------------------------------------------
# evaluation


def coref_dev_scores(model: CorefModel, dev: Sequence[Corpus], seg_cfg: SegmenterConfig,
                     match: MatchMode = MatchMode("exact")) -> dict[str, float]:
    scores = {}
    for corpus in dev:
        pairs = [(doc, predict_document([model], doc, seg_cfg)) for doc in corpus.documents]
        scores[corpus.corpus_id] = score_documents(pairs, match).conll
    return scores


def empty_dev_scores(model: EmptyNodeModel, dev: Sequence[Corpus]) -> dict[str, float]:
    return {c.corpus_id: 100 * existence_f1(c.documents, [predict_empty_nodes(d, model)
                                                          for d in c.documents])
            for c in dev}


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    model: str = "coref"  # coref | empty
    epochs: int = 2
    batches_per_epoch: int = 100
    batch_size: int = 6
    seed: int = 0
    run_id: str = "run0"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    coref: CorefConfig = field(default_factory=CorefConfig)
    empty: EmptyHeadConfig = field(default_factory=EmptyHeadConfig)


class TrainingError(RuntimeError):
    pass


def build_model(cfg: TrainConfig, corpora: Sequence[Corpus]):
    if cfg.model == "coref":
        return CorefModel(dataclasses.replace(cfg.coref, seed=cfg.seed))
    if cfg.model == "empty":
        deprels = cfg.empty.deprels or collect_deprels(d for c in corpora for d in c.documents)
        return EmptyNodeModel(dataclasses.replace(cfg.empty, seed=cfg.seed, deprels=deprels))
    raise ValueError(f"unknown model kind {cfg.model!r}")


def train(corpora: Sequence[Corpus], cfg: TrainConfig, dev: Sequence[Corpus] | None = None,
          on_epoch: Callable[[Checkpoint], None] | None = None) -> RunPool:
    """Train one model; a checkpoint with per-corpus dev scores is kept after every epoch."""
    if not corpora:
        raise ValueError("no training corpora")
    pool = RunPool()
    if cfg.epochs == 0:
        return pool
    dev = list(dev) if dev is not None else list(corpora)
    model = build_model(cfg, corpora)
    optim_cfg = dataclasses.replace(cfg.optimizer, total_steps=cfg.epochs * cfg.batches_per_epoch)
    optimizer = Optimizer(model.params, optim_cfg)
    sampler = SentenceSampler(corpora, dataclasses.replace(cfg.sampler, seed=cfg.seed))
    prepared: dict[tuple[int, int], PreparedDoc] = {}

    step = 0
    for epoch in range(1, cfg.epochs + 1):
        started, running = time.perf_counter(), 0.0
        for _ in range(cfg.batches_per_epoch):
            step += 1
            optimizer.zero_grad()
            losses = []
            for b, (c, d, s) in enumerate(sampler.draw(cfg.batch_size)):
                key = (step, b)
                doc = corpora[c].documents[d]
                if cfg.model == "coref":
                    if (c, d) not in prepared:
                        prepared[(c, d)] = PreparedDoc.from_document(doc)
                    losses.append(model.loss(prepared[(c, d)], s, cfg.segmenter, True, key))
                else:
                    losses.append(model.loss(doc.sentences[s], True, key))
            try:
                loss = T.scale(T.add_scalars(losses), 1.0 / len(losses))
                loss.backward()
            except T.NonFiniteError as err:
                raise TrainingError(f"non-finite loss at epoch {epoch} step {step}: "
                                    f"{[float(x.data) for x in losses if np.isfinite(x.data)]}") from err
            optimizer.step()
            running += float(loss.data)
        if cfg.model == "coref":
            scores = coref_dev_scores(model, dev, cfg.segmenter)
        else:
            scores = empty_dev_scores(model, dev)
        checkpoint = Checkpoint(cfg.run_id, epoch, scores,
                                model_to_bytes(model, cfg.model, {"epoch": epoch, "run": cfg.run_id}))
        logger.info("epoch %d: loss %.4f, dev %.2f, %.1fs", epoch, running / cfg.batches_per_epoch,
                    checkpoint.mean_score, time.perf_counter() - started)
        pool.checkpoints.append(checkpoint)
        if on_epoch:
            on_epoch(checkpoint)
    return pool
