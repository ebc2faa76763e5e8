"""MUC, B-cubed, CEAF-e and the CoNLL average under exact, head, or partial matching.

Scores are accumulated as numerator/denominator pairs so corpus-level values
sum counts over documents instead of averaging per-document F1s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corefud import Document, EntityCluster, MentionSpan, extract_entities

METRICS = ("muc", "b3", "ceafe")
MODES = ("exact", "head", "partial")

Clusters = Sequence[Sequence[Hashable]]


@dataclass(frozen=True)
class MatchMode:
    mode: str = "exact"
    include_singletons: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown match mode {self.mode!r}")


@dataclass
class Counts:
    """Recall and precision as exact rationals; F1 is derived."""

    r_num: Fraction = Fraction(0)
    r_den: Fraction = Fraction(0)
    p_num: Fraction = Fraction(0)
    p_den: Fraction = Fraction(0)

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.r_num + other.r_num, self.r_den + other.r_den,
                      self.p_num + other.p_num, self.p_den + other.p_den)

    @property
    def recall(self) -> Fraction:
        return Fraction(self.r_num) / self.r_den if self.r_den else Fraction(0)

    @property
    def precision(self) -> Fraction:
        return Fraction(self.p_num) / self.p_den if self.p_den else Fraction(0)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    def prf(self) -> tuple[float, float, float]:
        return float(self.precision), float(self.recall), float(self.f1)


# ---------------------------------------------------------------------------
# metrics over clusters of hashable mention identities


def muc_counts(key: Clusters, response: Clusters) -> Counts:
    def links(gold, other):
        where = {m: i for i, c in enumerate(other) for m in c}
        num = den = 0
        for cluster in gold:
            # mentions absent from ``other`` form their own partition cells
            cells = {where.get(m, ("missing", m)) for m in cluster}
            num += len(cluster) - len(cells)
            den += len(cluster) - 1
        return num, den

    r_num, r_den = links(key, response)
    p_num, p_den = links(response, key)
    return Counts(Fraction(r_num), Fraction(r_den), Fraction(p_num), Fraction(p_den))


def b_cubed_counts(key: Clusters, response: Clusters) -> Counts:
    def side(gold, other):
        where = {m: set(c) for c in other for m in c}
        num = Fraction(0)
        total = 0
        for cluster in gold:
            members = set(cluster)
            for m in cluster:
                num += Fraction(len(members & where.get(m, set())), len(members))
            total += len(cluster)
        return num, total

    r_num, r_den = side(key, response)
    p_num, p_den = side(response, key)
    return Counts(r_num, Fraction(r_den), p_num, Fraction(p_den))


def phi4(k: Iterable, r: Iterable) -> Fraction:
    k, r = set(k), set(r)
    return Fraction(2 * len(k & r), len(k) + len(r))


def ceaf_e_counts(key: Clusters, response: Clusters) -> Counts:
    total = Fraction(0)
    if key and response:
        sim = [[phi4(k, r) for r in response] for k in key]
        rows, cols = linear_sum_assignment(np.array(sim, dtype=np.float64), maximize=True)
        total = sum((sim[i][j] for i, j in zip(rows, cols)), Fraction(0))
    return Counts(total, Fraction(len(key)), total, Fraction(len(response)))


def _triple(counts: Counts, key: Clusters, response: Clusters) -> tuple[float, float, float]:
    if not key and not response:
        return 1.0, 1.0, 1.0
    return counts.prf()


def muc(key: Clusters, response: Clusters) -> tuple[float, float, float]:
    return _triple(muc_counts(key, response), key, response)


def b_cubed(key: Clusters, response: Clusters) -> tuple[float, float, float]:
    return _triple(b_cubed_counts(key, response), key, response)


def ceaf_e(key: Clusters, response: Clusters) -> tuple[float, float, float]:
    return _triple(ceaf_e_counts(key, response), key, response)


def conll_score(f1s: Sequence[float]) -> float:
    """Mean of the MUC, B-cubed and CEAF-e F1 values, in percent."""
    muc_f1, b3_f1, ceafe_f1 = f1s
    return float((Fraction(muc_f1) + Fraction(b3_f1) + Fraction(ceafe_f1)) / 3 * 100)


# ---------------------------------------------------------------------------
# mention alignment


def _partial_match(key: MentionSpan, resp: MentionSpan) -> bool:
    return set(resp.nodes) <= set(key.nodes) and key.head in resp.nodes


def align_mentions(key: Sequence[MentionSpan], response: Sequence[MentionSpan],
                   mode: str = "exact") -> dict[int, int]:
    """One-to-one map response index -> key index.

    Exact matches are paired first; remaining key mentions (document order)
    then take the first unpaired response mention satisfying the mode's rule.
    """
    if mode not in MODES:
        raise ValueError(f"unknown match mode {mode!r}")
    key_order = sorted(range(len(key)), key=lambda i: key[i].sort_key)
    resp_order = sorted(range(len(response)), key=lambda j: response[j].sort_key)
    pairs: dict[int, int] = {}
    used_key: set[int] = set()
    by_nodes: dict[tuple, list[int]] = {}
    for j in resp_order:
        by_nodes.setdefault(response[j].nodes, []).append(j)
    for i in key_order:
        candidates = by_nodes.get(key[i].nodes)
        if candidates:
            pairs[candidates.pop(0)] = i
            used_key.add(i)
    if mode == "exact":
        return pairs
    for i in key_order:
        if i in used_key:
            continue
        k = key[i]
        for j in resp_order:
            if j in pairs:
                continue
            r = response[j]
            if (r.head == k.head) if mode == "head" else _partial_match(k, r):
                pairs[j] = i
                used_key.add(i)
                break
    return pairs


def _drop_singletons(clusters: Sequence[EntityCluster]) -> list[EntityCluster]:
    return [c for c in clusters if len(c.mentions) > 1]


def aligned_clusters(key: Sequence[EntityCluster], response: Sequence[EntityCluster],
                     match: MatchMode) -> tuple[list[list], list[list]]:
    """Express both sides over shared mention identities after alignment."""
    if not match.include_singletons:
        key, response = _drop_singletons(key), _drop_singletons(response)
    key_mentions = [(ci, m) for ci, c in enumerate(key) for m in c.mentions]
    resp_mentions = [(ci, m) for ci, c in enumerate(response) for m in c.mentions]
    pairs = align_mentions([m for _, m in key_mentions], [m for _, m in resp_mentions], match.mode)
    key_out: list[list] = [[] for _ in key]
    for i, (ci, _) in enumerate(key_mentions):
        key_out[ci].append(("k", i))
    resp_out: list[list] = [[] for _ in response]
    for j, (ci, _) in enumerate(resp_mentions):
        resp_out[ci].append(("k", pairs[j]) if j in pairs else ("r", j))
    return key_out, resp_out


@dataclass
class ScoreReport:
    counts: dict[str, Counts] = field(default_factory=lambda: {m: Counts() for m in METRICS})
    documents: int = 0
    empty_documents: int = 0

    def add_document(self, key: Clusters, response: Clusters) -> None:
        self.documents += 1
        if not key and not response:
            self.empty_documents += 1
            return
        self.counts["muc"] += muc_counts(key, response)
        self.counts["b3"] += b_cubed_counts(key, response)
        self.counts["ceafe"] += ceaf_e_counts(key, response)

    def metric(self, name: str) -> tuple[float, float, float]:
        if self.documents and self.documents == self.empty_documents:
            return 1.0, 1.0, 1.0
        return self.counts[name].prf()

    @property
    def conll(self) -> float:
        return conll_score([self.metric(m)[2] for m in METRICS])


def score_documents(pairs: Iterable[tuple[Document, Document]],
                    match: MatchMode = MatchMode()) -> ScoreReport:
    report = ScoreReport()
    for key_doc, resp_doc in pairs:
        key, resp = aligned_clusters(extract_entities(key_doc), extract_entities(resp_doc), match)
        report.add_document(key, resp)
    return report


def report_rows(corpus: str, report: ScoreReport, match: MatchMode) -> list[list[str]]:
    flag = "yes" if match.include_singletons else "no"
    rows = []
    for m in METRICS:
        p, r, f = report.metric(m)
        rows.append([corpus, m, match.mode, flag, f"{p * 100:.2f}", f"{r * 100:.2f}", f"{f * 100:.2f}"])
    rows.append([corpus, "conll", match.mode, flag, "", "", f"{report.conll:.2f}"])
    return rows


TSV_HEADER = ["corpus", "metric", "mode", "singletons", "P", "R", "F1"]
