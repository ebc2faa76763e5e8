"""CorefUD flavoured CoNLL-U: parsing, serialization, and Entity bracket handling.

A node is addressed document-wide by a ``NodeRef``: ``(sentence index, word, minor)``
where ``minor`` is 0 for surface words and ``k`` for the empty node ``word.k``.
Tuple order of NodeRefs within a sentence equals CoNLL-U row order.
"""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

NodeRef = tuple  # (sentence, word, minor)

COLUMNS = ("id", "form", "lemma", "upos", "xpos", "feats", "head", "deprel", "deps", "misc")


class ConlluError(ValueError):
    """Malformed CoNLL-U input or Entity annotation."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_node_id(text: str) -> tuple[int, int]:
    if "." in text:
        word, minor = text.split(".", 1)
        if not (word.isdigit() and minor.isdigit()) or int(minor) < 1:
            raise ValueError(f"bad empty node id {text!r}")
        return int(word), int(minor)
    if not text.isdigit():
        raise ValueError(f"bad node id {text!r}")
    return int(text), 0


def format_node_id(word: int, minor: int) -> str:
    return f"{word}.{minor}" if minor else str(word)


@dataclass(frozen=True)
class Node:
    word: int
    minor: int = 0
    form: str = "_"
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    head: str = "_"
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"

    @property
    def id(self) -> str:
        return format_node_id(self.word, self.minor)

    @property
    def is_empty(self) -> bool:
        return self.minor > 0

    def head_id(self) -> tuple[int, int] | None:
        """Dependency head as ``(word, minor)``; ``(0, 0)`` is the root.

        Empty nodes keep their attachment in DEPS, so the first DEPS edge is used.
        """
        if not self.is_empty and self.head not in ("_", ""):
            return int(self.head), 0
        if self.deps not in ("_", ""):
            first = self.deps.split("|", 1)[0]
            head = first.split(":", 1)[0]
            try:
                return parse_node_id(head)
            except ValueError:
                return None
        return None

    def deps_relation(self) -> str | None:
        if self.deps in ("_", ""):
            return None
        first = self.deps.split("|", 1)[0]
        return first.split(":", 1)[1] if ":" in first else None

    def misc_items(self) -> list[str]:
        return [] if self.misc in ("_", "") else self.misc.split("|")

    def misc_get(self, key: str) -> str | None:
        prefix = key + "="
        for item in self.misc_items():
            if item.startswith(prefix):
                return item[len(prefix):]
        return None

    def with_misc(self, key: str, value: str | None) -> "Node":
        """Set (or with ``None`` remove) one MISC attribute, keeping the others in place."""
        prefix = key + "="
        items, placed = [], False
        for item in self.misc_items():
            if item.startswith(prefix):
                if value is not None and not placed:
                    items.append(prefix + value)
                    placed = True
            else:
                items.append(item)
        if value is not None and not placed:
            items.append(prefix + value)
        return dataclasses.replace(self, misc="|".join(items) if items else "_")

    def to_line(self) -> str:
        return "\t".join((self.id, self.form, self.lemma, self.upos, self.xpos, self.feats,
                          self.head, self.deprel, self.deps, self.misc))


@dataclass(frozen=True)
class Sentence:
    words: tuple[Node, ...]
    empties: tuple[Node, ...] = ()
    comments: tuple[str, ...] = ()
    multiword: tuple[tuple[int, str], ...] = ()  # (first word, raw line)

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        """Words and empty nodes in CoNLL-U row order."""
        after: dict[int, list[Node]] = {}
        for empty in self.empties:
            after.setdefault(empty.word, []).append(empty)
        ordered = list(after.get(0, ()))
        for word in self.words:
            ordered.append(word)
            ordered.extend(after.get(word.word, ()))
        return tuple(ordered)

    @cached_property
    def index_of(self) -> dict[tuple[int, int], int]:
        return {(n.word, n.minor): i for i, n in enumerate(self.nodes)}

    def comment(self, key: str) -> str | None:
        prefix = f"# {key} = "
        for line in self.comments:
            if line.startswith(prefix):
                return line[len(prefix):]
        return None


@dataclass(frozen=True)
class MentionSpan:
    """A contiguous run of sentence nodes (``start``..``end`` inclusive, row order)."""

    entity_id: str
    sentence: int
    start: int
    end: int
    nodes: tuple[NodeRef, ...]
    head: NodeRef
    attrs: str = ""
    discontinuous: bool = False

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return self.sentence, self.start, -self.end


@dataclass(frozen=True)
class EntityCluster:
    entity_id: str
    mentions: tuple[MentionSpan, ...]


@dataclass(frozen=True)
class Document:
    sentences: tuple[Sentence, ...] = ()
    doc_id: str = ""
    corpus_id: str = ""

    def node(self, ref: NodeRef) -> Node:
        sent = self.sentences[ref[0]]
        return sent.nodes[sent.index_of[(ref[1], ref[2])]]

    @cached_property
    def _mention_scan(self) -> tuple[tuple[MentionSpan, ...], tuple[str, ...]]:
        return _scan_mentions(self.sentences)

    @property
    def mentions(self) -> tuple[MentionSpan, ...]:
        """All mentions in document order (sentence, start, longer first)."""
        return self._mention_scan[0]

    @property
    def warnings(self) -> tuple[str, ...]:
        return self._mention_scan[1]


def derive_head(span: MentionSpan, sent: Sentence) -> NodeRef:
    """Return the span node whose dependency head lies outside the span (leftmost on ties)."""
    members = [sent.nodes[i] for i in range(span.start, span.end + 1)]
    inside = {(n.word, n.minor) for n in members}
    for node in members:
        head = node.head_id()
        if head is None or head == (0, 0) or head not in inside:
            return span.sentence, node.word, node.minor
    first = members[0]
    return span.sentence, first.word, first.minor


def make_mention(sentences: Sequence[Sentence], sentence: int, start: int, end: int,
                 entity_id: str, attrs: str = "", discontinuous: bool = False) -> MentionSpan:
    sent = sentences[sentence]
    if not 0 <= start <= end < len(sent.nodes):
        raise ValueError(f"mention [{start}, {end}] outside sentence of {len(sent.nodes)} nodes")
    nodes = tuple((sentence, n.word, n.minor) for n in sent.nodes[start:end + 1])
    probe = MentionSpan(entity_id, sentence, start, end, nodes, nodes[0], attrs, discontinuous)
    return dataclasses.replace(probe, head=derive_head(probe, sent))


# ---------------------------------------------------------------------------
# Entity brackets

_BRACKET = re.compile(r"\(([^()]+)\)|\(([^()]+)|([^()]+)\)")
_NAME = re.compile(r"^([^\[\-]+)(\[\d+/\d+\])?(.*)$")


def _split_name(name: str) -> tuple[str, str, str]:
    match = _NAME.match(name)
    if not match:
        raise ValueError(f"bad entity reference {name!r}")
    return match.group(1), match.group(2) or "", match.group(3)


def parse_entity_value(value: str) -> list[tuple[str, str, str, str]]:
    """Tokenize an ``Entity=`` value into ``(kind, eid, part, attrs)`` with kind open/close/single."""
    ops, pos = [], 0
    for match in _BRACKET.finditer(value):
        if match.start() != pos:
            raise ValueError(f"unparsable Entity value {value!r}")
        pos = match.end()
        if match.group(1) is not None:
            ops.append(("single", *_split_name(match.group(1))))
        elif match.group(2) is not None:
            ops.append(("open", *_split_name(match.group(2))))
        else:
            eid, part, _ = _split_name(match.group(3))
            ops.append(("close", eid, part, ""))
    if pos != len(value):
        raise ValueError(f"unparsable Entity value {value!r}")
    return ops


def _scan_mentions(sentences: Sequence[Sentence], line_of: dict | None = None):
    mentions: list[MentionSpan] = []
    warnings: list[str] = []

    def fail(message, s, node):
        line = line_of.get((s, node.word, node.minor)) if line_of else None
        raise ConlluError(f"{message} (sentence {s + 1}, node {node.id})", line)

    for s, sent in enumerate(sentences):
        stacks: dict[tuple[str, str], list[tuple[int, str, Node]]] = {}
        pieces: dict[tuple[str, str], list[tuple[int, int, str]]] = {}
        for i, node in enumerate(sent.nodes):
            value = node.misc_get("Entity")
            if value is None:
                continue
            try:
                ops = parse_entity_value(value)
            except ValueError as err:
                fail(str(err), s, node)
            for kind, eid, part, attrs in ops:
                if kind == "close":
                    stack = stacks.get((eid, part))
                    if not stack:
                        fail(f"closing bracket {eid}{part}) without an opening one", s, node)
                    start, attrs, _ = stack.pop()
                    spans = [(start, i, attrs)]
                else:
                    if kind == "open":
                        stacks.setdefault((eid, part), []).append((i, attrs, node))
                        continue
                    spans = [(i, i, attrs)]
                if part:
                    index, total = map(int, part[1:-1].split("/"))
                    key = (eid, f"/{total}")
                    pieces.setdefault(key, []).extend(spans)
                    if len(pieces[key]) < total:
                        continue
                    parts = pieces.pop(key)
                    start = min(p[0] for p in parts)
                    end = max(p[1] for p in parts)
                    first_attrs = next((p[2] for p in parts if p[2]), "")
                    warnings.append(f"sentence {s + 1}: discontinuous mention of {eid} "
                                    f"loaded as covering range")
                    mentions.append(make_mention(sentences, s, start, end, eid, first_attrs, True))
                else:
                    for start, end, attrs in spans:
                        mentions.append(make_mention(sentences, s, start, end, eid, attrs))
        for stack in stacks.values():
            if stack:
                start, _, node = stack[-1]
                fail("opening bracket never closed", s, node)
        for (eid, _), parts in pieces.items():
            fail(f"incomplete discontinuous mention of {eid}", s, sent.nodes[parts[0][0]])
    mentions.sort(key=lambda m: m.sort_key)
    return tuple(mentions), tuple(warnings)


def extract_entities(doc: Document) -> list[EntityCluster]:
    """Group the document's mentions into clusters, ordered by first mention."""
    grouped: dict[str, list[MentionSpan]] = {}
    for mention in doc.mentions:
        grouped.setdefault(mention.entity_id, []).append(mention)
    return [EntityCluster(eid, tuple(ms)) for eid, ms in grouped.items()]


def set_entities(doc: Document, clusters: Iterable[EntityCluster]) -> Document:
    """Return a copy of ``doc`` whose ``Entity`` MISC attributes encode exactly ``clusters``."""
    order: dict[str, int] = {}
    per_node: dict[NodeRef, list] = {}
    for cluster in clusters:
        order.setdefault(cluster.entity_id, len(order))
        for slot, m in enumerate(cluster.mentions):
            rank = (m.start, -m.end, order[cluster.entity_id], slot)
            first, last = m.nodes[0], m.nodes[-1]
            if first == last:
                per_node.setdefault(first, []).append(("single", rank, m, cluster.entity_id))
            else:
                per_node.setdefault(first, []).append(("open", rank, m, cluster.entity_id))
                per_node.setdefault(last, []).append(("close", rank, m, cluster.entity_id))

    sentences = []
    for s, sent in enumerate(doc.sentences):
        def rewrite(node: Node) -> Node:
            ops = per_node.get((s, node.word, node.minor), [])
            closes = sorted((o for o in ops if o[0] == "close"), key=lambda o: o[1], reverse=True)
            opens = sorted((o for o in ops if o[0] == "open"), key=lambda o: o[1])
            singles = sorted((o for o in ops if o[0] == "single"), key=lambda o: o[1])
            text = "".join(f"{eid})" for _, _, _, eid in closes)
            text += "".join(f"({eid}{m.attrs}" for _, _, m, eid in opens)
            text += "".join(f"({eid}{m.attrs})" for _, _, m, eid in singles)
            return node.with_misc("Entity", text or None)

        sentences.append(dataclasses.replace(
            sent, words=tuple(map(rewrite, sent.words)), empties=tuple(map(rewrite, sent.empties))))
    return dataclasses.replace(doc, sentences=tuple(sentences))


# ---------------------------------------------------------------------------
# Reading and writing


def _finish_sentence(block, line_of, s_index):
    comments, words, empties, multiword = [], [], [], []
    for lineno, line in block:
        if line.startswith("#"):
            if words or empties or multiword:
                raise ConlluError("comment inside sentence body", lineno)
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
        ident = cols[0]
        if "-" in ident:
            lo, _, hi = ident.partition("-")
            if not (lo.isdigit() and hi.isdigit()) or int(lo) != len(words) + 1 or int(hi) < int(lo):
                raise ConlluError(f"malformed multiword token range {ident}", lineno)
            multiword.append((int(lo), line))
            continue
        try:
            word, minor = parse_node_id(ident)
        except ValueError as err:
            raise ConlluError(str(err), lineno) from None
        node = Node(word, minor, *cols[1:])
        if minor == 0:
            if word != len(words) + 1:
                raise ConlluError(f"word id {ident} out of sequence, expected {len(words) + 1}", lineno)
            if node.head not in ("_",) and not node.head.isdigit():
                raise ConlluError(f"bad HEAD {node.head!r}", lineno)
            words.append(node)
        else:
            if word != len(words):
                raise ConlluError(f"empty node {ident} not anchored after word {len(words)}", lineno)
            expected = 1 + sum(1 for e in empties if e.word == word)
            if minor != expected:
                raise ConlluError(f"empty node {ident} out of sequence, expected {word}.{expected}",
                                  lineno)
            empties.append(node)
        line_of[(s_index, word, minor)] = lineno
    if not words and not empties:
        raise ConlluError("sentence without nodes", block[-1][0])
    for w in words:
        if w.head != "_" and int(w.head) > len(words):
            raise ConlluError(f"HEAD {w.head} of word {w.id} outside sentence", line_of[(s_index, w.word, 0)])
    return Sentence(tuple(words), tuple(empties), tuple(comments), tuple(multiword))


def parse_conllu(text: str, corpus_id: str = "") -> Document:
    """Parse CoNLL-U text into a single Document (all ``newdoc`` parts concatenated)."""
    sentences: list[Sentence] = []
    line_of: dict[NodeRef, int] = {}
    block: list[tuple[int, str]] = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if line.endswith("\r"):
            raise ConlluError("CRLF line ending", lineno)
        if line.strip() == "":
            if block:
                sentences.append(_finish_sentence(block, line_of, len(sentences)))
                block = []
            continue
        block.append((lineno, line))
    if block:
        sentences.append(_finish_sentence(block, line_of, len(sentences)))

    doc_id = ""
    for sent in sentences:
        doc_id = sent.comment("newdoc id") or ""
        if doc_id or sent.comments:
            break
    doc = Document(tuple(sentences), doc_id, corpus_id)
    # materialize mentions eagerly so bracket errors carry line numbers
    doc.__dict__["_mention_scan"] = _scan_mentions(doc.sentences, line_of)
    return doc


def serialize_conllu(doc: Document) -> str:
    out: list[str] = []
    for sent in doc.sentences:
        out.extend(sent.comments)
        multiword = dict(sent.multiword)
        for node in sent.nodes:
            if not node.is_empty and node.word in multiword:
                out.append(multiword[node.word])
            out.append(node.to_line())
        out.append("")
    return "".join(line + "\n" for line in out)


def split_documents(doc: Document) -> list[Document]:
    """Split at ``# newdoc`` comments; a document without them stays whole."""
    groups: list[list[Sentence]] = []
    ids: list[str] = []
    for sent in doc.sentences:
        new_id = sent.comment("newdoc id")
        is_new = new_id is not None or any(c.startswith("# newdoc") for c in sent.comments)
        if is_new or not groups:
            groups.append([])
            ids.append(new_id or doc.doc_id)
        groups[-1].append(sent)
    return [Document(tuple(g), i, doc.corpus_id) for g, i in zip(groups, ids)]


def join_documents(docs: Sequence[Document]) -> Document:
    sentences = tuple(s for d in docs for s in d.sentences)
    return Document(sentences, docs[0].doc_id if docs else "", docs[0].corpus_id if docs else "")


def read_conllu(path, corpus_id: str | None = None) -> Document:
    path = Path(path)
    if corpus_id is None:
        corpus_id = corpus_id_from_path(path)
    return parse_conllu(path.read_text(encoding="utf-8"), corpus_id)


def corpus_id_from_path(path) -> str:
    """``cs_pdt-corefud-train.conllu`` -> ``cs_pdt``."""
    return Path(path).name.split(".")[0].split("-")[0]


def strip_empty_nodes(doc: Document) -> Document:
    """Drop every empty node; mentions lose their empty members (mentions left empty vanish)."""
    clusters = []
    for cluster in extract_entities(doc):
        kept = []
        for m in cluster.mentions:
            surface = [ref for ref in m.nodes if ref[2] == 0]
            if surface:
                kept.append((m, surface))
        if kept:
            clusters.append((cluster.entity_id, kept))
    stripped = tuple(dataclasses.replace(s, empties=()) for s in doc.sentences)
    base = dataclasses.replace(doc, sentences=stripped)
    rebuilt = []
    for eid, kept in clusters:
        mentions = []
        for m, surface in kept:
            sent = stripped[m.sentence]
            start = sent.index_of[surface[0][1:]]
            end = sent.index_of[surface[-1][1:]]
            mentions.append(make_mention(stripped, m.sentence, start, end, eid, m.attrs))
        rebuilt.append(EntityCluster(eid, tuple(mentions)))
    return set_entities(base, rebuilt)


def validate(doc: Document) -> list[str]:
    """Non-fatal findings; fatal problems already raised during parsing."""
    findings = list(doc.warnings)
    for s, sent in enumerate(doc.sentences):
        for node in sent.empties:
            head = node.head_id()
            if head is not None and head != (0, 0) and head not in sent.index_of:
                findings.append(f"sentence {s + 1}: empty node {node.id} attached to missing node")
    return findings
