"""Small synthetic CorefUD corpora with nested and crossing mentions and empty nodes."""

from __future__ import annotations

import random

from .corefud import Document, EntityCluster, Node, Sentence, make_mention, set_entities

NAMES = ["Karel", "Marie", "Jana", "Petr", "Eva", "Tomáš", "Lucie", "Pavel", "Anna", "Jiří",
         "Hana", "Martin"]
NOUNS = ["car", "boat", "house", "garden", "book", "lamp"]
ADJECTIVES = ["old", "red", "small", "quiet", "new", "dark"]


def _sentence(words, empties=(), comments=()):
    """``words``: (form, head, deprel); ``empties``: (after, head, deprel)."""
    nodes = tuple(Node(i, 0, form, form.lower(), "_", "_", "_", str(head), rel, "_", "_")
                  for i, (form, head, rel) in enumerate(words, start=1))
    counters: dict[int, int] = {}
    empty_nodes = []
    for after, head, rel in empties:
        counters[after] = counters.get(after, 0) + 1
        empty_nodes.append(Node(after, counters[after], deps=f"{head}:{rel}"))
    empty_nodes.sort(key=lambda n: (n.word, n.minor))
    return Sentence(nodes, tuple(empty_nodes), tuple(comments))


def _templates(rng, a, b, noun, adj1, adj2):
    """Each template: (words, empties, mentions) with mentions as ((w, m), (w, m), entity)."""
    return {
        "meet": ([(a, 2, "nsubj"), ("met", 0, "root"), (b, 2, "obj"), (".", 2, "punct")], [],
                 [((1, 0), (1, 0), "A"), ((3, 0), (3, 0), "B")]),
        "nested": ([(a, 3, "nmod:poss"), ("'s", 1, "case"), ("dog", 4, "nsubj"),
                    ("barked", 0, "root"), (".", 4, "punct")], [],
                   [((1, 0), (3, 0), "D"), ((1, 0), (1, 0), "A")]),
        "crossing": ([("the", 4, "det"), (adj1, 4, "amod"), (adj2, 4, "amod"), (noun, 5, "nsubj"),
                      ("stopped", 0, "root"), (".", 5, "punct")], [],
                     [((1, 0), (3, 0), "X"), ((2, 0), (4, 0), "Y")]),
        "again": ([("the", 2, "det"), (noun, 3, "nsubj"), ("left", 0, "root"), (b, 3, "obl"),
                   (".", 3, "punct")], [],
                  [((1, 0), (2, 0), "Y"), ((4, 0), (4, 0), "B")]),
        "prodrop": ([("Řekl", 0, "root"), (",", 4, "punct"), ("že", 4, "mark"),
                     ("nepřijde", 1, "ccomp"), (".", 1, "punct")],
                    [(1, 1, "nsubj"), (4, 4, "nsubj")],
                    [((1, 1), (1, 1), "A"), ((4, 1), (4, 1), "A")]),
        "gave": ([("Včera", 2, "advmod"), ("dal", 0, "root"), ("knihu", 2, "obj"), (".", 2, "punct")],
                 [(2, 2, "nsubj"), (3, 2, "iobj")],
                 [((2, 1), (2, 1), "A"), ((3, 1), (3, 1), "B")]),
        "came": ([("Přišel", 0, "root"), ("pozdě", 1, "advmod"), (".", 1, "punct")],
                 [(0, 1, "nsubj")],
                 [((0, 1), (0, 1), "B")]),
    }


DOCUMENT_PLANS = [
    ["meet", "nested", "prodrop", "again"],
    ["crossing", "meet", "gave", "again"],
    ["meet", "came", "nested", "prodrop"],
    ["meet", "crossing", "gave", "again"],
    ["nested", "meet", "came", "prodrop"],
]


def toy_corpus(seed: int = 0, corpus_id: str = "cs_toy", plans=None) -> list[Document]:
    """Five 4-sentence documents (20 sentences) covering nested, crossing, and empty-node cases."""
    rng = random.Random(seed)
    docs = []
    for d, plan in enumerate(plans or DOCUMENT_PLANS):
        a, b = rng.sample(NAMES, 2)
        noun = rng.choice(NOUNS)
        adj1, adj2 = rng.sample(ADJECTIVES, 2)
        templates = _templates(rng, a, b, noun, adj1, adj2)
        sentences, raw_mentions = [], []
        for s, name in enumerate(plan):
            words, empties, mentions = templates[name]
            comments = []
            if s == 0:
                comments.append(f"# newdoc id = {corpus_id}-d{d + 1}")
            comments.append(f"# sent_id = {corpus_id}-d{d + 1}-s{s + 1}")
            comments.append("# text = " + " ".join(w[0] for w in words))
            sentences.append(_sentence(words, empties, comments))
            raw_mentions.extend((s, first, last, ent) for first, last, ent in mentions)
        sentences = tuple(sentences)
        clusters: dict[str, list] = {}
        for s, first, last, ent in raw_mentions:
            index = sentences[s].index_of
            clusters.setdefault(ent, []).append(
                make_mention(sentences, s, index[first], index[last], ent))
        numbered = []
        for number, (ent, mentions) in enumerate(clusters.items(), start=1):
            eid = f"e{number}"
            numbered.append(EntityCluster(eid, tuple(
                make_mention(sentences, m.sentence, m.start, m.end, eid) for m in mentions)))
        base = Document(sentences, f"{corpus_id}-d{d + 1}", corpus_id)
        docs.append(set_entities(base, numbered))
    return docs
