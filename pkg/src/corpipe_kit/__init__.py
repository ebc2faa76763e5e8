"""Desk-scale CorefUD coreference pipeline: empty nodes, mentions, antecedents, scoring."""

__version__ = "0.1.0"
