"""Aspect-based sentiment classification with context, syntax, and knowledge
views fused hierarchically, plus the knowledge-graph-embedding machinery and
experiment runners around it."""

__version__ = "0.1.0"

from . import corpus, depparse, embeddings, evaluation, kge, network, pipeline, training  # noqa: F401
