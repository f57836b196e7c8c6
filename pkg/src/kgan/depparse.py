"""Dependency parse ingestion (CoNLL-U) and adjacency-matrix construction.

Parses are produced offline by any parser whose tokenization matches the
corpus tokenizer 1:1; mismatches are hard errors, never silently re-aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Instance
from .errors import AlignmentError, ParseError, TreeError

ROOT = -1  # sentinel head index of the root token


@dataclass(frozen=True)
class DependencyParse:
    """0-based head indices aligned to Instance.tokens; labels kept for traceability."""

    heads: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = len(self.heads)
        if self.labels and len(self.labels) != n:
            raise ParseError("labels length differs from heads length")
        roots = [i for i, h in enumerate(self.heads) if h == ROOT]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        for i, h in enumerate(self.heads):
            if h != ROOT and not (0 <= h < n):
                raise TreeError(f"token {i}: head index {h} out of range")
        # every token must reach the root without revisiting (acyclic + connected)
        for i in range(n):
            seen = set()
            j = i
            while j != ROOT:
                if j in seen:
                    raise TreeError(f"cycle through token {i}")
                seen.add(j)
                j = self.heads[j]

    def __len__(self):
        return len(self.heads)


def load_conllu(data: bytes | str) -> dict[str, DependencyParse]:
    """Read CoNLL-U text into a map from sentence id to DependencyParse.

    Sentence ids come from ``# sent_id = ...`` comments. Multiword-token
    ranges (ids like 3-4) and empty nodes (ids like 3.1) are skipped.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    parses: dict[str, DependencyParse] = {}
    sent_id = None
    heads: list[int] = []
    labels: list[str] = []

    def flush(line_no):
        nonlocal sent_id, heads, labels
        if heads:
            key = sent_id if sent_id is not None else f"sentence-{len(parses)}"
            if key in parses:
                raise ParseError(f"duplicate sent_id {key!r} near line {line_no}")
            parses[key] = DependencyParse(heads=tuple(heads), labels=tuple(labels))
        sent_id, heads, labels = None, [], []

    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush(ln)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id"):
                _, _, value = body.partition("=")
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            raise ParseError(f"line {ln}: expected >= 8 tab-separated CoNLL-U columns")
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue
        try:
            idx = int(tok_id)
            head = int(cols[6])
        except ValueError:
            raise ParseError(f"line {ln}: non-integer token id or head") from None
        if idx != len(heads) + 1:
            raise ParseError(f"line {ln}: token ids must be consecutive from 1, got {tok_id}")
        heads.append(ROOT if head == 0 else head - 1)
        labels.append(cols[7])
    flush(len(text.splitlines()))
    return parses


def pair_with_instances(
    parses: dict[str, DependencyParse], instances: list[Instance]
) -> list[DependencyParse]:
    """Look up each instance's parse by id and verify token counts match."""
    out = []
    for inst in instances:
        if inst.id not in parses:
            raise AlignmentError(f"no dependency parse for instance {inst.id!r}")
        parse = parses[inst.id]
        if len(parse) != len(inst.tokens):
            raise AlignmentError(
                f"instance {inst.id!r}: parse has {len(parse)} tokens, sentence has {len(inst.tokens)}"
            )
        out.append(parse)
    return out


def build_adjacency(parse: DependencyParse, symmetrize: bool = True) -> np.ndarray:
    """Binary adjacency matrix with self-loops.

    Each word is adjacent to its children and itself; with ``symmetrize``
    (default) edges are made undirected.
    """
    m = len(parse)
    adj = np.eye(m, dtype=np.int8)
    for child, head in enumerate(parse.heads):
        if head == ROOT:
            continue
        adj[head, child] = 1
        if symmetrize:
            adj[child, head] = 1
    return adj
