"""Word-embedding matrix construction, relative position weighting, and
per-instance input tensor assembly for the three branches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Instance, Vocabulary
from .errors import FormatError
from .kge import KnowledgeTable


def load_static_vectors(path, vocab: Vocabulary, seed: int = 14, dim: int | None = None,
                        dtype=np.float64) -> np.ndarray:
    """Build the |V| x d_w matrix from a pretrained text file (token + floats per line).

    Rows for vocabulary words present in the file are copied verbatim; missing
    rows are initialized uniform(-0.1, 0.1) from the seed; the PAD row is zero.
    """
    wanted = set(vocab.token_to_index)
    found: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise FormatError(f"vector file line {ln}: no embedding values")
            if len(parts) < dim + 1:
                raise FormatError(f"vector file line {ln}: expected {dim} floats, got {len(parts) - 1}")
            token = " ".join(parts[: len(parts) - dim])
            if token not in wanted:
                # multiword keys and out-of-vocabulary entries are skipped, but a
                # plain token followed by the wrong number of floats is an error
                if len(parts) != dim + 1 and all(_is_float(p) for p in parts[1:]):
                    raise FormatError(f"vector file line {ln}: expected {dim} floats, got {len(parts) - 1}")
                continue
            try:
                found[token] = np.array([float(x) for x in parts[len(parts) - dim :]], dtype=dtype)
            except ValueError:
                raise FormatError(f"vector file line {ln}: non-numeric embedding value") from None

    if dim is None:
        raise FormatError("vector file contains no embedding rows")
    rng = np.random.default_rng(seed)
    matrix = np.empty((len(vocab), dim), dtype=dtype)
    for token, idx in vocab.token_to_index.items():
        if idx == 0:
            matrix[idx] = 0.0
        elif token in found:
            matrix[idx] = found[token]
        else:
            matrix[idx] = rng.uniform(-0.1, 0.1, size=dim)
    return matrix


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def position_weights(m: int, aspect_start: int, aspect_len: int, dtype=np.float64) -> np.ndarray:
    """Per-token weights 1 - dist/m, where dist is the distance to the nearest
    aspect token (0 inside the span)."""
    idx = np.arange(m)
    dist = np.zeros(m, dtype=dtype)
    before = idx < aspect_start
    after = idx >= aspect_start + aspect_len
    dist[before] = aspect_start - idx[before]
    dist[after] = idx[after] - (aspect_start + aspect_len - 1)
    return 1.0 - dist / m


@dataclass
class InstanceTensors:
    x_sentence: np.ndarray  # m x d_w
    x_aspect: np.ndarray    # n x d_w
    k_sentence: np.ndarray  # m x d_k
    k_aspect: np.ndarray    # n x d_k
    oov_mask: np.ndarray    # m bools, true where the token had no knowledge entity
    aspect_oov_mask: np.ndarray


def embed_instance(instance: Instance, word_matrix: np.ndarray, vocab: Vocabulary,
                   knowledge_table: KnowledgeTable, position: bool = True) -> InstanceTensors:
    """Materialize the sentence/aspect word embeddings and knowledge embeddings.

    Position weighting (when enabled) scales the sentence-side rows only.
    """
    sent_idx = vocab.indices(instance.tokens)
    asp_idx = vocab.indices(instance.aspect_tokens)
    x_s = word_matrix[sent_idx].copy()
    x_t = word_matrix[asp_idx].copy()
    if position:
        w = position_weights(len(instance.tokens), instance.aspect_start, instance.aspect_len,
                             dtype=word_matrix.dtype)
        x_s *= w[:, None]

    def knowledge_rows(tokens):
        rows = np.empty((len(tokens), knowledge_table.dim), dtype=word_matrix.dtype)
        oov = np.empty(len(tokens), dtype=bool)
        for i, tok in enumerate(tokens):
            vec, miss = knowledge_table.lookup(tok)
            rows[i] = vec
            oov[i] = miss
        return rows, oov

    k_s, oov_s = knowledge_rows(instance.tokens)
    k_t, oov_t = knowledge_rows(instance.aspect_tokens)
    return InstanceTensors(x_sentence=x_s, x_aspect=x_t, k_sentence=k_s, k_aspect=k_t,
                           oov_mask=oov_s, aspect_oov_mask=oov_t)
