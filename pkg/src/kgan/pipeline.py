"""Assembly of model-ready instances from corpus + parses + embeddings,
plus the on-disk prepare cache used by the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import Dataset, Vocabulary
from .depparse import DependencyParse, build_adjacency, pair_with_instances
from .embeddings import position_weights
from .errors import FormatError
from .kge import KnowledgeTable

CACHE_VERSION = 1


@dataclass
class PreparedInstance:
    """Everything the network needs for one instance, knowledge materialized."""

    id: str
    tokens: tuple[str, ...]
    token_ids: np.ndarray
    aspect_ids: np.ndarray
    aspect_start: int
    aspect_len: int
    polarity: int
    pos_weights: np.ndarray
    adjacency: np.ndarray
    entity_rows: tuple[tuple[int, ...], ...]
    aspect_entity_rows: tuple[tuple[int, ...], ...]
    k_sent: np.ndarray
    k_asp: np.ndarray


def _knowledge_rows(tokens, table: KnowledgeTable) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(table.rows_for(tok)) for tok in tokens)


def _materialize(rows_per_token, table: KnowledgeTable) -> np.ndarray:
    out = np.zeros((len(rows_per_token), table.dim), dtype=np.float64)
    for i, rows in enumerate(rows_per_token):
        if rows:
            out[i] = table.vectors[list(rows)].mean(axis=0)
    return out


def prepare_split(dataset: Dataset, parses: dict[str, DependencyParse], vocab: Vocabulary,
                  table: KnowledgeTable, symmetrize: bool = True) -> list[PreparedInstance]:
    """Join instances with their parses and knowledge rows; fails loudly on
    missing parses or token-count mismatches."""
    aligned = pair_with_instances(parses, dataset.instances)
    prepared = []
    for inst, parse in zip(dataset.instances, aligned):
        m = len(inst.tokens)
        ent_rows = _knowledge_rows(inst.tokens, table)
        asp_rows = _knowledge_rows(inst.aspect_tokens, table)
        prepared.append(
            PreparedInstance(
                id=inst.id,
                tokens=inst.tokens,
                token_ids=np.asarray(vocab.indices(inst.tokens), dtype=np.int64),
                aspect_ids=np.asarray(vocab.indices(inst.aspect_tokens), dtype=np.int64),
                aspect_start=inst.aspect_start,
                aspect_len=inst.aspect_len,
                polarity=inst.polarity,
                pos_weights=position_weights(m, inst.aspect_start, inst.aspect_len),
                adjacency=build_adjacency(parse, symmetrize=symmetrize),
                entity_rows=ent_rows,
                aspect_entity_rows=asp_rows,
                k_sent=_materialize(ent_rows, table),
                k_asp=_materialize(asp_rows, table),
            )
        )
    return prepared


def materialize_knowledge(prepared: list[PreparedInstance], table: KnowledgeTable) -> list[PreparedInstance]:
    """Rebuild the knowledge tensors from stored entity rows (used after a
    noise attack perturbs the table)."""
    return [
        replace(p, k_sent=_materialize(p.entity_rows, table), k_asp=_materialize(p.aspect_entity_rows, table))
        for p in prepared
    ]


def fingerprint_files(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        if p is None:
            h.update(b"<none>")
            continue
        h.update(str(p).encode("utf-8"))
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def write_prepare_cache(path, prepared: list[PreparedInstance], fingerprint: str = ""):
    """One JSON line per instance; adjacency stored as dense 0/1 integer rows."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"record": "header", "version": CACHE_VERSION, "fingerprint": fingerprint}) + "\n")
        for p in prepared:
            f.write(
                json.dumps(
                    {
                        "id": p.id,
                        "tokens": list(p.tokens),
                        "token_ids": p.token_ids.tolist(),
                        "aspect_ids": p.aspect_ids.tolist(),
                        "aspect_start": p.aspect_start,
                        "aspect_len": p.aspect_len,
                        "polarity": p.polarity,
                        "pos_weights": p.pos_weights.tolist(),
                        "adjacency": p.adjacency.astype(int).tolist(),
                        "entity_rows": [list(r) for r in p.entity_rows],
                        "aspect_entity_rows": [list(r) for r in p.aspect_entity_rows],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_prepare_cache(path, table: KnowledgeTable):
    """Returns (prepared, fingerprint); knowledge tensors are rebuilt from the table."""
    prepared = []
    fingerprint = ""
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if ln == 1:
                if rec.get("record") != "header" or rec.get("version") != CACHE_VERSION:
                    raise FormatError(f"{path}: unsupported prepare-cache header")
                fingerprint = rec.get("fingerprint", "")
                continue
            ent_rows = tuple(tuple(r) for r in rec["entity_rows"])
            asp_rows = tuple(tuple(r) for r in rec["aspect_entity_rows"])
            prepared.append(
                PreparedInstance(
                    id=rec["id"],
                    tokens=tuple(rec["tokens"]),
                    token_ids=np.asarray(rec["token_ids"], dtype=np.int64),
                    aspect_ids=np.asarray(rec["aspect_ids"], dtype=np.int64),
                    aspect_start=rec["aspect_start"],
                    aspect_len=rec["aspect_len"],
                    polarity=rec["polarity"],
                    pos_weights=np.asarray(rec["pos_weights"], dtype=np.float64),
                    adjacency=np.asarray(rec["adjacency"], dtype=np.int8),
                    entity_rows=ent_rows,
                    aspect_entity_rows=asp_rows,
                    k_sent=_materialize(ent_rows, table),
                    k_asp=_materialize(asp_rows, table),
                )
            )
    return prepared, fingerprint
