"""Shared fixtures: a small learnable synthetic corpus, random instance
builders for gradient checks, and discovery of user-supplied benchmark data."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from kgan.corpus import Dataset, Instance, build_vocab
from kgan.depparse import DependencyParse, build_adjacency
from kgan.embeddings import position_weights
from kgan.kge import KnowledgeTable
from kgan.pipeline import PreparedInstance, prepare_split

ASPECTS = ["food", "service", "screen", "battery", "pizza"]
OPINIONS = {
    0: ["great", "tasty", "excellent"],
    1: ["okay", "fine", "average"],
    2: ["awful", "terrible", "slow"],
}


def synth_instances(n, seed, prefix):
    """Sentences whose polarity is decided by the opinion word, two templates."""
    rng = np.random.default_rng(seed)
    out = []
    parses = {}
    for i in range(n):
        polarity = int(rng.integers(0, 3))
        asp = ASPECTS[rng.integers(0, len(ASPECTS))]
        op = OPINIONS[polarity][rng.integers(0, 3)]
        if rng.random() < 0.5:
            tokens = ("the", asp, "was", op, ".")
            heads = (1, 3, 3, -1, 3)
            start = 1
        else:
            tokens = (op, asp, ".")
            heads = (1, -1, 1)
            start = 1
        inst = Instance(tokens=tokens, aspect_start=start, aspect_len=1,
                        polarity=polarity, id=f"{prefix}-{i}")
        out.append(inst)
        parses[inst.id] = DependencyParse(heads=heads)
    return out, parses


def synth_table(seed=5, d_k=6) -> KnowledgeTable:
    rng = np.random.default_rng(seed)
    names, aliases = [], {}
    for pol, words in OPINIONS.items():
        for w in words:
            name = f"{w}.a.01"
            names.append(name)
            aliases[name] = [w]
    for a in ASPECTS:
        name = f"{a}.n.01"
        names.append(name)
        aliases[name] = [a]
    vectors = rng.normal(scale=0.5, size=(len(names), d_k))
    return KnowledgeTable(names, vectors, aliases)


@pytest.fixture(scope="session")
def world():
    """Prepared train/test splits over the synthetic corpus."""
    train_insts, train_parses = synth_instances(40, seed=1, prefix="syn-train")
    test_insts, test_parses = synth_instances(20, seed=2, prefix="syn-test")
    train_ds = Dataset(name="custom", split="train", instances=train_insts)
    test_ds = Dataset(name="custom", split="test", instances=test_insts)
    vocab = build_vocab([train_ds, test_ds])
    table = synth_table()
    return {
        "train_ds": train_ds,
        "test_ds": test_ds,
        "train_parses": train_parses,
        "test_parses": test_parses,
        "vocab": vocab,
        "table": table,
        "train": prepare_split(train_ds, train_parses, vocab, table),
        "test": prepare_split(test_ds, test_parses, vocab, table),
    }


def make_random_prepared(rng, m, n, d_k, vocab_size, idx=0):
    """A random but structurally valid instance (random tree, random knowledge rows)."""
    heads = [-1] + [int(rng.integers(0, i)) for i in range(1, m)]
    parse = DependencyParse(heads=tuple(heads))
    start = int(rng.integers(0, m - n + 1))
    rows = tuple(
        tuple(int(r) for r in rng.choice(3, size=rng.integers(0, 3), replace=False)) for _ in range(m)
    )
    table_vec = rng.normal(size=(3, d_k))

    def materialize(row_sets):
        out = np.zeros((len(row_sets), d_k))
        for i, rs in enumerate(row_sets):
            if rs:
                out[i] = table_vec[list(rs)].mean(axis=0)
        return out

    aspect_rows = rows[start : start + n]
    return PreparedInstance(
        id=f"rand-{idx}",
        tokens=tuple(f"w{j}" for j in range(m)),
        token_ids=np.asarray(rng.integers(1, vocab_size, size=m), dtype=np.int64),
        aspect_ids=np.asarray(rng.integers(1, vocab_size, size=n), dtype=np.int64),
        aspect_start=start,
        aspect_len=n,
        polarity=int(rng.integers(0, 3)),
        pos_weights=position_weights(m, start, n),
        adjacency=build_adjacency(parse, symmetrize=True),
        entity_rows=rows,
        aspect_entity_rows=aspect_rows,
        k_sent=materialize(rows),
        k_asp=materialize(aspect_rows),
    )


# --------------------------------------------------- user-supplied benchmarks

BENCHMARK_FILES = {
    ("laptop14", "train"): "laptop14_train.xml",
    ("laptop14", "test"): "laptop14_test.xml",
    ("restaurant14", "train"): "restaurant14_train.xml",
    ("restaurant14", "test"): "restaurant14_test.xml",
    ("restaurant15", "train"): "restaurant15_train.xml",
    ("restaurant15", "test"): "restaurant15_test.xml",
    ("restaurant16", "train"): "restaurant16_train.xml",
    ("restaurant16", "test"): "restaurant16_test.xml",
    ("twitter", "train"): "twitter_train.raw",
    ("twitter", "test"): "twitter_test.raw",
}


def data_dir() -> Path | None:
    root = os.environ.get("KGAN_DATA_DIR")
    if root and Path(root).is_dir():
        return Path(root)
    return None


def benchmark_path(name, split) -> Path | None:
    root = data_dir()
    if root is None:
        return None
    path = root / BENCHMARK_FILES[(name, split)]
    return path if path.exists() else None


def aux_path(filename) -> Path | None:
    root = data_dir()
    if root is None:
        return None
    path = root / filename
    return path if path.exists() else None


def require_benchmark(name, split) -> Path:
    path = benchmark_path(name, split)
    if path is None:
        pytest.skip(
            f"benchmark file {BENCHMARK_FILES[(name, split)]} not found; "
            f"set KGAN_DATA_DIR to a directory with the raw datasets"
        )
    return path


def full_runs_enabled() -> bool:
    return os.environ.get("KGAN_RUN_FULL", "") == "1"
