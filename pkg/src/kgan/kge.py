"""Knowledge-graph embeddings: TransE / DistMult / ComplEx / ANALOGY.

Covers training on triple files, filtered link-prediction evaluation, the
text export/import format for embedding tables, and surface-form lookup of
tokens against entity aliases (the knowledge branch's input).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .optim import Adam

TRANSE, DISTMULT, COMPLEX, ANALOGY = "TransE", "DistMult", "ComplEx", "ANALOGY"
METHODS = (TRANSE, DISTMULT, COMPLEX, ANALOGY)


def _canonical_method(method: str) -> str:
    for m in METHODS:
        if method.lower() == m.lower():
            return m
    raise ConfigError(f"unknown KGE method {method!r}; expected one of {METHODS}")


def validate_dims(method: str, dim: int, analogy_real_dim: int | None = None) -> int:
    """Check dimension constraints; returns the real-block size for ANALOGY (0 otherwise)."""
    if dim < 1:
        raise ConfigError(f"embedding dim must be positive, got {dim}")
    if method == COMPLEX and dim % 2 != 0:
        raise ConfigError(f"ComplEx needs an even dim for the real/imaginary halves, got {dim}")
    if method != ANALOGY:
        return 0
    real = dim // 2 if analogy_real_dim is None else analogy_real_dim
    if not (0 <= real <= dim):
        raise ConfigError(f"ANALOGY real block {real} outside [0, {dim}]")
    if (dim - real) % 2 != 0:
        raise ConfigError(f"ANALOGY complex block has odd size {dim - real}; adjust dim or real block")
    return real


@dataclass
class KnowledgeGraph:
    entities: list[str]
    relations: list[str]
    triples: list[tuple[int, int, int]]

    def __post_init__(self):
        ne, nr = len(self.entities), len(self.relations)
        seen = set()
        for h, r, t in self.triples:
            if not (0 <= h < ne and 0 <= t < ne and 0 <= r < nr):
                raise DataError(f"triple ({h},{r},{t}) has out-of-range ids")
            if (h, r, t) in seen:
                raise DataError(f"duplicate triple ({h},{r},{t})")
            seen.add((h, r, t))

    @classmethod
    def from_text(cls, text: str) -> "KnowledgeGraph":
        """Parse 'head<TAB>relation<TAB>tail' lines."""
        ent: dict[str, int] = {}
        rel: dict[str, int] = {}
        triples = []
        seen = set()
        for ln, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise FormatError(f"triple file line {ln}: expected 3 tab-separated fields")
            h, r, t = parts
            hid = ent.setdefault(h, len(ent))
            rid = rel.setdefault(r, len(rel))
            tid = ent.setdefault(t, len(ent))
            if (hid, rid, tid) not in seen:
                seen.add((hid, rid, tid))
                triples.append((hid, rid, tid))
        return cls(entities=list(ent), relations=list(rel), triples=triples)

    @classmethod
    def load(cls, path) -> "KnowledgeGraph":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass
class KgeModel:
    method: str
    dim: int
    entity_emb: np.ndarray
    rel_emb: np.ndarray
    analogy_real_dim: int = 0
    loss_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.method = _canonical_method(self.method)
        if self.entity_emb.shape[1] != self.dim or self.rel_emb.shape[1] != self.dim:
            raise ConfigError("embedding tables disagree with declared dim")
        if not (np.isfinite(self.entity_emb).all() and np.isfinite(self.rel_emb).all()):
            raise ConfigError("non-finite embedding values")


def _complex_score(h, r, t):
    d = h.shape[-1] // 2
    a, b = h[..., :d], h[..., d:]
    c, dd = r[..., :d], r[..., d:]
    e, f = t[..., :d], t[..., d:]
    return np.sum(a * c * e + b * c * f + a * dd * f - b * dd * e, axis=-1)


def score_vectors(method: str, h: np.ndarray, r: np.ndarray, t: np.ndarray,
                  analogy_real_dim: int = 0) -> np.ndarray:
    """Plausibility score (higher = more plausible) for embedding vectors.

    TransE: -||h + r - t||2; DistMult: sum(h*r*t); ComplEx: Re<h, r, conj(t)>
    over paired real/imag halves; ANALOGY: DistMult on the real block plus
    ComplEx on the complex block.
    """
    if method == TRANSE:
        return -np.linalg.norm(h + r - t, axis=-1)
    if method == DISTMULT:
        return np.sum(h * r * t, axis=-1)
    if method == COMPLEX:
        return _complex_score(h, r, t)
    if method == ANALOGY:
        k = analogy_real_dim
        real = np.sum(h[..., :k] * r[..., :k] * t[..., :k], axis=-1)
        return real + _complex_score(h[..., k:], r[..., k:], t[..., k:])
    raise ConfigError(f"unknown KGE method {method!r}")


def _complex_grads(h, r, t, ds):
    d = h.shape[-1] // 2
    a, b = h[..., :d], h[..., d:]
    c, dd = r[..., :d], r[..., d:]
    e, f = t[..., :d], t[..., d:]
    w = ds[..., None]
    dh = np.concatenate([w * (c * e + dd * f), w * (c * f - dd * e)], axis=-1)
    dr = np.concatenate([w * (a * e + b * f), w * (a * f - b * e)], axis=-1)
    dt = np.concatenate([w * (a * c - b * dd), w * (b * c + a * dd)], axis=-1)
    return dh, dr, dt


def score_gradients(method: str, h, r, t, analogy_real_dim: int = 0, dscore=1.0):
    """Analytic gradients of the score w.r.t. (h, r, t); dscore broadcasts over a batch."""
    ds = np.asarray(dscore, dtype=h.dtype)
    if method == TRANSE:
        diff = h + r - t
        norm = np.linalg.norm(diff, axis=-1, keepdims=True)
        u = np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
        g = -ds[..., None] * u if ds.ndim else -ds * u
        return g, g.copy(), -g
    if method == DISTMULT:
        w = ds[..., None] if ds.ndim else ds
        return w * r * t, w * h * t, w * h * r
    if method == COMPLEX:
        return _complex_grads(h, r, t, np.broadcast_to(ds, h.shape[:-1]))
    if method == ANALOGY:
        k = analogy_real_dim
        w = np.broadcast_to(ds, h.shape[:-1])[..., None]
        dh_r, dr_r, dt_r = w * r[..., :k] * t[..., :k], w * h[..., :k] * t[..., :k], w * h[..., :k] * r[..., :k]
        dh_c, dr_c, dt_c = _complex_grads(h[..., k:], r[..., k:], t[..., k:], np.broadcast_to(ds, h.shape[:-1]))
        cat = lambda x, y: np.concatenate([x, y], axis=-1)
        return cat(dh_r, dh_c), cat(dr_r, dr_c), cat(dt_r, dt_c)
    raise ConfigError(f"unknown KGE method {method!r}")


def score(model: KgeModel, triple: tuple[int, int, int]) -> float:
    h, r, t = triple
    ne = model.entity_emb.shape[0]
    if not (0 <= h < ne and 0 <= t < ne and 0 <= r < model.rel_emb.shape[0]):
        raise DataError(f"triple ({h},{r},{t}) has out-of-range ids")
    return float(
        score_vectors(model.method, model.entity_emb[h], model.rel_emb[r],
                      model.entity_emb[t], model.analogy_real_dim)
    )


def score_all_tails(model: KgeModel, h: int, r: int) -> np.ndarray:
    hh = np.broadcast_to(model.entity_emb[h], model.entity_emb.shape)
    rr = np.broadcast_to(model.rel_emb[r], model.entity_emb.shape)
    return score_vectors(model.method, hh, rr, model.entity_emb, model.analogy_real_dim)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def train_kge(graph: KnowledgeGraph, method: str, dim: int, epochs: int = 200,
              lr: float = 0.05, margin: float = 1.0, neg_ratio: int = 5,
              seed: int = 14, analogy_real_dim: int | None = None) -> KgeModel:
    """Train entity/relation embeddings on a triple store.

    TransE uses margin ranking loss with uniform head/tail corruption and SGD,
    renormalizing entity rows to unit L2 after each update step. The semantic
    matching methods (DistMult/ComplEx/ANALOGY) use softplus logistic loss with
    ``neg_ratio`` negatives per positive and Adam. Deterministic per seed.
    """
    method = _canonical_method(method)
    real_dim = validate_dims(method, dim, analogy_real_dim)
    if not graph.triples:
        raise DataError("cannot train on an empty graph")

    rng = np.random.default_rng(seed)
    ne, nr = len(graph.entities), len(graph.relations)
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(ne, dim))
    rel = rng.uniform(-bound, bound, size=(nr, dim))
    if method == TRANSE:
        rel /= np.linalg.norm(rel, axis=1, keepdims=True)
        ent /= np.linalg.norm(ent, axis=1, keepdims=True)

    pos = np.asarray(graph.triples, dtype=np.int64)
    n_pos = pos.shape[0]
    model = KgeModel(method=method, dim=dim, entity_emb=ent, rel_emb=rel,
                     analogy_real_dim=real_dim)
    opt = None if method == TRANSE else Adam({"ent": ent, "rel": rel}, lr=lr)

    for _ in range(epochs):
        # corrupt head or tail with equal probability, uniform replacement
        neg = np.repeat(pos, neg_ratio, axis=0)
        corrupt_head = rng.random(neg.shape[0]) < 0.5
        replacements = rng.integers(0, ne, size=neg.shape[0])
        neg[corrupt_head, 0] = replacements[corrupt_head]
        neg[~corrupt_head, 2] = replacements[~corrupt_head]

        if method == TRANSE:
            ph, pr, pt = ent[pos[:, 0]], rel[pos[:, 1]], ent[pos[:, 2]]
            nh, nr_, nt = ent[neg[:, 0]], rel[neg[:, 1]], ent[neg[:, 2]]
            d_pos = np.linalg.norm(ph + pr - pt, axis=1)
            d_neg = np.linalg.norm(nh + nr_ - nt, axis=1)
            viol = margin + np.repeat(d_pos, neg_ratio) - d_neg
            active = viol > 0
            loss = float(np.sum(np.maximum(viol, 0.0)))

            g_ent = np.zeros_like(ent)
            g_rel = np.zeros_like(rel)
            # d(distance)/dh = u, /dt = -u, /dr = u
            up = (ph + pr - pt) / np.maximum(d_pos, 1e-12)[:, None]
            un = (nh + nr_ - nt) / np.maximum(d_neg, 1e-12)[:, None]
            wp = active.reshape(n_pos, neg_ratio).sum(axis=1).astype(ent.dtype)[:, None]
            np.add.at(g_ent, pos[:, 0], wp * up)
            np.add.at(g_ent, pos[:, 2], -wp * up)
            np.add.at(g_rel, pos[:, 1], wp * up)
            wn = active.astype(ent.dtype)[:, None]
            np.add.at(g_ent, neg[:, 0], -wn * un)
            np.add.at(g_ent, neg[:, 2], wn * un)
            np.add.at(g_rel, neg[:, 1], -wn * un)
            ent -= lr * g_ent
            rel -= lr * g_rel
            ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
        else:
            trip = np.concatenate([pos, neg], axis=0)
            y = np.concatenate([np.ones(n_pos), -np.ones(neg.shape[0])])
            h, r, t = ent[trip[:, 0]], rel[trip[:, 1]], ent[trip[:, 2]]
            s = score_vectors(method, h, r, t, real_dim)
            loss = float(np.sum(_softplus(-y * s)))
            ds = -y * _sigmoid(-y * s)
            dh, dr, dt = score_gradients(method, h, r, t, real_dim, dscore=ds)
            g_ent = np.zeros_like(ent)
            g_rel = np.zeros_like(rel)
            np.add.at(g_ent, trip[:, 0], dh)
            np.add.at(g_ent, trip[:, 2], dt)
            np.add.at(g_rel, trip[:, 1], dr)
            opt.step({"ent": g_ent, "rel": g_rel})

        model.loss_history.append(loss)
    return model


@dataclass(frozen=True)
class LinkPredictionReport:
    mrr: float
    hits1: float
    hits10: float


def link_prediction_eval(model: KgeModel, graph: KnowledgeGraph,
                         triples: list[tuple[int, int, int]] | None = None) -> LinkPredictionReport:
    """Filtered tail-prediction ranking over all entities.

    For each triple the true tail is ranked against every entity, with the
    graph's other true tails for the same (head, relation) removed from the
    candidate list. Ties are broken optimistically (rank = 1 + #strictly-higher).
    """
    eval_triples = graph.triples if triples is None else triples
    known: dict[tuple[int, int], set[int]] = {}
    for h, r, t in graph.triples:
        known.setdefault((h, r), set()).add(t)

    rr_sum = hits1 = hits10 = 0
    for h, r, t in eval_triples:
        scores = score_all_tails(model, h, r)
        true_score = scores[t]
        others = known.get((h, r), set()) - {t}
        if others:
            scores = scores.copy()
            scores[list(others)] = -np.inf
        rank = 1 + int(np.sum(scores > true_score))
        rr_sum += 1.0 / rank
        hits1 += rank <= 1
        hits10 += rank <= 10
    n = max(len(eval_triples), 1)
    return LinkPredictionReport(mrr=rr_sum / n, hits1=hits1 / n, hits10=hits10 / n)


def _normalize_surface(form: str) -> str:
    return re.sub(r"[\s_]+", " ", form.strip().lower())


class KnowledgeTable:
    """Entity-name-keyed embedding table with surface-form alias lookup."""

    def __init__(self, names: list[str], vectors: np.ndarray,
                 aliases: dict[str, list[str]] | None = None):
        if len(names) != vectors.shape[0]:
            raise FormatError("entity count disagrees with vector rows")
        if len(set(names)) != len(names):
            raise FormatError("duplicate entity names in table")
        self.names = list(names)
        self.vectors = vectors
        self._alias_rows: dict[str, list[int]] = {}
        for i, name in enumerate(self.names):
            forms = aliases.get(name, [name]) if aliases else [name]
            for form in forms:
                self._alias_rows.setdefault(_normalize_surface(form), []).append(i)
        self.aliases = aliases or {}

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self):
        return len(self.names)

    def rows_for(self, token: str) -> list[int]:
        return self._alias_rows.get(_normalize_surface(token), [])

    def lookup(self, token: str) -> tuple[np.ndarray, bool]:
        """Embedding for a surface form: mean over matching entities, or a
        zero vector flagged OOV when nothing matches."""
        rows = self.rows_for(token)
        if not rows:
            return np.zeros(self.dim, dtype=self.vectors.dtype), True
        return self.vectors[rows].mean(axis=0), False


def word_to_entity(token: str, table: KnowledgeTable) -> tuple[np.ndarray, bool]:
    return table.lookup(token)


def export_embeddings(model: KgeModel, graph: KnowledgeGraph, path,
                      aliases: dict[str, list[str]] | None = None) -> None:
    """Write entity embeddings as text ('count dim' header, then one
    'name v1 ... vd' line per entity) plus a JSON metadata sidecar."""
    path = Path(path)
    lines = [f"{len(graph.entities)} {model.dim}"]
    for name, row in zip(graph.entities, model.entity_emb):
        lines.append(name + " " + " ".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "method": model.method,
        "dim": model.dim,
        "analogy_real_dim": model.analogy_real_dim,
        "entities": len(graph.entities),
    }
    if aliases:
        meta["aliases"] = aliases
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_pretrained(path) -> KnowledgeTable:
    """Load an embedding text file (with optional .meta.json sidecar) into a table."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise FormatError(f"{path}: first line must be 'count dim'")
    count, dim = int(header[0]), int(header[1])
    names, rows = [], []
    for ln, line in enumerate(lines[1 : count + 1], start=2):
        parts = line.rstrip().split(" ")
        if len(parts) < dim + 1:
            raise FormatError(f"{path} line {ln}: expected {dim} floats after the entity name")
        name = " ".join(parts[: len(parts) - dim])
        try:
            vec = [float(x) for x in parts[len(parts) - dim :]]
        except ValueError:
            raise FormatError(f"{path} line {ln}: non-numeric embedding value") from None
        names.append(name)
        rows.append(vec)
    if len(names) != count:
        raise FormatError(f"{path}: header promised {count} entities, found {len(names)}")

    aliases = None
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("dim") not in (None, dim):
            raise FormatError(f"{meta_path}: metadata dim {meta['dim']} disagrees with file dim {dim}")
        aliases = meta.get("aliases")
    return KnowledgeTable(names, np.asarray(rows, dtype=np.float64), aliases)
