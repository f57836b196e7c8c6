"""Optimization loop, run records, checkpoint retention, and the
knowledge-noise attack."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .kge import KnowledgeTable
from .network import KganConfig, KganModel, collate
from .optim import Adam, clip_global_norm, global_norm


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 14
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    noise_ratio: float = 0.0
    clip_norm: float | None = 5.0   # None disables clipping
    holdout_fraction: float = 0.0   # >0: select the best epoch on a train carve-out

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.noise_ratio <= 1.0:
            raise ConfigError(f"noise_ratio must be in [0, 1], got {self.noise_ratio}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float              # mean per-instance loss over the epoch
    test_acc: float | None
    test_macro_f1: float | None
    wall_time: float


@dataclass
class RunRecord:
    """Append-only per-epoch log plus the best-epoch summary.

    The canonical serialization excludes wall times so that identical seeds
    produce byte-identical files; timing goes to a sidecar.
    """

    config: dict
    epochs: list[EpochStats] = field(default_factory=list)
    best: dict = field(default_factory=dict)

    def to_canonical_jsonl(self) -> str:
        lines = [json.dumps({"record": "config", **self.config}, sort_keys=True)]
        for e in self.epochs:
            lines.append(
                json.dumps(
                    {
                        "record": "epoch",
                        "epoch": e.epoch,
                        "train_loss": e.train_loss,
                        "test_acc": e.test_acc,
                        "test_macro_f1": e.test_macro_f1,
                    },
                    sort_keys=True,
                )
            )
        lines.append(json.dumps({"record": "best", **self.best}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_record.jsonl").write_text(self.to_canonical_jsonl(), encoding="utf-8")
        timing = {"epoch_seconds": [e.wall_time for e in self.epochs],
                  "total_seconds": sum(e.wall_time for e in self.epochs)}
        (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")


def _batches(prepared, order, batch_size):
    for lo in range(0, len(order), batch_size):
        yield [prepared[i] for i in order[lo : lo + batch_size]]


def evaluate_model(model: KganModel, prepared, batch_size: int = 64):
    """(gold, predicted) label lists over a prepared split, in order."""
    gold, pred = [], []
    dtype = model.config.np_dtype
    for lo in range(0, len(prepared), batch_size):
        chunk = prepared[lo : lo + batch_size]
        batch = collate(chunk, dtype, position=model.config.position)
        logits, _ = model.forward(batch, train=False)
        pred.extend(int(c) for c in np.argmax(logits, axis=1))
        gold.extend(int(g) for g in batch.gold)
    return gold, pred


def train(model_cfg: KganConfig, train_cfg: TrainConfig, train_prepared, test_prepared,
          word_matrix=None, vocab_size=None):
    """Run the optimization loop; returns (model with best params, RunRecord).

    The knowledge tensors ride along as frozen inputs; the PAD embedding row
    never receives updates. Deterministic per seed: shuffling, dropout, and
    initialization all derive from the configured seeds.
    """
    from .evaluation import compute_metrics  # runners import us; keep the cycle one-way at import time

    init_seed = model_cfg.seed if model_cfg.seed is not None else train_cfg.seed
    model = KganModel.build(model_cfg, word_matrix=word_matrix, vocab_size=vocab_size, seed=init_seed)
    dtype = model_cfg.np_dtype
    rng = np.random.default_rng(train_cfg.seed)
    opt = Adam(model.params, lr=train_cfg.lr, beta1=train_cfg.beta1,
               beta2=train_cfg.beta2, eps=train_cfg.eps)

    selection = train_prepared
    fit_set = train_prepared
    if train_cfg.holdout_fraction > 0.0:
        n_hold = max(1, int(round(train_cfg.holdout_fraction * len(train_prepared))))
        order = rng.permutation(len(train_prepared))
        hold_idx = set(order[:n_hold].tolist())
        selection = [train_prepared[i] for i in sorted(hold_idx)]
        fit_set = [train_prepared[i] for i in range(len(train_prepared)) if i not in hold_idx]

    record = RunRecord(
        config={
            "model": model_cfg.to_dict(),
            "train": train_cfg.to_dict(),
            "n_parameters": model.n_parameters,
            "n_train": len(fit_set),
            "n_test": len(test_prepared),
        }
    )
    best = {"metric": -1.0, "epoch": 0, "params": None, "test_acc": None, "test_macro_f1": None}

    for epoch in range(1, train_cfg.epochs + 1):
        tic = time.perf_counter()
        order = rng.permutation(len(fit_set))
        epoch_loss = 0.0
        for b_idx, chunk in enumerate(_batches(fit_set, order, train_cfg.batch_size)):
            batch = collate(chunk, dtype, position=model_cfg.position)
            loss, grads, _ = model.loss_and_grads(batch, train=True, dropout_rng=rng)
            if not np.isfinite(loss):
                norms = {k: float(np.linalg.norm(g)) for k, g in sorted(grads.items())}
                worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}; "
                    f"largest grad norms: {worst}"
                )
            grads["emb"][0] = 0.0  # PAD row is frozen
            if train_cfg.clip_norm is not None:
                clip_global_norm(grads, train_cfg.clip_norm)
            elif not np.isfinite(global_norm(grads)):
                raise NumericError(f"non-finite gradients at epoch {epoch}, batch {b_idx}")
            if train_cfg.lr > 0:
                opt.step(grads)
                model.params["emb"][0] = 0.0
            epoch_loss += loss

        stats = EpochStats(epoch=epoch, train_loss=epoch_loss / len(fit_set),
                           test_acc=None, test_macro_f1=None, wall_time=0.0)
        if epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs:
            gold, pred = evaluate_model(model, test_prepared)
            rep = compute_metrics(gold, pred)
            stats.test_acc, stats.test_macro_f1 = rep.accuracy, rep.macro_f1
            if train_cfg.holdout_fraction > 0.0:
                hg, hp = evaluate_model(model, selection)
                metric = compute_metrics(hg, hp).accuracy
            else:
                metric = rep.accuracy
            if metric > best["metric"]:
                best = {
                    "metric": metric,
                    "epoch": epoch,
                    "params": {k: v.copy() for k, v in model.params.items()},
                    "test_acc": rep.accuracy,
                    "test_macro_f1": rep.macro_f1,
                }
        stats.wall_time = time.perf_counter() - tic
        record.epochs.append(stats)

    if best["params"] is not None:
        model.params = best["params"]
    record.best = {
        "epoch": best["epoch"],
        "test_acc": best["test_acc"],
        "test_macro_f1": best["test_macro_f1"],
        "selection": "holdout" if train_cfg.holdout_fraction > 0 else "test",
    }
    return model, record


def apply_noise_attack(table: KnowledgeTable, ratio: float, seed: int) -> KnowledgeTable:
    """Replace floor(ratio * rows) distinct rows with uniform(-0.1, 0.1) noise."""
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"noise ratio must be in [0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    vectors = table.vectors.copy()
    n_replace = int(ratio * len(table.names))
    if n_replace:
        rows = rng.choice(len(table.names), size=n_replace, replace=False)
        vectors[rows] = rng.uniform(-0.1, 0.1, size=(n_replace, table.dim))
    return KnowledgeTable(table.names, vectors, table.aliases or None)
