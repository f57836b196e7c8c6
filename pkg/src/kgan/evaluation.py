"""Metrics, experiment matrices (branch / fusion / noise ablations), and
attention case-study export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DataError, LabelError
from .network import BRANCHES, KganConfig, collate

_N_CLASSES = 3


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    macro_f1: float
    precision: tuple[float, float, float]
    recall: tuple[float, float, float]
    f1: tuple[float, float, float]
    confusion: tuple[tuple[int, ...], ...]  # rows = gold, cols = predicted
    total: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "confusion": [list(r) for r in self.confusion],
            "total": self.total,
        }


def compute_metrics(gold, pred) -> MetricReport:
    """Accuracy, per-class precision/recall/F1, and macro-F1 over 3-way labels.

    Undefined per-class quantities (empty denominators) are substituted with 0,
    which matters for the near-empty neutral classes of the 15/16 restaurant sets.
    """
    if len(gold) != len(pred):
        raise DataError(f"gold and pred lengths differ: {len(gold)} vs {len(pred)}")
    if len(gold) == 0:
        raise DataError("cannot compute metrics over zero instances")
    confusion = np.zeros((_N_CLASSES, _N_CLASSES), dtype=np.int64)
    for g, p in zip(gold, pred):
        if not (0 <= g < _N_CLASSES and 0 <= p < _N_CLASSES):
            raise LabelError(f"label pair ({g}, {p}) outside {{0,1,2}}")
        confusion[g, p] += 1

    total = int(confusion.sum())
    accuracy = float(np.trace(confusion)) / total
    precision, recall, f1 = [], [], []
    for c in range(_N_CLASSES):
        tp = float(confusion[c, c])
        pred_c = float(confusion[:, c].sum())
        gold_c = float(confusion[c, :].sum())
        p = tp / pred_c if pred_c > 0 else 0.0
        r = tp / gold_c if gold_c > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return MetricReport(
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
        total=total,
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass
class Cell:
    key: str
    kind: str
    config: dict
    report: MetricReport | None
    seed: int
    group: str

    @property
    def hash(self) -> str:
        return config_hash(self.config)


@dataclass
class ExperimentMatrix:
    name: str
    cells: dict[str, Cell] = field(default_factory=dict)

    def add(self, cell: Cell):
        if cell.key in self.cells:
            raise DataError(f"duplicate experiment cell {cell.key!r}")
        self.cells[cell.key] = cell

    def aggregate(self) -> dict[str, dict]:
        """Mean/std of accuracy and macro-F1 over seeds, per cell group."""
        groups: dict[str, list[Cell]] = {}
        for cell in self.cells.values():
            groups.setdefault(cell.group, []).append(cell)
        out = {}
        for group, cells in sorted(groups.items()):
            accs = np.array([c.report.accuracy for c in cells])
            f1s = np.array([c.report.macro_f1 for c in cells])
            out[group] = {
                "n": len(cells),
                "mean_acc": float(accs.mean()),
                "std_acc": float(accs.std()),
                "mean_f1": float(f1s.mean()),
                "std_f1": float(f1s.std()),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "cells": {
                k: {
                    "kind": c.kind,
                    "seed": c.seed,
                    "group": c.group,
                    "config": c.config,
                    "config_hash": c.hash,
                    "report": c.report.to_dict(),
                }
                for k, c in sorted(self.cells.items())
            },
            "aggregate": self.aggregate(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def format_aggregate_table(matrix: ExperimentMatrix) -> str:
    rows = [("cell", "n", "acc (mean +/- std)", "macro-F1 (mean +/- std)")]
    for group, agg in matrix.aggregate().items():
        rows.append(
            (
                group,
                str(agg["n"]),
                f"{100 * agg['mean_acc']:.2f} +/- {100 * agg['std_acc']:.2f}",
                f"{100 * agg['mean_f1']:.2f} +/- {100 * agg['std_f1']:.2f}",
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def _cell_config(model_cfg: KganConfig, train_cfg, extra: dict) -> dict:
    return {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), **extra}


def _train_cell(task):
    """One experiment cell: train, evaluate, report. Top-level so worker
    processes can pickle it; cells are pure functions of their task tuple."""
    from .training import evaluate_model, train

    model_cfg, train_cfg, train_prepared, test_prepared, word_matrix, vocab_size = task
    model, _ = train(model_cfg, train_cfg, train_prepared, test_prepared,
                     word_matrix=word_matrix, vocab_size=vocab_size)
    gold, pred = evaluate_model(model, test_prepared)
    return compute_metrics(gold, pred)


def _run_cells(tasks, workers: int):
    """Execute independent cells, optionally across worker processes; results
    come back in task order either way."""
    if workers <= 1:
        return [_train_cell(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_cell, tasks))


def branch_combinations() -> list[tuple[str, ...]]:
    combos = []
    for k in (1, 2, 3):
        combos.extend(combinations(BRANCHES, k))
    return combos


def run_branch_ablation(train_prepared, test_prepared, model_cfg: KganConfig, train_cfg,
                        seeds, word_matrix=None, vocab_size=None,
                        include_headline: bool = True, workers: int = 1) -> ExperimentMatrix:
    """All 7 branch combinations under concat+MLP fusion, per seed; the full
    triple is additionally run with hierarchical fusion as the headline cell."""
    from dataclasses import replace

    matrix = ExperimentMatrix(name="branch_ablation")
    cells, tasks = [], []
    for branches in branch_combinations():
        for seed in seeds:
            cfg = replace(model_cfg, branches=branches, fusion="concat")
            tcfg = replace(train_cfg, seed=seed)
            group = "+".join(b[0] for b in branches)
            cells.append(Cell(key=f"branches={group}|seed={seed}", kind="branch", seed=seed,
                              group=f"branches={group}",
                              config=_cell_config(cfg, tcfg, {"kind": "branch"}), report=None))
            tasks.append((cfg, tcfg, train_prepared, test_prepared, word_matrix, vocab_size))
    if include_headline:
        for seed in seeds:
            cfg = replace(model_cfg, branches=BRANCHES, fusion="hierarchical")
            tcfg = replace(train_cfg, seed=seed)
            cells.append(Cell(key=f"headline|seed={seed}", kind="headline", seed=seed,
                              group="headline",
                              config=_cell_config(cfg, tcfg, {"kind": "headline"}), report=None))
            tasks.append((cfg, tcfg, train_prepared, test_prepared, word_matrix, vocab_size))
    for cell, report in zip(cells, _run_cells(tasks, workers)):
        cell.report = report
        matrix.add(cell)
    return matrix


def run_fusion_ablation(train_prepared, test_prepared, model_cfg: KganConfig, train_cfg,
                        seeds, word_matrix=None, vocab_size=None, workers: int = 1) -> ExperimentMatrix:
    from dataclasses import replace

    matrix = ExperimentMatrix(name="fusion_ablation")
    cells, tasks = [], []
    for fusion in ("hierarchical", "concat", "sum", "attention", "voting"):
        for seed in seeds:
            cfg = replace(model_cfg, branches=BRANCHES, fusion=fusion)
            tcfg = replace(train_cfg, seed=seed)
            cells.append(Cell(key=f"fusion={fusion}|seed={seed}", kind="fusion", seed=seed,
                              group=f"fusion={fusion}",
                              config=_cell_config(cfg, tcfg, {"kind": "fusion"}), report=None))
            tasks.append((cfg, tcfg, train_prepared, test_prepared, word_matrix, vocab_size))
    for cell, report in zip(cells, _run_cells(tasks, workers)):
        cell.report = report
        matrix.add(cell)
    return matrix


def run_noise_sweep(train_prepared, test_prepared, model_cfg: KganConfig, train_cfg,
                    table, ratios, seeds, word_matrix=None, vocab_size=None,
                    workers: int = 1) -> ExperimentMatrix:
    """Re-randomize a fraction of knowledge rows before training, per ratio and seed."""
    from dataclasses import replace

    from .pipeline import materialize_knowledge
    from .training import apply_noise_attack

    matrix = ExperimentMatrix(name="noise_sweep")
    cells, tasks = [], []
    for ratio in ratios:
        for seed in seeds:
            tcfg = replace(train_cfg, seed=seed, noise_ratio=ratio)
            if ratio > 0:
                attacked = apply_noise_attack(table, ratio, seed)
                tr = materialize_knowledge(train_prepared, attacked)
                te = materialize_knowledge(test_prepared, attacked)
            else:
                tr, te = train_prepared, test_prepared
            cells.append(Cell(key=f"noise={ratio}|seed={seed}", kind="noise", seed=seed,
                              group=f"noise={ratio}",
                              config=_cell_config(model_cfg, tcfg, {"kind": "noise", "noise_ratio": ratio}),
                              report=None))
            tasks.append((model_cfg, tcfg, tr, te, word_matrix, vocab_size))
    for cell, report in zip(cells, _run_cells(tasks, workers)):
        cell.report = report
        matrix.add(cell)
    return matrix


def export_attention_cases(model, prepared, batch_size: int = 32) -> list[dict]:
    """Per-instance token list, per-branch normalized weights, prediction, gold."""
    cases = []
    dtype = model.config.np_dtype
    for lo in range(0, len(prepared), batch_size):
        chunk = prepared[lo : lo + batch_size]
        batch = collate(chunk, dtype, position=model.config.position)
        for inst, rec in zip(chunk, model.predict_batch(batch)):
            cases.append(
                {
                    "id": rec.id,
                    "tokens": list(inst.tokens),
                    "prediction": rec.predicted,
                    "gold": rec.gold,
                    "probabilities": [float(x) for x in rec.probabilities],
                    "weights": {name: [float(x) for x in w] for name, w in rec.attention.items()},
                }
            )
    return cases
