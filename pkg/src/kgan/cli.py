"""Command-line entrypoint: prepare / kge-train / train / eval / ablate /
noise / cases / stats, driven by one YAML config file.

CLI ``--set section.key=value`` overrides take precedence over the file;
defaults fill the rest. The fully-resolved config is written to the output
directory. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure,
5 statistics-check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from . import corpus, depparse, evaluation, kge, pipeline, training
from .embeddings import load_static_vectors
from .errors import ConfigError, DataError, KganError, NumericError, StatsMismatchError
from .network import KganConfig, KganModel, load_checkpoint, save_checkpoint

# (default, help) per key; section dicts nest.
CONFIG_SCHEMA = {
    "output_dir": (".", "run output directory; relative paths resolve under $KGAN_OUTPUT_ROOT"),
    "data": {
        "name": ("custom", "dataset name: laptop14|restaurant14|twitter|restaurant15|restaurant16|custom"),
        "train_file": (None, "raw train split (SemEval XML, Twitter text, or TSV)"),
        "test_file": (None, "raw test split"),
        "parses_train": (None, "CoNLL-U parses for the train split, keyed by instance id"),
        "parses_test": (None, "CoNLL-U parses for the test split"),
        "vectors": (None, "pretrained word-vector text file (token + floats per line)"),
        "knowledge": (None, "knowledge embedding table (text format + optional .meta.json)"),
        "triples": (None, "head<TAB>relation<TAB>tail file for kge-train"),
        "cache_dir": (None, "directory holding prepare outputs (defaults to output_dir)"),
        "allow_stats_mismatch": (False, "keep going when loaded counts disagree with published ones"),
    },
    "model": {
        "d_w": (300, "word embedding dimension"),
        "d_k": (None, "knowledge embedding dimension (null: take from the loaded table)"),
        "hidden": (300, "per-direction BiLSTM size"),
        "gcn_layers": (2, "graph-convolution layers in the syntax branch"),
        "dropout": (0.5, "dropout rate on word embeddings"),
        "branches": (["context", "syntax", "knowledge"], "active branches"),
        "fusion": ("hierarchical", "hierarchical|concat|sum|attention|voting"),
        "symmetrize": (True, "undirected dependency adjacency"),
        "position": (True, "apply relative position weighting to sentence embeddings"),
        "dtype": ("float32", "float32|float64"),
        "seed": (None, "parameter-init seed (null: use train.seed)"),
    },
    "train": {
        "lr": (1e-3, "learning rate"),
        "batch_size": (32, "instances per batch (64 is the usual choice for restaurant14)"),
        "epochs": (50, "training epochs"),
        "seed": (14, "master seed for shuffling/dropout/init"),
        "beta1": (0.9, "Adam beta1"),
        "beta2": (0.999, "Adam beta2"),
        "eps": (1e-8, "Adam epsilon"),
        "eval_every": (1, "test evaluation period in epochs"),
        "noise_ratio": (0.0, "fraction of knowledge rows re-randomized before training"),
        "clip_norm": (5.0, "global gradient-norm clip (null disables it entirely)"),
        "holdout_fraction": (0.0, ">0 selects the best epoch on a train carve-out instead of test"),
    },
    "kge": {
        "method": ("TransE", "TransE|DistMult|ComplEx|ANALOGY"),
        "dim": (100, "embedding dimension"),
        "epochs": (200, "training epochs"),
        "lr": (0.05, "learning rate"),
        "margin": (1.0, "margin for the TransE ranking loss"),
        "neg_ratio": (5, "negatives per positive"),
        "seed": (14, "seed"),
        "analogy_real_dim": (None, "ANALOGY real-block size (null: dim // 2)"),
    },
    "experiment": {
        "kind": ("branches", "ablation kind for cmd_ablate: branches|fusion"),
        "seeds": ([14, 15, 16], "seeds for experiment matrices"),
        "ratios": ([0.0, 0.01, 0.02, 0.05, 0.1, 0.2], "noise ratios for cmd_noise"),
        "cases_limit": (10, "instances exported by cmd_cases"),
        "workers": (1, "worker processes for experiment matrices (cells are independent)"),
        "plot": (False, "write a PNG for sweep results (needs matplotlib)"),
    },
}


def _defaults(schema=CONFIG_SCHEMA) -> dict:
    out = {}
    for key, value in schema.items():
        out[key] = _defaults(value) if isinstance(value, dict) else value[0]
    return out


def _coerce(value, default, where):
    """Coerce a config leaf toward the default's type; catches the YAML 1.1
    quirk where 1e-3 (no dot) parses as a string."""
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"config key {where!r} expects a boolean, got {value!r}")
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {where!r} expects a number, got {value!r}") from None
    if isinstance(default, int):
        try:
            if isinstance(value, float) and value != int(value):
                raise ValueError
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {where!r} expects an integer, got {value!r}") from None
    return value


def _merge(base: dict, override: dict, path="") -> dict:
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            _merge(base[key], value, where + ".")
        else:
            base[key] = _coerce(value, _default_for(where), where)
    return base


def _default_for(dotted: str):
    node = CONFIG_SCHEMA
    for part in dotted.split("."):
        node = node[part]
    return node[0]


def resolve_config(config_path=None, overrides=()) -> dict:
    config = _defaults()
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {config_path}: {e}") from e
        loaded = yaml.safe_load(text) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        _merge(config, loaded)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        node = config
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {dotted!r}")
            node = node[part]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = _coerce(yaml.safe_load(raw), _default_for(dotted), dotted)
    return config


def _schema_help(schema=CONFIG_SCHEMA, prefix="") -> list[str]:
    lines = []
    for key, value in schema.items():
        if isinstance(value, dict):
            lines.extend(_schema_help(value, f"{prefix}{key}."))
        else:
            default, text = value
            lines.append(f"  {prefix}{key} (default: {default!r}): {text}")
    return lines


def _out_dir(config) -> Path:
    root = os.environ.get("KGAN_OUTPUT_ROOT", "")
    path = Path(config["output_dir"])
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_resolved(config, out: Path):
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")


def _require(config, *dotted):
    for item in dotted:
        section, key = item.split(".")
        if config[section][key] is None:
            raise ConfigError(f"config key {item} is required for this command")


def _cache_dir(config) -> Path:
    if config["data"]["cache_dir"]:
        return Path(config["data"]["cache_dir"])
    return _out_dir(config)


def _load_splits(config):
    name = config["data"]["name"]
    train = corpus.load_dataset(config["data"]["train_file"], name, "train")
    test = corpus.load_dataset(config["data"]["test_file"], name, "test")
    return train, test


def _stats_lines(dataset, allow_mismatch):
    counts = corpus.dataset_stats(dataset)
    expected = corpus.EXPECTED_SPLIT_COUNTS.get((dataset.name, dataset.split))
    line = (f"{dataset.name} {dataset.split}: positive={counts.positive} "
            f"negative={counts.negative} neutral={counts.neutral} total={counts.total}")
    if expected is None:
        return line + "  [no published counts: SKIP]", True
    if counts == expected:
        return line + "  [PASS]", True
    line += (f"  [FAIL: expected positive={expected.positive} "
             f"negative={expected.negative} neutral={expected.neutral}]")
    if not allow_mismatch:
        raise StatsMismatchError(line)
    return line, False


def cmd_stats(config) -> int:
    _require(config, "data.train_file", "data.test_file")
    allow = config["data"]["allow_stats_mismatch"]
    for ds in _load_splits(config):
        line, _ = _stats_lines(ds, allow)
        print(line)
    return 0


def cmd_prepare(config, export_tokens_only=False) -> int:
    _require(config, "data.train_file", "data.test_file")
    out = _out_dir(config)
    _write_resolved(config, out)
    allow = config["data"]["allow_stats_mismatch"]
    train_ds, test_ds = _load_splits(config)

    stats_report = []
    for ds in (train_ds, test_ds):
        line, _ = _stats_lines(ds, allow)
        stats_report.append(line)
        print(line)
    (out / "stats.txt").write_text("\n".join(stats_report) + "\n", encoding="utf-8")

    for ds in (train_ds, test_ds):
        (out / f"{ds.split}.tsv").write_text(corpus.to_tsv(ds.instances), encoding="utf-8")
        tokens = "".join(f"{inst.id}\t{' '.join(inst.tokens)}\n" for inst in ds.instances)
        (out / f"tokens_{ds.split}.tsv").write_text(tokens, encoding="utf-8")

    if export_tokens_only:
        print(f"token files written to {out}; run your parser adapter, then rerun prepare")
        return 0

    for item in ("data.parses_train", "data.parses_test", "data.knowledge"):
        section, key = item.split(".")
        if config[section][key] is None:
            raise ConfigError(f"config key {item} is required (expected a file path); "
                              f"use --export-tokens to emit parser input first")
    for key in ("parses_train", "parses_test", "knowledge"):
        path = config["data"][key]
        if not Path(path).exists():
            raise DataError(f"data.{key} file not found: {path} "
                            f"(produce it with your parser adapter or kge-train)")
    if config["data"]["vectors"] is not None and not Path(config["data"]["vectors"]).exists():
        raise DataError(f"data.vectors file not found: {config['data']['vectors']}")

    table = kge.load_pretrained(config["data"]["knowledge"])
    vocab = corpus.build_vocab([train_ds, test_ds])
    (out / "vocab.txt").write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")

    for ds, parse_key in ((train_ds, "parses_train"), (test_ds, "parses_test")):
        cache_path = out / f"{ds.split}.cache.jsonl"
        fingerprint = pipeline.fingerprint_files(
            config["data"]["train_file"], config["data"]["test_file"],
            config["data"][parse_key], config["data"]["knowledge"],
        )
        if cache_path.exists():
            try:
                _, existing = pipeline.read_prepare_cache(cache_path, table)
                if existing == fingerprint:
                    print(f"{cache_path.name}: cache hit, skipping")
                    continue
            except (KganError, json.JSONDecodeError):
                pass
        parses = depparse.load_conllu(Path(config["data"][parse_key]).read_bytes())
        prepared = pipeline.prepare_split(ds, parses, vocab, table,
                                          symmetrize=config["model"]["symmetrize"])
        pipeline.write_prepare_cache(cache_path, prepared, fingerprint)
        print(f"{cache_path.name}: {len(prepared)} instances cached")
    return 0


def cmd_kge_train(config) -> int:
    _require(config, "data.triples")
    out = _out_dir(config)
    _write_resolved(config, out)
    kcfg = config["kge"]
    graph = kge.KnowledgeGraph.load(config["data"]["triples"])
    model = kge.train_kge(
        graph, kcfg["method"], kcfg["dim"], epochs=kcfg["epochs"], lr=kcfg["lr"],
        margin=kcfg["margin"], neg_ratio=kcfg["neg_ratio"], seed=kcfg["seed"],
        analogy_real_dim=kcfg["analogy_real_dim"],
    )
    emb_path = out / "embeddings.txt"
    kge.export_embeddings(model, graph, emb_path)
    report = kge.link_prediction_eval(model, graph)
    payload = {
        "method": model.method, "dim": model.dim,
        "entities": len(graph.entities), "relations": len(graph.relations),
        "triples": len(graph.triples),
        "mrr": report.mrr, "hits1": report.hits1, "hits10": report.hits10,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
    }
    (out / "linkpred.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    print(f"MRR={report.mrr:.4f} Hits@1={report.hits1:.4f} Hits@10={report.hits10:.4f}")
    return 0


def _load_prepared(config):
    cache = _cache_dir(config)
    for split in ("train", "test"):
        if not (cache / f"{split}.cache.jsonl").exists():
            raise DataError(f"missing prepare cache {cache / f'{split}.cache.jsonl'}; run prepare first")
    _require(config, "data.knowledge")
    table = kge.load_pretrained(config["data"]["knowledge"])
    train_prepared, _ = pipeline.read_prepare_cache(cache / "train.cache.jsonl", table)
    test_prepared, _ = pipeline.read_prepare_cache(cache / "test.cache.jsonl", table)
    vocab_tokens = (cache / "vocab.txt").read_text(encoding="utf-8").splitlines()
    vocab = corpus.Vocabulary(vocab_tokens[2:])  # PAD/UNK occupy the first two lines
    return train_prepared, test_prepared, table, vocab


def _model_config(config, table) -> KganConfig:
    mcfg = dict(config["model"])
    if mcfg["d_k"] is None:
        mcfg["d_k"] = table.dim
    elif mcfg["d_k"] != table.dim:
        raise ConfigError(f"model.d_k={mcfg['d_k']} but the knowledge table has dim {table.dim}")
    return KganConfig(branches=tuple(mcfg.pop("branches")), **mcfg)


def _train_config(config) -> training.TrainConfig:
    return training.TrainConfig(**config["train"])


def _word_matrix(config, vocab, model_cfg):
    if config["data"]["vectors"]:
        return load_static_vectors(config["data"]["vectors"], vocab,
                                   seed=config["train"]["seed"], dim=model_cfg.d_w)
    return None


def cmd_train(config) -> int:
    out = _out_dir(config)
    _write_resolved(config, out)
    train_prepared, test_prepared, table, vocab = _load_prepared(config)
    model_cfg = _model_config(config, table)
    train_cfg = _train_config(config)
    if train_cfg.noise_ratio > 0:
        attacked = training.apply_noise_attack(table, train_cfg.noise_ratio, train_cfg.seed)
        train_prepared = pipeline.materialize_knowledge(train_prepared, attacked)
        test_prepared = pipeline.materialize_knowledge(test_prepared, attacked)
    word_matrix = _word_matrix(config, vocab, model_cfg)
    model, record = training.train(model_cfg, train_cfg, train_prepared, test_prepared,
                                   word_matrix=word_matrix, vocab_size=len(vocab))
    record.save(out)
    save_checkpoint(out / "checkpoint.bin", model.params, model.config, meta=record.best)
    (out / "metrics.json").write_text(json.dumps(record.best, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    print(f"best epoch {record.best['epoch']}: acc={record.best['test_acc']:.4f} "
          f"macro_f1={record.best['test_macro_f1']:.4f}")
    return 0


def cmd_eval(config, checkpoint_path=None) -> int:
    out = _out_dir(config)
    ckpt = Path(checkpoint_path) if checkpoint_path else out / "checkpoint.bin"
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    params, model_cfg, meta = load_checkpoint(ckpt)
    _, test_prepared, table, _ = _load_prepared(config)
    model = KganModel(model_cfg, params)
    gold, pred = training.evaluate_model(model, test_prepared)
    report = evaluation.compute_metrics(gold, pred)
    print(f"accuracy={report.accuracy:.6f} macro_f1={report.macro_f1:.6f}")
    if meta.get("test_acc") is not None:
        match = (meta["test_acc"] == report.accuracy and meta["test_macro_f1"] == report.macro_f1)
        print(f"stored at save time: acc={meta['test_acc']:.6f} macro_f1={meta['test_macro_f1']:.6f} "
              f"[{'match' if match else 'MISMATCH'}]")
    (out / "eval.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return 0


def cmd_ablate(config) -> int:
    out = _out_dir(config)
    _write_resolved(config, out)
    train_prepared, test_prepared, table, vocab = _load_prepared(config)
    model_cfg = _model_config(config, table)
    train_cfg = _train_config(config)
    word_matrix = _word_matrix(config, vocab, model_cfg)
    kind = config["experiment"]["kind"]
    seeds = config["experiment"]["seeds"]
    workers = config["experiment"]["workers"]
    if kind == "branches":
        matrix = evaluation.run_branch_ablation(train_prepared, test_prepared, model_cfg,
                                                train_cfg, seeds, word_matrix, len(vocab),
                                                workers=workers)
    elif kind == "fusion":
        matrix = evaluation.run_fusion_ablation(train_prepared, test_prepared, model_cfg,
                                                train_cfg, seeds, word_matrix, len(vocab),
                                                workers=workers)
    else:
        raise ConfigError(f"experiment.kind must be branches or fusion, got {kind!r}")
    (out / "matrix.json").write_text(matrix.to_json(), encoding="utf-8")
    table_text = evaluation.format_aggregate_table(matrix)
    (out / "table.txt").write_text(table_text, encoding="utf-8")
    print(table_text, end="")
    return 0


def cmd_noise(config) -> int:
    out = _out_dir(config)
    _write_resolved(config, out)
    train_prepared, test_prepared, table, vocab = _load_prepared(config)
    model_cfg = _model_config(config, table)
    train_cfg = _train_config(config)
    word_matrix = _word_matrix(config, vocab, model_cfg)
    matrix = evaluation.run_noise_sweep(
        train_prepared, test_prepared, model_cfg, train_cfg, table,
        config["experiment"]["ratios"], config["experiment"]["seeds"],
        word_matrix, len(vocab), workers=config["experiment"]["workers"],
    )
    (out / "matrix.json").write_text(matrix.to_json(), encoding="utf-8")
    table_text = evaluation.format_aggregate_table(matrix)
    (out / "table.txt").write_text(table_text, encoding="utf-8")
    print(table_text, end="")
    if config["experiment"]["plot"]:
        _plot_noise(matrix, out / "noise.png")
    return 0


def _plot_noise(matrix, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping plot", file=sys.stderr)
        return
    agg = matrix.aggregate()
    ratios, accs = [], []
    for group, stats in sorted(agg.items(), key=lambda kv: float(kv[0].split("=")[1])):
        ratios.append(float(group.split("=")[1]))
        accs.append(100 * stats["mean_acc"])
    plt.figure(figsize=(5, 3.2))
    plt.plot(ratios, accs, marker="o")
    plt.xlabel("noise ratio")
    plt.ylabel("accuracy (%)")
    plt.tight_layout()
    plt.savefig(path, dpi=120)
    plt.close()


def cmd_cases(config, checkpoint_path=None) -> int:
    out = _out_dir(config)
    ckpt = Path(checkpoint_path) if checkpoint_path else out / "checkpoint.bin"
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    params, model_cfg, _ = load_checkpoint(ckpt)
    _, test_prepared, table, _ = _load_prepared(config)
    model = KganModel(model_cfg, params)
    limit = config["experiment"]["cases_limit"]
    cases = evaluation.export_attention_cases(model, test_prepared[:limit])
    (out / "cases.json").write_text(json.dumps(cases, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    print(f"{len(cases)} attention cases written to {out / 'cases.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    epilog = (
        "precedence: defaults < config file < --set overrides\n\n"
        "config keys (file and --set):\n" + "\n".join(_schema_help())
    )
    parser = argparse.ArgumentParser(
        prog="kgan",
        description="Three-branch aspect-sentiment classifier: data prep, KGE, training, experiments.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prepare", "parse raw data, verify statistics, build caches"),
        ("kge-train", "train knowledge-graph embeddings and export the table"),
        ("train", "train the classifier on prepared caches"),
        ("eval", "evaluate a saved checkpoint on the test cache"),
        ("ablate", "run the branch or fusion ablation matrix"),
        ("noise", "run the knowledge-noise sweep"),
        ("cases", "export attention case studies from a checkpoint"),
        ("stats", "print per-class dataset statistics with the published-counts check"),
    ):
        p = sub.add_parser(name, help=help_text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set train.epochs=5")
        if name in ("eval", "cases"):
            p.add_argument("--checkpoint", help="checkpoint path (default: <output_dir>/checkpoint.bin)")
        if name == "prepare":
            p.add_argument("--export-tokens", action="store_true",
                           help="only write stats, TSVs and parser-input token files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.config, args.set)
        if args.command == "prepare":
            return cmd_prepare(config, export_tokens_only=args.export_tokens)
        if args.command == "kge-train":
            return cmd_kge_train(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "eval":
            return cmd_eval(config, args.checkpoint)
        if args.command == "ablate":
            return cmd_ablate(config)
        if args.command == "noise":
            return cmd_noise(config)
        if args.command == "cases":
            return cmd_cases(config, args.checkpoint)
        if args.command == "stats":
            return cmd_stats(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except StatsMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
