import json

import numpy as np
import pytest
import yaml

from kgan import corpus
from kgan.cli import build_parser, main, resolve_config
from kgan.errors import ConfigError

from conftest import ASPECTS, OPINIONS, synth_instances


def instances_to_xml(instances):
    """Render synthetic instances back into the 2014 aspectTerm schema."""
    lines = ["<sentences>"]
    for inst in instances:
        text = " ".join(inst.tokens)
        start = sum(len(t) + 1 for t in inst.tokens[: inst.aspect_start])
        term = " ".join(inst.aspect_tokens)
        end = start + len(term)
        pol = corpus.POLARITY_NAMES[inst.polarity]
        lines.append(f'  <sentence id="{inst.id}">')
        lines.append(f"    <text>{text}</text>")
        lines.append("    <aspectTerms>")
        lines.append(f'      <aspectTerm term="{term}" polarity="{pol}" from="{start}" to="{end}"/>')
        lines.append("    </aspectTerms>")
        lines.append("  </sentence>")
    lines.append("</sentences>")
    return "\n".join(lines)


def parses_to_conllu(dataset, parses_by_raw_id):
    blocks = []
    for inst in dataset.instances:
        raw_id = inst.id.split("-", 2)[-1].split(":")[0]
        heads = parses_by_raw_id[raw_id].heads
        rows = [f"# sent_id = {inst.id}"]
        for i, tok in enumerate(inst.tokens):
            head = 0 if heads[i] == -1 else heads[i] + 1
            rows.append(f"{i + 1}\t{tok}\t_\t_\t_\t_\t{head}\tdep\t_\t_")
        blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + "\n"


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    """Raw dataset files, parses, a vector file, and a triple file."""
    root = tmp_path_factory.mktemp("cli-data")
    train_insts, train_parses = synth_instances(24, seed=3, prefix="tr")
    test_insts, test_parses = synth_instances(12, seed=4, prefix="te")
    (root / "train.xml").write_text(instances_to_xml(train_insts), encoding="utf-8")
    (root / "test.xml").write_text(instances_to_xml(test_insts), encoding="utf-8")

    # ids after loading carry the "custom-<split>-" prefix and char offsets
    train_ds = corpus.load_dataset(root / "train.xml", "custom", "train")
    test_ds = corpus.load_dataset(root / "test.xml", "custom", "test")
    (root / "train.conllu").write_text(parses_to_conllu(train_ds, train_parses), encoding="utf-8")
    (root / "test.conllu").write_text(parses_to_conllu(test_ds, test_parses), encoding="utf-8")

    rng = np.random.default_rng(0)
    words = sorted({t for inst in train_insts + test_insts for t in inst.tokens})
    vec_lines = [f"{w} " + " ".join(repr(float(x)) for x in rng.normal(size=12)) for w in words]
    (root / "vectors.txt").write_text("\n".join(vec_lines) + "\n", encoding="utf-8")

    triples = []
    for words_of in OPINIONS.values():
        for a, b in zip(words_of, words_of[1:]):
            triples.append(f"{a}\tsimilar\t{b}")
    for asp in ASPECTS:
        triples.append(f"{asp}\tis_a\tthing")
    (root / "triples.tsv").write_text("\n".join(triples) + "\n", encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def pipeline_dirs(fixtures, tmp_path_factory):
    """Run kge-train + prepare once; later tests reuse the caches."""
    kge_dir = tmp_path_factory.mktemp("kge-out")
    rc = main([
        "kge-train",
        "--set", f"data.triples={fixtures / 'triples.tsv'}",
        "--set", f"output_dir={kge_dir}",
        "--set", "kge.method=DistMult", "--set", "kge.dim=6",
        "--set", "kge.epochs=40", "--set", "kge.lr=0.05",
    ])
    assert rc == 0
    knowledge = kge_dir / "embeddings.txt"
    assert knowledge.exists() and (kge_dir / "linkpred.json").exists()

    prep_dir = tmp_path_factory.mktemp("prep-out")
    cfg = {
        "output_dir": str(prep_dir),
        "data": {
            "name": "custom",
            "train_file": str(fixtures / "train.xml"),
            "test_file": str(fixtures / "test.xml"),
            "parses_train": str(fixtures / "train.conllu"),
            "parses_test": str(fixtures / "test.conllu"),
            "vectors": str(fixtures / "vectors.txt"),
            "knowledge": str(knowledge),
        },
        "model": {"d_w": 12, "hidden": 8, "dropout": 0.1, "dtype": "float64"},
        "train": {"epochs": 3, "batch_size": 8, "lr": 0.01},
    }
    cfg_path = prep_dir / "in.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    assert main(["prepare", "--config", str(cfg_path)]) == 0
    for name in ("train.cache.jsonl", "test.cache.jsonl", "vocab.txt", "stats.txt",
                 "train.tsv", "tokens_train.tsv", "config.yaml"):
        assert (prep_dir / name).exists(), name
    return {"config": cfg, "config_path": cfg_path, "prep": prep_dir, "kge": kge_dir}


def run_with(pipeline_dirs, tmp_path, command, *extra):
    out = tmp_path
    args = [command, "--config", str(pipeline_dirs["config_path"]),
            "--set", f"output_dir={out}",
            "--set", f"data.cache_dir={pipeline_dirs['prep']}"]
    args.extend(extra)
    return main(args), out


class TestPipeline:
    def test_prepare_is_idempotent_cache_hit(self, pipeline_dirs, capsys):
        assert main(["prepare", "--config", str(pipeline_dirs["config_path"])]) == 0
        assert "cache hit" in capsys.readouterr().out

    def test_train_eval_cases(self, pipeline_dirs, tmp_path):
        rc, out = run_with(pipeline_dirs, tmp_path / "run", "train")
        assert rc == 0
        for name in ("checkpoint.bin", "run_record.jsonl", "timing.json", "metrics.json"):
            assert (out / name).exists(), name

        rc2, _ = run_with(pipeline_dirs, tmp_path / "run", "eval")
        assert rc2 == 0
        eval_payload = json.loads((tmp_path / "run" / "eval.json").read_text())
        metrics = json.loads((out / "metrics.json").read_text())
        assert eval_payload["accuracy"] == metrics["test_acc"]

        rc3, _ = run_with(pipeline_dirs, tmp_path / "run", "cases",
                          "--set", "experiment.cases_limit=5")
        assert rc3 == 0
        cases = json.loads((tmp_path / "run" / "cases.json").read_text())
        assert len(cases) == 5
        for case in cases:
            for weights in case["weights"].values():
                assert sum(weights) == pytest.approx(1.0, abs=1e-6)

    def test_train_determinism_across_output_dirs(self, pipeline_dirs, tmp_path):
        rc1, out1 = run_with(pipeline_dirs, tmp_path / "r1", "train")
        rc2, out2 = run_with(pipeline_dirs, tmp_path / "r2", "train")
        assert rc1 == rc2 == 0
        names1 = {p.name for p in out1.iterdir()}
        assert names1 == {p.name for p in out2.iterdir()}
        for name in sorted(names1):
            if name == "timing.json":   # wall-clock sidecar, deliberately excluded
                continue
            if name == "config.yaml":   # differs only in output_dir, by construction
                continue
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_ablate_branches_emits_seven_plus_headline(self, pipeline_dirs, tmp_path):
        rc, out = run_with(pipeline_dirs, tmp_path / "ab", "ablate",
                           "--set", "experiment.kind=branches",
                           "--set", "experiment.seeds=[14]",
                           "--set", "train.epochs=1")
        assert rc == 0
        matrix = json.loads((out / "matrix.json").read_text())
        kinds = [c["kind"] for c in matrix["cells"].values()]
        assert kinds.count("branch") == 7 and kinds.count("headline") == 1
        table = (out / "table.txt").read_text()
        assert table.count("\n") >= 9

    def test_noise_sweep_cells_and_plot(self, pipeline_dirs, tmp_path):
        rc, out = run_with(pipeline_dirs, tmp_path / "nz", "noise",
                           "--set", "experiment.ratios=[0.0, 1.0]",
                           "--set", "experiment.seeds=[14]",
                           "--set", "experiment.plot=true",
                           "--set", "train.epochs=1")
        assert rc == 0
        matrix = json.loads((out / "matrix.json").read_text())
        assert set(matrix["cells"]) == {"noise=0.0|seed=14", "noise=1.0|seed=14"}
        has_matplotlib = True
        try:
            import matplotlib  # noqa: F401
        except ImportError:
            has_matplotlib = False
        assert (out / "noise.png").exists() == has_matplotlib

    def test_kge_train_deterministic_output(self, fixtures, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            rc = main(["kge-train",
                       "--set", f"data.triples={fixtures / 'triples.tsv'}",
                       "--set", f"output_dir={out}",
                       "--set", "kge.dim=6", "--set", "kge.epochs=20"])
            assert rc == 0
            outs.append((out / "embeddings.txt").read_bytes())
        assert outs[0] == outs[1]


class TestStatsCommand:
    def test_custom_dataset_skips_published_check(self, fixtures, capsys):
        rc = main(["stats",
                   "--set", f"data.train_file={fixtures / 'train.xml'}",
                   "--set", f"data.test_file={fixtures / 'test.xml'}"])
        assert rc == 0
        assert "SKIP" in capsys.readouterr().out

    def test_published_mismatch_fails_with_code_5(self, fixtures):
        rc = main(["stats",
                   "--set", "data.name=laptop14",
                   "--set", f"data.train_file={fixtures / 'train.xml'}",
                   "--set", f"data.test_file={fixtures / 'test.xml'}"])
        assert rc == 5

    def test_mismatch_overridable(self, fixtures, capsys):
        rc = main(["stats",
                   "--set", "data.name=laptop14",
                   "--set", "data.allow_stats_mismatch=true",
                   "--set", f"data.train_file={fixtures / 'train.xml'}",
                   "--set", f"data.test_file={fixtures / 'test.xml'}"])
        assert rc == 0
        assert "FAIL" in capsys.readouterr().out


class TestErrorPaths:
    def test_unknown_config_key_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("mystery_key: 1\n")
        assert main(["stats", "--config", str(cfg)]) == 2

    def test_missing_file_exit_3(self, tmp_path):
        rc = main(["stats",
                   "--set", f"data.train_file={tmp_path / 'none.xml'}",
                   "--set", f"data.test_file={tmp_path / 'none.xml'}"])
        assert rc == 3

    def test_analogy_odd_complex_block_exit_2(self, fixtures, tmp_path):
        rc = main(["kge-train",
                   "--set", f"data.triples={fixtures / 'triples.tsv'}",
                   "--set", f"output_dir={tmp_path}",
                   "--set", "kge.method=ANALOGY", "--set", "kge.dim=6",
                   "--set", "kge.analogy_real_dim=3"])
        assert rc == 2

    def test_dim_mismatch_between_table_and_model_exit_2(self, pipeline_dirs, tmp_path):
        rc, _ = run_with(pipeline_dirs, tmp_path, "train", "--set", "model.d_k=100")
        assert rc == 2

    def test_missing_cache_exit_3(self, pipeline_dirs, tmp_path):
        args = ["train", "--config", str(pipeline_dirs["config_path"]),
                "--set", f"output_dir={tmp_path}",
                "--set", f"data.cache_dir={tmp_path / 'empty'}"]
        assert main(args) == 3

    def test_numeric_failure_exit_4(self, pipeline_dirs, tmp_path):
        with np.errstate(all="ignore"):
            rc, _ = run_with(pipeline_dirs, tmp_path, "train",
                             "--set", "train.lr=1e300",
                             "--set", "train.clip_norm=null",
                             "--set", "train.epochs=10")
        assert rc == 4

    def test_set_requires_known_key(self):
        with pytest.raises(ConfigError):
            resolve_config(None, ["nonexistent.key=3"])

    def test_missing_config_file_exit_2(self, tmp_path):
        assert main(["stats", "--config", str(tmp_path / "nope.yaml")]) == 2


class TestExplicitCheckpointFlag:
    def test_eval_and_cases_accept_checkpoint_path(self, pipeline_dirs, tmp_path):
        rc, out = run_with(pipeline_dirs, tmp_path / "run", "train")
        assert rc == 0
        ckpt = out / "checkpoint.bin"
        rc2, other = run_with(pipeline_dirs, tmp_path / "elsewhere", "eval",
                              "--checkpoint", str(ckpt))
        assert rc2 == 0 and (other / "eval.json").exists()
        rc3, other2 = run_with(pipeline_dirs, tmp_path / "elsewhere2", "cases",
                               "--checkpoint", str(ckpt),
                               "--set", "experiment.cases_limit=2")
        assert rc3 == 0 and (other2 / "cases.json").exists()


class TestHelpEnumeratesConfigKeys:
    def test_epilog_lists_every_leaf_key(self):
        parser = build_parser()
        text = parser.format_help()
        for key in ("train.lr", "train.batch_size", "model.hidden", "model.fusion",
                    "kge.method", "experiment.ratios", "data.knowledge", "output_dir"):
            assert key in text
        assert "default" in text


class TestMissingParseFileMessage:
    def test_prepare_names_expected_path(self, fixtures, tmp_path, capsys):
        rc = main(["prepare",
                   "--set", f"output_dir={tmp_path}",
                   "--set", f"data.train_file={fixtures / 'train.xml'}",
                   "--set", f"data.test_file={fixtures / 'test.xml'}",
                   "--set", f"data.parses_train={tmp_path / 'missing.conllu'}",
                   "--set", f"data.parses_test={fixtures / 'test.conllu'}",
                   "--set", "data.knowledge=whatever.txt"])
        assert rc == 3
        assert "missing.conllu" in capsys.readouterr().err

    def test_export_tokens_mode_skips_caches(self, fixtures, tmp_path):
        rc = main(["prepare", "--export-tokens",
                   "--set", f"output_dir={tmp_path}",
                   "--set", f"data.train_file={fixtures / 'train.xml'}",
                   "--set", f"data.test_file={fixtures / 'test.xml'}"])
        assert rc == 0
        assert (tmp_path / "tokens_train.tsv").exists()
        assert not (tmp_path / "train.cache.jsonl").exists()
