import numpy as np
import pytest

from kgan.errors import ConfigError, NumericError
from kgan.kge import KnowledgeTable
from kgan.network import KganConfig, KganModel, load_checkpoint, save_checkpoint
from kgan.training import TrainConfig, apply_noise_attack, evaluate_model, train
from kgan.evaluation import compute_metrics


def small_model_cfg(**kw):
    base = dict(d_w=12, d_k=6, hidden=8, dropout=0.1, dtype="float64")
    base.update(kw)
    return KganConfig(**base)


class TestTrainLoop:
    def test_determinism_byte_identical_records_and_checkpoints(self, world, tmp_path):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=5, seed=14)
        outs = []
        for run in ("a", "b"):
            model, record = train(cfg, tcfg, world["train"], world["test"],
                                  vocab_size=len(world["vocab"]))
            record.save(tmp_path / run)
            save_checkpoint(tmp_path / run / "checkpoint.bin", model.params, cfg,
                            meta=record.best)
            outs.append(tmp_path / run)
        a, b = outs
        assert (a / "run_record.jsonl").read_bytes() == (b / "run_record.jsonl").read_bytes()
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()

    def test_zero_lr_leaves_parameters_unchanged(self, world):
        cfg = small_model_cfg(dropout=0.5)
        tcfg = TrainConfig(lr=0.0, batch_size=8, epochs=3, seed=14)
        model, _ = train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))
        fresh = KganModel.build(cfg, vocab_size=len(world["vocab"]), seed=tcfg.seed)
        for k in fresh.params:
            assert (model.params[k] == fresh.params[k]).all(), k

    def test_pad_row_and_knowledge_inputs_frozen(self, world):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=3, seed=14)
        before = [p.k_sent.copy() for p in world["train"]]
        model, _ = train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))
        assert (model.params["emb"][0] == 0).all()
        for p, k in zip(world["train"], before):
            assert (p.k_sent == k).all()

    def test_overfit_small_subset_reaches_full_train_accuracy(self, world):
        subset = world["train"][:32]
        cfg = small_model_cfg(dropout=0.0)
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=300, seed=14)
        model, record = train(cfg, tcfg, subset, subset, vocab_size=len(world["vocab"]))
        assert record.best["test_acc"] == 1.0
        assert record.best["epoch"] <= 300

    def test_nan_loss_aborts_with_context(self, world):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=1e300, batch_size=8, epochs=50, seed=14, clip_norm=None)
        with np.errstate(all="ignore"), pytest.raises(NumericError, match="epoch"):
            train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))

    def test_checkpoint_reload_reproduces_metrics_exactly(self, world, tmp_path):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=5, seed=14)
        model, record = train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))
        path = tmp_path / "ck.bin"
        save_checkpoint(path, model.params, cfg, meta=record.best)
        params, cfg2, meta = load_checkpoint(path)
        reloaded = KganModel(cfg2, params)
        gold, pred = evaluate_model(reloaded, world["test"])
        rep = compute_metrics(gold, pred)
        assert rep.accuracy == record.best["test_acc"]
        assert rep.macro_f1 == record.best["test_macro_f1"]

    def test_holdout_selection_mode(self, world):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=4, seed=14, holdout_fraction=0.2)
        model, record = train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))
        assert record.best["selection"] == "holdout"
        assert record.config["n_train"] == len(world["train"]) - round(0.2 * len(world["train"]))

    def test_epoch_records_complete(self, world):
        cfg = small_model_cfg()
        tcfg = TrainConfig(lr=0.01, batch_size=8, epochs=4, seed=14, eval_every=2)
        _, record = train(cfg, tcfg, world["train"], world["test"], vocab_size=len(world["vocab"]))
        assert [e.epoch for e in record.epochs] == [1, 2, 3, 4]
        assert record.epochs[0].test_acc is None      # epoch 1 is not an eval epoch
        assert record.epochs[1].test_acc is not None
        lines = record.to_canonical_jsonl().splitlines()
        assert len(lines) == 1 + 4 + 1                # config + epochs + best
        assert "wall_time" not in record.to_canonical_jsonl()


class TestTrainConfigValidation:
    def test_bad_noise_ratio(self):
        with pytest.raises(ConfigError):
            TrainConfig(noise_ratio=1.5)

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)


class TestNoiseAttack:
    def table(self, rows=1000, dim=8):
        rng = np.random.default_rng(0)
        return KnowledgeTable([f"e{i}" for i in range(rows)], rng.normal(size=(rows, dim)))

    def test_ratio_zero_is_identity(self):
        table = self.table(50)
        out = apply_noise_attack(table, 0.0, seed=14)
        assert (out.vectors == table.vectors).all()

    def test_ratio_one_replaces_every_row(self):
        table = self.table(50)
        out = apply_noise_attack(table, 1.0, seed=14)
        assert not (out.vectors == table.vectors).any(axis=1).any()
        assert (np.abs(out.vectors) < 0.1).all()

    def test_exact_replacement_count(self):
        table = self.table(1000)
        out = apply_noise_attack(table, 0.05, seed=14)
        differing = (out.vectors != table.vectors).any(axis=1).sum()
        assert differing == 50

    def test_seeded_choice_is_deterministic(self):
        table = self.table(100)
        a = apply_noise_attack(table, 0.2, seed=3)
        b = apply_noise_attack(table, 0.2, seed=3)
        assert (a.vectors == b.vectors).all()

    def test_original_untouched(self):
        table = self.table(100)
        snapshot = table.vectors.copy()
        apply_noise_attack(table, 0.5, seed=3)
        assert (table.vectors == snapshot).all()
