"""The full three-branch model: forward, hand-written backward, prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .branches import (
    context_backward,
    context_forward,
    knowledge_backward,
    knowledge_forward,
    masked_mean,
    syntax_backward,
    syntax_forward,
)
from .config import KganConfig, count_parameters, init_params
from .fusion import batch_cross_entropy, fuse_backward, fuse_forward, softmax
from .lstm import bilstm_backward, bilstm_forward


@dataclass
class Prediction:
    id: str
    predicted: int
    probabilities: np.ndarray
    gold: int
    attention: dict[str, np.ndarray] = field(default_factory=dict)


class KganModel:
    """Parameter container plus fused batch forward/backward."""

    def __init__(self, config: KganConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def build(cls, config: KganConfig, word_matrix=None, vocab_size=None, seed=None):
        return cls(config, init_params(config, word_matrix, vocab_size, seed))

    @property
    def n_parameters(self) -> int:
        return count_parameters(self.params)

    def _needs_aspect_encoder(self) -> bool:
        return "context" in self.config.branches or "knowledge" in self.config.branches

    def forward(self, batch, train: bool = False, dropout_rng=None):
        cfg, params = self.config, self.params
        E = params["emb"]
        X_s = E[batch.tok] * batch.pos[:, :, None]
        drop_s = drop_t = None
        if train and cfg.dropout > 0.0:
            if dropout_rng is None:
                raise ValueError("training forward needs a dropout rng")
            keep = 1.0 - cfg.dropout
            drop_s = (dropout_rng.random(X_s.shape) < keep).astype(X_s.dtype) / keep
            X_s = X_s * drop_s
        H_s, cache_s_lstm = bilstm_forward(X_s, batch.mask, params, "lstm_s")

        H_t = tbar = cache_t_lstm = None
        if self._needs_aspect_encoder():
            X_t = E[batch.asp]
            if train and cfg.dropout > 0.0:
                keep = 1.0 - cfg.dropout
                drop_t = (dropout_rng.random(X_t.shape) < keep).astype(X_t.dtype) / keep
                X_t = X_t * drop_t
            H_t, cache_t_lstm = bilstm_forward(X_t, batch.amask, params, "lstm_t")
            tbar = masked_mean(H_t, batch.amask)

        outputs, attn, caches = {}, {}, {}
        if "context" in cfg.branches:
            R, alpha, cache = context_forward(H_s, batch.mask, tbar, params["ctx_Wa"])
            outputs["context"], attn["context"], caches["context"] = R, alpha, cache
        if "syntax" in cfg.branches:
            R, alpha, cache = syntax_forward(H_s, batch.mask, batch.adj, batch.aspect_token_mask, params)
            outputs["syntax"], attn["syntax"], caches["syntax"] = R, alpha, cache
        if "knowledge" in cfg.branches:
            R, gamma, cache = knowledge_forward(
                H_s, batch.mask, batch.k_sent, batch.k_asp, batch.amask, tbar, params
            )
            outputs["knowledge"], attn["knowledge"], caches["knowledge"] = R, gamma, cache

        logits, fusion_cache = fuse_forward(cfg.fusion, cfg.branches, outputs, params)
        cache = {
            "batch": batch,
            "outputs": outputs,
            "attention": attn,
            "branch_caches": caches,
            "fusion_cache": fusion_cache,
            "lstm_s": cache_s_lstm,
            "lstm_t": cache_t_lstm,
            "drop_s": drop_s,
            "drop_t": drop_t,
        }
        return logits, cache

    def backward(self, cache, dlogits) -> dict[str, np.ndarray]:
        cfg, params = self.config, self.params
        batch = cache["batch"]
        grads = {k: np.zeros_like(v) for k, v in params.items()}

        dR = fuse_backward(dlogits, cache["fusion_cache"], cache["outputs"], params, grads)

        B, T = batch.mask.shape
        dH_s = np.zeros((B, T, cfg.d_r), dtype=batch.mask.dtype)
        dtbar = None
        if self._needs_aspect_encoder():
            dtbar = np.zeros((B, cfg.d_r), dtype=batch.mask.dtype)

        if "syntax" in cfg.branches:
            dH_s += syntax_backward(dR["syntax"], cache["branch_caches"]["syntax"], grads)
        if "context" in cfg.branches:
            dh, dt, dWa = context_backward(dR["context"], cache["branch_caches"]["context"])
            dH_s += dh
            dtbar += dt
            grads["ctx_Wa"] += dWa
        if "knowledge" in cfg.branches:
            dh, dt = knowledge_backward(dR["knowledge"], cache["branch_caches"]["knowledge"], grads)
            dH_s += dh
            dtbar += dt

        if dtbar is not None:
            n = batch.amask.sum(axis=1)[:, None, None]
            dH_t = dtbar[:, None, :] * batch.amask[:, :, None] / n
            dX_t = bilstm_backward(dH_t, cache["lstm_t"], grads)
            if cache["drop_t"] is not None:
                dX_t = dX_t * cache["drop_t"]
            np.add.at(grads["emb"], batch.asp, dX_t)

        dX_s = bilstm_backward(dH_s, cache["lstm_s"], grads)
        if cache["drop_s"] is not None:
            dX_s = dX_s * cache["drop_s"]
        dX_s = dX_s * batch.pos[:, :, None]
        np.add.at(grads["emb"], batch.tok, dX_s)
        return grads

    def loss_and_grads(self, batch, train: bool = True, dropout_rng=None):
        """Summed batch cross-entropy and its gradients."""
        logits, cache = self.forward(batch, train=train, dropout_rng=dropout_rng)
        loss, probs, dlogits = batch_cross_entropy(logits, batch.gold)
        grads = self.backward(cache, dlogits)
        return loss, grads, logits

    def batch_loss(self, batch) -> float:
        logits, _ = self.forward(batch, train=False)
        loss, _, _ = batch_cross_entropy(logits, batch.gold)
        return loss

    def predict_batch(self, batch) -> list[Prediction]:
        """Dropout-free predictions with per-branch attention records."""
        logits, cache = self.forward(batch, train=False)
        probs = softmax(logits)
        classes = np.argmax(logits, axis=1)
        records = []
        for i, inst_id in enumerate(batch.ids):
            m = int(batch.lengths[i])
            attn = {
                name: weights[i, :m].astype(np.float64).copy()
                for name, weights in cache["attention"].items()
            }
            records.append(
                Prediction(
                    id=inst_id,
                    predicted=int(classes[i]),
                    probabilities=probs[i].astype(np.float64).copy(),
                    gold=int(batch.gold[i]),
                    attention=attn,
                )
            )
        return records
