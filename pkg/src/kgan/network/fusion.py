"""Fusion of branch outputs into class logits.

"hierarchical" is the local-to-global combiner: the three pairwise
concatenations pass through separate affine maps to class space, are stacked
into a 3x3 matrix, and merged by one valid 3x3 convolution with 3 output
channels. The alternatives (concat / sum / attention / voting) exist for the
fusion ablation. Voting returns log-mean-probabilities as its logits so that
softmax downstream reproduces the soft-vote distribution exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

_PAIRS = (("cs", "context", "syntax"), ("ck", "context", "knowledge"), ("sk", "syntax", "knowledge"))


def softmax(x):
    s = x - x.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x):
    s = x - x.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def fuse_forward(fusion, branch_order, outputs, params):
    """logits (B, 3) for a dict of branch outputs {branch: (B, d_r)}."""
    if fusion == "hierarchical":
        if set(branch_order) != {"context", "syntax", "knowledge"}:
            raise ConfigError("hierarchical fusion requires all three branches")
        rows, pair_caches = [], []
        for key, a, b in _PAIRS:
            x = np.concatenate([outputs[a], outputs[b]], axis=1)
            rows.append(x @ params[f"fus_{key}_W"] + params[f"fus_{key}_b"])
            pair_caches.append(x)
        M = np.stack(rows, axis=1)  # (B, 3, 3): rows = pair features, cols = classes
        logits = np.einsum("bij,cij->bc", M, params["fus_conv_K"]) + params["fus_conv_b"]
        return logits, ("hierarchical", pair_caches, M)

    order = list(branch_order)
    if fusion == "concat":
        x = np.concatenate([outputs[b] for b in order], axis=1)
        logits = x @ params["fus_cat_W"] + params["fus_cat_b"]
        return logits, ("concat", order, x)
    if fusion == "sum":
        logits = sum(outputs[b] @ params[f"fus_sum_{b}_W"] + params[f"fus_sum_{b}_b"] for b in order)
        return logits, ("sum", order, outputs)
    if fusion == "attention":
        V = np.stack([outputs[b] for b in order], axis=1)  # (B, k, d_r)
        qsum = np.sum(V, axis=1)
        s = np.einsum("bkd,bd->bk", V, qsum)
        a = softmax(s)
        fused = np.einsum("bk,bkd->bd", a, V)
        logits = fused @ params["fus_att_W"] + params["fus_att_b"]
        return logits, ("attention", order, V, qsum, a, fused)
    if fusion == "voting":
        raw = np.stack(
            [outputs[b] @ params[f"fus_vote_{b}_W"] + params[f"fus_vote_{b}_b"] for b in order], axis=1
        )  # (B, k, 3)
        logp = log_softmax(raw)
        combined = _logsumexp(logp, axis=1) - np.log(len(order)).astype(logp.dtype)
        return combined, ("voting", order, outputs, raw, logp, combined)
    raise ConfigError(f"unknown fusion strategy {fusion!r}")


def _logsumexp(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def fuse_backward(dlogits, cache, outputs, params, grads):
    """Returns {branch: dR} and accumulates fusion parameter grads."""
    kind = cache[0]
    if kind == "hierarchical":
        _, pair_caches, M = cache
        K = params["fus_conv_K"]
        grads["fus_conv_b"] += dlogits.sum(axis=0)
        grads["fus_conv_K"] += np.einsum("bc,bij->cij", dlogits, M)
        dM = np.einsum("bc,cij->bij", dlogits, K)
        d_r = outputs["context"].shape[1]
        dR = {b: np.zeros_like(outputs[b]) for b in ("context", "syntax", "knowledge")}
        for idx, (key, a, b) in enumerate(_PAIRS):
            drow = dM[:, idx]
            x = pair_caches[idx]
            grads[f"fus_{key}_W"] += x.T @ drow
            grads[f"fus_{key}_b"] += drow.sum(axis=0)
            dx = drow @ params[f"fus_{key}_W"].T
            dR[a] += dx[:, :d_r]
            dR[b] += dx[:, d_r:]
        return dR

    if kind == "concat":
        _, order, x = cache
        grads["fus_cat_W"] += x.T @ dlogits
        grads["fus_cat_b"] += dlogits.sum(axis=0)
        dx = dlogits @ params["fus_cat_W"].T
        d_r = outputs[order[0]].shape[1]
        return {b: dx[:, i * d_r : (i + 1) * d_r] for i, b in enumerate(order)}
    if kind == "sum":
        _, order, outs = cache
        dR = {}
        for b in order:
            grads[f"fus_sum_{b}_W"] += outs[b].T @ dlogits
            grads[f"fus_sum_{b}_b"] += dlogits.sum(axis=0)
            dR[b] = dlogits @ params[f"fus_sum_{b}_W"].T
        return dR
    if kind == "attention":
        _, order, V, qsum, a, fused = cache
        grads["fus_att_W"] += fused.T @ dlogits
        grads["fus_att_b"] += dlogits.sum(axis=0)
        dfused = dlogits @ params["fus_att_W"].T
        da = np.einsum("bd,bkd->bk", dfused, V)
        dV = a[:, :, None] * dfused[:, None, :]
        ds = a * (da - np.sum(a * da, axis=-1, keepdims=True))
        dV += ds[:, :, None] * qsum[:, None, :]
        dqsum = np.einsum("bk,bkd->bd", ds, V)
        return {b: dV[:, i] + dqsum for i, b in enumerate(order)}
    if kind == "voting":
        _, order, outs, raw, logp, combined = cache
        # d combined / d logp is a softmax over the view axis
        w = np.exp(logp - combined[:, None, :])
        w = w / w.sum(axis=1, keepdims=True)
        dlogp = dlogits[:, None, :] * w
        p = np.exp(logp)
        draw = dlogp - p * dlogp.sum(axis=-1, keepdims=True)
        dR = {}
        for i, b in enumerate(order):
            grads[f"fus_vote_{b}_W"] += outs[b].T @ draw[:, i]
            grads[f"fus_vote_{b}_b"] += draw[:, i].sum(axis=0)
            dR[b] = draw[:, i] @ params[f"fus_vote_{b}_W"].T
        return dR
    raise ConfigError(f"unknown fusion cache kind {kind!r}")


def batch_cross_entropy(logits, gold):
    """Summed cross-entropy over the batch; returns (loss, probs, dlogits)."""
    p = softmax(logits)
    n = logits.shape[0]
    picked = p[np.arange(n), gold]
    loss = float(-np.sum(np.log(np.maximum(picked, np.finfo(p.dtype).tiny))))
    dlogits = p.copy()
    dlogits[np.arange(n), gold] -= 1.0
    return loss, p, dlogits


# ------------------------------------------- single-instance entry points ---

def loss(logits, gold: int) -> float:
    """-log softmax(logits)[gold] for one instance."""
    p = softmax(np.asarray(logits, dtype=np.float64))
    return float(-np.log(p[gold]))


def fuse_hierarchical(R_c, R_s, R_k, params):
    outputs = {
        "context": np.asarray(R_c)[None],
        "syntax": np.asarray(R_s)[None],
        "knowledge": np.asarray(R_k)[None],
    }
    logits, _ = fuse_forward("hierarchical", ("context", "syntax", "knowledge"), outputs, params)
    return logits[0]


def fuse_baseline(strategy, outputs, params):
    """outputs: dict {branch name: d_r vector} for the available branches."""
    order = tuple(b for b in ("context", "syntax", "knowledge") if b in outputs)
    batched = {b: np.asarray(outputs[b])[None] for b in order}
    logits, _ = fuse_forward(strategy, order, batched, params)
    return logits[0]
