"""The three view branches (context / syntax / knowledge), batched with masks.

Each branch exposes a fused forward returning (output, cache) and a backward
consuming the cache. Single-instance convenience wrappers at the bottom mirror
the public operation contracts and are what the hand-computed oracles test.
"""

from __future__ import annotations

import numpy as np

from .lstm import bilstm_forward


def masked_softmax(scores, mask):
    """softmax over the last axis, restricted to positions where mask > 0."""
    neg = np.asarray(-1e30, dtype=scores.dtype)
    s = np.where(mask > 0, scores, neg)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s) * (mask > 0)
    return e / e.sum(axis=-1, keepdims=True)


def masked_softmax_backward(p, dp):
    return p * (dp - np.sum(p * dp, axis=-1, keepdims=True))


def masked_mean(H, mask):
    """Mean over the time axis restricted to mask > 0; mask shape (B, T)."""
    n = mask.sum(axis=1, keepdims=True)
    return (H * mask[:, :, None]).sum(axis=1) / n


# ---------------------------------------------------------------- context ---

def context_forward(H_s, mask, tbar, Wa):
    """Self-attention over the sentence followed by aspect-query soft attention."""
    d_r = H_s.shape[2]
    scale = np.asarray(1.0 / np.sqrt(d_r), dtype=H_s.dtype)
    S = np.matmul(H_s, H_s.transpose(0, 2, 1)) * scale
    P = masked_softmax(S, mask[:, None, :])
    Hp = np.matmul(P, H_s) * mask[:, :, None]
    q = tbar @ Wa.T
    scores = np.einsum("btd,bd->bt", Hp, q)
    alpha = masked_softmax(scores, mask)
    R = np.einsum("bt,btd->bd", alpha, Hp)
    cache = (H_s, mask, tbar, Wa, P, Hp, q, alpha, scale)
    return R, alpha, cache


def context_backward(dR, cache):
    H_s, mask, tbar, Wa, P, Hp, q, alpha, scale = cache
    dalpha = np.einsum("bd,btd->bt", dR, Hp)
    dHp = alpha[:, :, None] * dR[:, None, :]
    dscores = masked_softmax_backward(alpha, dalpha)
    dHp += dscores[:, :, None] * q[:, None, :]
    dq = np.einsum("bt,btd->bd", dscores, Hp)
    dWa = dq.T @ tbar
    dtbar = dq @ Wa
    dHp *= mask[:, :, None]
    dP = np.matmul(dHp, H_s.transpose(0, 2, 1))
    dH_s = np.matmul(P.transpose(0, 2, 1), dHp)
    dS = masked_softmax_backward(P, dP)
    dH_s += (np.matmul(dS, H_s) + np.matmul(dS.transpose(0, 2, 1), H_s)) * scale
    return dH_s, dtbar, dWa


# ----------------------------------------------------------------- syntax ---

def gcn_forward(H, A, W, b, mask):
    """One graph-convolution layer: ReLU((A H W) / (D + 1) + b), rows re-masked."""
    denom = (A.sum(axis=2) + 1.0)[:, :, None]
    Z = np.matmul(A, H)
    U = np.matmul(Z, W) / denom + b
    out = np.maximum(U, 0.0) * mask[:, :, None]
    cache = (H, A, W, Z, denom, U > 0, mask)
    return out, cache


def gcn_backward(dout, cache, grads, w_key, b_key):
    H, A, W, Z, denom, pos, mask = cache
    dU = dout * pos * mask[:, :, None]
    grads[b_key] += dU.sum(axis=(0, 1))
    dM = dU / denom
    B, T, d = Z.shape
    grads[w_key] += Z.reshape(B * T, d).T @ dM.reshape(B * T, -1)
    dZ = np.matmul(dM, W.T)
    return np.matmul(A.transpose(0, 2, 1), dZ)


def syntax_forward(H_s, mask, A, aspect_mask, params):
    """Two GCN layers, aspect masking, and dot-product attention back onto H_s."""
    H1, cache1 = gcn_forward(H_s, A, params["gcn_W0"], params["gcn_b0"], mask)
    H2, cache2 = gcn_forward(H1, A, params["gcn_W1"], params["gcn_b1"], mask)
    svec = (H2 * aspect_mask[:, :, None]).sum(axis=1)
    beta = np.einsum("btd,bd->bt", H_s, svec)
    alpha = masked_softmax(beta, mask)
    R = np.einsum("bt,btd->bd", alpha, H_s)
    cache = (H_s, mask, aspect_mask, cache1, cache2, svec, alpha)
    return R, alpha, cache


def syntax_backward(dR, cache, grads):
    H_s, mask, aspect_mask, cache1, cache2, svec, alpha = cache
    dalpha = np.einsum("bd,btd->bt", dR, H_s)
    dH_s = alpha[:, :, None] * dR[:, None, :]
    dbeta = masked_softmax_backward(alpha, dalpha)
    dH_s += dbeta[:, :, None] * svec[:, None, :]
    dsvec = np.einsum("bt,btd->bd", dbeta, H_s)
    dH2 = dsvec[:, None, :] * aspect_mask[:, :, None]
    dH1 = gcn_backward(dH2, cache2, grads, "gcn_W1", "gcn_b1")
    dH_s += gcn_backward(dH1, cache1, grads, "gcn_W0", "gcn_b0")
    return dH_s


# -------------------------------------------------------------- knowledge ---

def knowledge_forward(H_s, mask, Kmat, K_t, amask, tbar, params):
    """Concatenate hidden states with knowledge rows, attend with the joint
    aspect query, project the pooled vector back to d_r."""
    G = np.concatenate([H_s, Kmat], axis=2)
    kbar = masked_mean(K_t, amask)
    q = np.concatenate([tbar, kbar], axis=1)
    v = q @ params["kn_Wk"].T
    scores = np.einsum("btd,bd->bt", G, v)
    gamma = masked_softmax(scores, mask)
    pooled = np.einsum("bt,btd->bd", gamma, G)
    R = pooled @ params["kn_Wp"] + params["kn_bp"]
    cache = (G, mask, q, v, gamma, pooled, params["kn_Wk"], params["kn_Wp"], H_s.shape[2])
    return R, gamma, cache


def knowledge_backward(dR, cache, grads):
    G, mask, q, v, gamma, pooled, Wk, Wp, d_r = cache
    grads["kn_bp"] += dR.sum(axis=0)
    grads["kn_Wp"] += pooled.T @ dR
    dpooled = dR @ Wp.T
    dgamma = np.einsum("bd,btd->bt", dpooled, G)
    dG = gamma[:, :, None] * dpooled[:, None, :]
    dscores = masked_softmax_backward(gamma, dgamma)
    dG += dscores[:, :, None] * v[:, None, :]
    dv = np.einsum("bt,btd->bd", dscores, G)
    grads["kn_Wk"] += dv.T @ q
    dq = dv @ Wk
    dH_s = dG[:, :, :d_r]  # knowledge rows are frozen inputs; their grads are dropped
    dtbar = dq[:, :d_r]
    return dH_s, dtbar


# -------------------------------------------- single-instance entry points ---

def _single(x, dtype=None):
    a = np.asarray(x, dtype=dtype)
    return a[None, ...]


def encode_shared(X_s, X_t, params):
    """(H_s, H_t) for one instance: shared-parameter BiLSTM views of sentence and aspect."""
    X_s, X_t = np.asarray(X_s), np.asarray(X_t)
    ones_s = np.ones((1, X_s.shape[0]), dtype=X_s.dtype)
    ones_t = np.ones((1, X_t.shape[0]), dtype=X_t.dtype)
    H_s, _ = bilstm_forward(X_s[None], ones_s, params, "lstm_s")
    prefix_t = "lstm_t" if "lstm_t_fwd_Wx" in params else "lstm_s"
    H_t, _ = bilstm_forward(X_t[None], ones_t, params, prefix_t)
    return H_s[0], H_t[0]


def context_branch(H_s, H_t, params):
    H_s, H_t = np.asarray(H_s), np.asarray(H_t)
    tbar = H_t.mean(axis=0)[None]
    mask = np.ones((1, H_s.shape[0]), dtype=H_s.dtype)
    R, _, _ = context_forward(H_s[None], mask, tbar, params["ctx_Wa"])
    return R[0]


def gcn_layer(H, A, W, b):
    H, A = np.asarray(H), np.asarray(A)
    mask = np.ones((1, H.shape[0]), dtype=H.dtype)
    out, _ = gcn_forward(H[None], A[None].astype(H.dtype), np.asarray(W), np.asarray(b), mask)
    return out[0]


def syntax_branch(H_s, A, aspect_start, aspect_len, params):
    H_s = np.asarray(H_s)
    m = H_s.shape[0]
    mask = np.ones((1, m), dtype=H_s.dtype)
    amask = np.zeros((1, m), dtype=H_s.dtype)
    amask[0, aspect_start : aspect_start + aspect_len] = 1.0
    R, _, _ = syntax_forward(H_s[None], mask, np.asarray(A, dtype=H_s.dtype)[None], amask, params)
    return R[0]


def knowledge_branch(H_s, K, K_t, H_t, params):
    H_s, K, K_t, H_t = map(np.asarray, (H_s, K, K_t, H_t))
    mask = np.ones((1, H_s.shape[0]), dtype=H_s.dtype)
    amask = np.ones((1, H_t.shape[0]), dtype=H_s.dtype)
    tbar = H_t.mean(axis=0)[None]
    R, _, _ = knowledge_forward(H_s[None], mask, K[None], K_t[None], amask, tbar, params)
    return R[0]
