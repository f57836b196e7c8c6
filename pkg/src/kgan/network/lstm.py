"""Masked BiLSTM over padded batches, with hand-written backward pass.

Sequences are processed time-major internally so that every per-step slice is
C-contiguous for the cell kernels; the gemms stay in numpy/BLAS. The kernel
backend (compiled extension or numpy fallback) handles the pointwise math.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as K


def _direction_forward(X, mask, Wx, Wh, b, reverse):
    # X: (T, B, d_in), mask: (T, B), both C-contiguous
    T, B, d_in = X.shape
    n = Wh.shape[0]
    pre_in = (X.reshape(T * B, d_in) @ Wx).reshape(T, B, 4 * n) + b
    h = np.zeros((B, n), dtype=X.dtype)
    c = np.zeros((B, n), dtype=X.dtype)
    H = np.empty((T, B, n), dtype=X.dtype)
    gates_all = np.empty((T, B, 4 * n), dtype=X.dtype)
    tanh_all = np.empty((T, B, n), dtype=X.dtype)
    cprev_all = np.empty((T, B, n), dtype=X.dtype)
    hprev_all = np.empty((T, B, n), dtype=X.dtype)
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        pre = pre_in[t] + h @ Wh
        hprev_all[t] = h
        cprev_all[t] = c
        h, c, gates, tanh_c = K.cell_forward(pre, c, h, mask[t])
        H[t] = h
        gates_all[t] = gates
        tanh_all[t] = tanh_c
    H *= mask[:, :, None]
    cache = (X, mask, Wx, Wh, gates_all, tanh_all, cprev_all, hprev_all, reverse)
    return H, cache


def _direction_backward(dH, cache):
    X, mask, Wx, Wh, gates_all, tanh_all, cprev_all, hprev_all, reverse = cache
    T, B, d_in = X.shape
    n = Wh.shape[0]
    dpre_all = np.empty((T, B, 4 * n), dtype=X.dtype)
    dh_carry = np.zeros((B, n), dtype=X.dtype)
    dc_carry = np.zeros((B, n), dtype=X.dtype)
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        dh = dH[t] * mask[t][:, None] + dh_carry
        dpre, dh_prev, dc_prev = K.cell_backward(
            gates_all[t], tanh_all[t], cprev_all[t], mask[t], dh, dc_carry
        )
        dpre_all[t] = dpre
        dh_carry = dh_prev + dpre @ Wh.T
        dc_carry = dc_prev
    flat_dpre = dpre_all.reshape(T * B, 4 * n)
    dX = (flat_dpre @ Wx.T).reshape(T, B, d_in)
    dWx = X.reshape(T * B, d_in).T @ flat_dpre
    dWh = hprev_all.reshape(T * B, n).T @ flat_dpre
    db = flat_dpre.sum(axis=0)
    return dX, dWx, dWh, db


def bilstm_forward(X, mask, params, prefix):
    """Concatenated forward/backward hidden states, (B, T, 2*hidden), zero at pads."""
    X_tm = np.ascontiguousarray(X.transpose(1, 0, 2))
    mask_tm = np.ascontiguousarray(mask.T)
    Hf, cache_f = _direction_forward(
        X_tm, mask_tm, params[f"{prefix}_fwd_Wx"], params[f"{prefix}_fwd_Wh"],
        params[f"{prefix}_fwd_b"], False,
    )
    Hb, cache_b = _direction_forward(
        X_tm, mask_tm, params[f"{prefix}_bwd_Wx"], params[f"{prefix}_bwd_Wh"],
        params[f"{prefix}_bwd_b"], True,
    )
    H = np.ascontiguousarray(np.concatenate([Hf, Hb], axis=2).transpose(1, 0, 2))
    return H, (cache_f, cache_b, prefix)


def bilstm_backward(dH, cache, grads):
    """Accumulate parameter gradients into ``grads``; returns dX (B, T, d_in)."""
    cache_f, cache_b, prefix = cache
    n = cache_f[3].shape[0]
    dH_tm = dH.transpose(1, 0, 2)
    dXf, dWxf, dWhf, dbf = _direction_backward(dH_tm[:, :, :n], cache_f)
    dXb, dWxb, dWhb, dbb = _direction_backward(dH_tm[:, :, n:], cache_b)
    grads[f"{prefix}_fwd_Wx"] += dWxf
    grads[f"{prefix}_fwd_Wh"] += dWhf
    grads[f"{prefix}_fwd_b"] += dbf
    grads[f"{prefix}_bwd_Wx"] += dWxb
    grads[f"{prefix}_bwd_Wh"] += dWhb
    grads[f"{prefix}_bwd_b"] += dbb
    return np.ascontiguousarray((dXf + dXb).transpose(1, 0, 2))
