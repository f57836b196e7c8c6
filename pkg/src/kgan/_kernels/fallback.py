"""Pure-numpy reference implementation of the LSTM cell kernels.

The compiled extension implements the same contract; both must agree to
floating-point roundoff. Gate layout within preactivations is [i | f | o | g].
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cell_forward(pre, c_prev, h_prev, mask):
    """One masked LSTM cell step for a batch.

    pre: (B, 4H) gate preactivations; mask: (B,) 0/1 floats. Masked rows carry
    h_prev/c_prev through unchanged. Returns (h, c, activated_gates, tanh_c).
    """
    n = c_prev.shape[1]
    gates = np.empty_like(pre)
    gates[:, : 3 * n] = _sigmoid(pre[:, : 3 * n])
    gates[:, 3 * n :] = np.tanh(pre[:, 3 * n :])
    i = gates[:, :n]
    f = gates[:, n : 2 * n]
    o = gates[:, 2 * n : 3 * n]
    g = gates[:, 3 * n :]
    c_new = f * c_prev + i * g
    tanh_c = np.tanh(c_new)
    m = mask[:, None]
    h = m * (o * tanh_c) + (1.0 - m) * h_prev
    c = m * c_new + (1.0 - m) * c_prev
    return h, c, gates, tanh_c


def cell_backward(gates, tanh_c, c_prev, mask, dh, dc):
    """Backward of cell_forward.

    dh/dc are the gradients w.r.t. the post-mask h/c of this step. Returns
    (dpre, dh_prev, dc_prev) where dh_prev excludes the recurrent-matmul term
    (the caller adds dpre @ Wh.T).
    """
    n = c_prev.shape[1]
    i = gates[:, :n]
    f = gates[:, n : 2 * n]
    o = gates[:, 2 * n : 3 * n]
    g = gates[:, 3 * n :]
    m = mask[:, None]
    dh_new = dh * m
    dh_prev = dh * (1.0 - m)
    dc_new = dc * m
    dc_prev = dc * (1.0 - m)
    do = dh_new * tanh_c
    dc_new = dc_new + dh_new * o * (1.0 - tanh_c * tanh_c)
    df = dc_new * c_prev
    dc_prev = dc_prev + dc_new * f
    di = dc_new * g
    dg = dc_new * i
    dpre = np.empty_like(gates)
    dpre[:, :n] = di * i * (1.0 - i)
    dpre[:, n : 2 * n] = df * f * (1.0 - f)
    dpre[:, 2 * n : 3 * n] = do * o * (1.0 - o)
    dpre[:, 3 * n :] = dg * (1.0 - g * g)
    return dpre, dh_prev, dc_prev
