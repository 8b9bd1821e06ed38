"""Pure numpy / pure Python versions of the compiled kernels.

Signatures and buffer conventions match ``_ckernels`` exactly.
"""
import numpy as np


def _sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_forward(z, c_prev, hc, gates, tanh_c):
    H = c_prev.shape[1]
    gi = _sigmoid(z[:, :H])
    gf = _sigmoid(z[:, H:2 * H])
    gg = np.tanh(z[:, 2 * H:3 * H])
    go = _sigmoid(z[:, 3 * H:])
    c = gf * c_prev + gi * gg
    tc = np.tanh(c)
    gates[:, :H] = gi
    gates[:, H:2 * H] = gf
    gates[:, 2 * H:3 * H] = gg
    gates[:, 3 * H:] = go
    tanh_c[...] = tc
    hc[:, :H] = go * tc
    hc[:, H:] = c


def lstm_backward(dhc, gates, tanh_c, c_prev, dz, dc_prev):
    H = c_prev.shape[1]
    gi = gates[:, :H]
    gf = gates[:, H:2 * H]
    gg = gates[:, 2 * H:3 * H]
    go = gates[:, 3 * H:]
    dh = dhc[:, :H]
    dc = dhc[:, H:] + dh * go * (1.0 - tanh_c * tanh_c)
    dz[:, :H] = dc * gg * gi * (1.0 - gi)
    dz[:, H:2 * H] = dc * c_prev * gf * (1.0 - gf)
    dz[:, 2 * H:3 * H] = dc * gi * (1.0 - gg * gg)
    dz[:, 3 * H:] = dh * tanh_c * go * (1.0 - go)
    dc_prev[...] = dc * gf


def lcs_length(a, b):
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b):
            if x == y:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = max(prev[j + 1], cur[j])
        prev = cur
    return prev[-1]
