"""Pure-numpy selective-scan kernels (fallback for the Cython extension).

Shapes: x [B,T,D], abar/bbar [B,T,D,N], c [B,T,N], mask [B,T,D], dskip [D].
The recurrence is sequential over T; per-step work is vectorized. An
optional `perm` reorders the traversal while tensors stay in their
original token layout (h is stored at the visited token's index).
"""

import numpy as np

BACKEND_NAME = "numpy"


def scan_forward(x, abar, bbar, c, mask, dskip, perm=None):
    B, T, D = x.shape
    N = abar.shape[-1]
    h = np.empty((B, T, D, N), dtype=x.dtype)
    y = np.empty((B, T, D), dtype=x.dtype)
    state = np.zeros((B, D, N), dtype=x.dtype)
    order = range(T) if perm is None else perm
    for t in order:
        state = abar[:, t] * state + bbar[:, t] * x[:, t, :, None]
        h[:, t] = state
        # y_t = sum_n (c_t[n] * m_t[d]) h_t[d,n] + D[d] x_t[d]
        y[:, t] = mask[:, t] * np.einsum("bdn,bn->bd", state, c[:, t]) + dskip * x[:, t]
    return y, h


def scan_backward(gy, x, abar, bbar, c, mask, dskip, h, perm=None):
    B, T, D = x.shape
    N = abar.shape[-1]
    gx = np.empty_like(x)
    gabar = np.empty_like(abar)
    gbbar = np.empty_like(bbar)
    gc = np.empty_like(c)
    gdskip = np.zeros_like(dskip)
    dh = np.zeros((B, D, N), dtype=x.dtype)
    order = np.arange(T) if perm is None else perm
    for s in range(T - 1, -1, -1):
        t = order[s]
        gym = gy[:, t] * mask[:, t]  # [B,D]
        dh = dh + gym[:, :, None] * c[:, t, None, :]
        gc[:, t] = np.einsum("bd,bdn->bn", gym, h[:, t])
        hprev = h[:, order[s - 1]] if s > 0 else np.zeros((B, D, N), dtype=x.dtype)
        gabar[:, t] = dh * hprev
        gbbar[:, t] = dh * x[:, t, :, None]
        gx[:, t] = (dh * bbar[:, t]).sum(axis=-1) + gy[:, t] * dskip
        gdskip += (gy[:, t] * x[:, t]).sum(axis=0)
        dh = dh * abar[:, t]
    return gx, gabar, gbbar, gc, gdskip
