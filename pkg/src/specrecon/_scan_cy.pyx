# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython selective-scan kernels (hot inner loop of the network).

Same contract as _scan_np; compiled for float32 and float64 via a fused
type. The optional `perm` argument reorders the traversal while tensors
stay in their original token layout.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double

BACKEND_NAME = "cython"


def scan_forward(real[:, :, ::1] x,
                 real[:, :, :, ::1] abar,
                 real[:, :, :, ::1] bbar,
                 real[:, :, ::1] c,
                 real[:, :, ::1] mask,
                 real[::1] dskip,
                 perm=None):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], D = x.shape[2], N = abar.shape[3]
    cdef Py_ssize_t b, s, t, tp, d, n
    cdef real acc, xv, hv
    cdef long long[::1] order

    if perm is None:
        order = np.arange(T, dtype=np.int64)
    else:
        order = np.ascontiguousarray(perm, dtype=np.int64)

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    y_arr = np.empty((B, T, D), dtype=dtype)
    h_arr = np.empty((B, T, D, N), dtype=dtype)
    cdef real[:, :, ::1] y = y_arr
    cdef real[:, :, :, ::1] h = h_arr

    with nogil:
        for b in range(B):
            for s in range(T):
                t = order[s]
                tp = order[s - 1] if s > 0 else 0
                for d in range(D):
                    xv = x[b, t, d]
                    acc = 0
                    for n in range(N):
                        if s == 0:
                            hv = bbar[b, t, d, n] * xv
                        else:
                            hv = abar[b, t, d, n] * h[b, tp, d, n] + bbar[b, t, d, n] * xv
                        h[b, t, d, n] = hv
                        acc = acc + c[b, t, n] * hv
                    y[b, t, d] = mask[b, t, d] * acc + dskip[d] * xv
    return y_arr, h_arr


def scan_backward(real[:, :, ::1] gy,
                  real[:, :, ::1] x,
                  real[:, :, :, ::1] abar,
                  real[:, :, :, ::1] bbar,
                  real[:, :, ::1] c,
                  real[:, :, ::1] mask,
                  real[::1] dskip,
                  real[:, :, :, ::1] h,
                  perm=None):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], D = x.shape[2], N = abar.shape[3]
    cdef Py_ssize_t b, s, t, tp, d, n
    cdef real gym, xv, dhv, hprev, gxv
    cdef long long[::1] order

    if perm is None:
        order = np.arange(T, dtype=np.int64)
    else:
        order = np.ascontiguousarray(perm, dtype=np.int64)

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    gx_arr = np.empty((B, T, D), dtype=dtype)
    gabar_arr = np.empty((B, T, D, N), dtype=dtype)
    gbbar_arr = np.empty((B, T, D, N), dtype=dtype)
    gc_arr = np.zeros((B, T, N), dtype=dtype)
    gdskip_arr = np.zeros((B, D), dtype=dtype)
    dh_arr = np.zeros((B, D, N), dtype=dtype)

    cdef real[:, :, ::1] gx = gx_arr
    cdef real[:, :, :, ::1] gabar = gabar_arr
    cdef real[:, :, :, ::1] gbbar = gbbar_arr
    cdef real[:, :, ::1] gc = gc_arr
    cdef real[:, ::1] gdskip = gdskip_arr
    cdef real[:, :, ::1] dh = dh_arr

    with nogil:
        for b in range(B):
            for s in range(T - 1, -1, -1):
                t = order[s]
                tp = order[s - 1] if s > 0 else 0
                for d in range(D):
                    xv = x[b, t, d]
                    gym = gy[b, t, d] * mask[b, t, d]
                    gxv = gy[b, t, d] * dskip[d]
                    for n in range(N):
                        dhv = dh[b, d, n] + gym * c[b, t, n]
                        gc[b, t, n] += gym * h[b, t, d, n]
                        if s > 0:
                            hprev = h[b, tp, d, n]
                        else:
                            hprev = 0
                        gabar[b, t, d, n] = dhv * hprev
                        gbbar[b, t, d, n] = dhv * xv
                        gxv = gxv + dhv * bbar[b, t, d, n]
                        dh[b, d, n] = dhv * abar[b, t, d, n]
                    gx[b, t, d] = gxv
                    gdskip[b, d] += gy[b, t, d] * xv
    return gx_arr, gabar_arr, gbbar_arr, gc_arr, gdskip_arr.sum(axis=0)
