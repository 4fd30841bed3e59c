# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dilated causal convolution kernels (float32/float64).

Same contract as the numpy fallback in backend.py: causal left-padding of
d*(K-1) zeros is handled by index arithmetic rather than materialising a
padded array.
"""

import numpy as np


ctypedef fused real:
    float
    double


def conv1d_forward(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, int dilation):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t pad = dilation * (k - 1)
    cdef Py_ssize_t bi, o, i, j, ti, start, off
    cdef real wv, bo

    if real is float:
        y_np = np.empty((n, cout, t), dtype=np.float32)
    else:
        y_np = np.empty((n, cout, t), dtype=np.float64)
    cdef real[:, :, ::1] y = y_np

    with nogil:
        for bi in range(n):
            for o in range(cout):
                bo = b[o]
                for ti in range(t):
                    y[bi, o, ti] = bo
                for i in range(cin):
                    for j in range(k):
                        wv = w[o, i, j]
                        if wv == 0:
                            continue
                        # x~ index = ti - pad + j*dilation
                        off = j * dilation - pad
                        start = -off if off < 0 else 0
                        for ti in range(start, t):
                            y[bi, o, ti] += wv * x[bi, i, ti + off]
    return y_np


def conv1d_backward(real[:, :, ::1] x, real[:, :, ::1] w, int dilation,
                    real[:, :, ::1] dy):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t pad = dilation * (k - 1)
    cdef Py_ssize_t bi, o, i, j, ti, start, off
    cdef real wv, acc

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    dx_np = np.zeros((n, cin, t), dtype=dt)
    dw_np = np.zeros((cout, cin, k), dtype=dt)
    db_np = np.zeros(cout, dtype=dt)
    cdef real[:, :, ::1] dx = dx_np
    cdef real[:, :, ::1] dw = dw_np
    cdef real[::1] db = db_np

    with nogil:
        for o in range(cout):
            acc = 0
            for bi in range(n):
                for ti in range(t):
                    acc += dy[bi, o, ti]
            db[o] = acc
        for o in range(cout):
            for i in range(cin):
                for j in range(k):
                    off = j * dilation - pad
                    start = -off if off < 0 else 0
                    acc = 0
                    for bi in range(n):
                        for ti in range(start, t):
                            acc += dy[bi, o, ti] * x[bi, i, ti + off]
                    dw[o, i, j] = acc
        for bi in range(n):
            for o in range(cout):
                for i in range(cin):
                    for j in range(k):
                        wv = w[o, i, j]
                        if wv == 0:
                            continue
                        off = j * dilation - pad
                        start = -off if off < 0 else 0
                        for ti in range(start, t):
                            dx[bi, i, ti + off] += wv * dy[bi, o, ti]
    return dx_np, dw_np, db_np
