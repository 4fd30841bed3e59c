"""Dilated causal convolution kernels: compiled extension or numpy fallback.

The compiled extension (`_convkernels`, Cython) is used when it imported
successfully; set GROUPDECODE_BACKEND=numpy or =compiled to force a choice.
Both backends implement the same contract:

    y[n, o, t] = b[o] + sum_{i,j} w[o, i, j] * x~[n, i, t - d*(K-1) + d*j]

with x~ the input left-padded by d*(K-1) zeros, so tap j=0 reads the oldest
sample and the output keeps the input's length.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _convkernels as _ext
except ImportError:  # extension not built; pure numpy still works
    _ext = None

_choice = os.environ.get("GROUPDECODE_BACKEND", "").strip().lower()
if _choice == "compiled":
    if _ext is None:
        raise ImportError(
            "GROUPDECODE_BACKEND=compiled but the _convkernels extension is not built"
        )
    _ACTIVE = "compiled"
elif _choice == "numpy":
    _ACTIVE = "numpy"
elif _choice == "":
    _ACTIVE = "compiled" if _ext is not None else "numpy"
else:
    raise ValueError(f"unknown GROUPDECODE_BACKEND value: {_choice!r}")


def backend_name() -> str:
    """Active kernel backend: 'compiled' or 'numpy'."""
    return _ACTIVE


def compiled_available() -> bool:
    return _ext is not None


def _check(x, w, b, dilation):
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise ValueError("expected x (N,Cin,T), w (Cout,Cin,K), b (Cout,)")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"w input channels {w.shape[1]} != x channels {x.shape[1]}")
    if b.shape[0] != w.shape[0]:
        raise ValueError(f"bias size {b.shape[0]} != output channels {w.shape[0]}")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {x.dtype}")


def _pad_left(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    n, c, t = x.shape
    xp = np.zeros((n, c, t + pad), dtype=x.dtype)
    xp[:, :, pad:] = x
    return xp


def _np_forward(x, w, b, dilation):
    n, cin, t = x.shape
    cout, _, k = w.shape
    pad = dilation * (k - 1)
    xp = _pad_left(x, pad)
    y = np.empty((n, cout, t), dtype=x.dtype)
    y[:] = b[None, :, None]
    for j in range(k):
        seg = xp[:, :, j * dilation : j * dilation + t]
        y += np.matmul(w[:, :, j], seg)
    return y


def _np_backward(x, w, dilation, dy):
    n, cin, t = x.shape
    cout, _, k = w.shape
    pad = dilation * (k - 1)
    xp = _pad_left(x, pad)
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for j in range(k):
        seg = xp[:, :, j * dilation : j * dilation + t]
        dw[:, :, j] = np.tensordot(dy, seg, axes=([0, 2], [0, 2]))
        dxp[:, :, j * dilation : j * dilation + t] += np.matmul(w[:, :, j].T, dy)
    db = dy.sum(axis=(0, 2))
    dx = dxp[:, :, pad:] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def conv1d_forward(x, w, b=None, dilation: int = 1) -> np.ndarray:
    """Batched dilated causal convolution; accepts (N,Cin,T) or (Cin,T)."""
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(np.asarray(w, dtype=x.dtype))
    if b is None:
        b = np.zeros(w.shape[0], dtype=x.dtype)
    b = np.ascontiguousarray(np.asarray(b, dtype=x.dtype))
    _check(x, w, b, dilation)
    if _ACTIVE == "compiled":
        y = _ext.conv1d_forward(x, w, b, int(dilation))
    else:
        y = _np_forward(x, w, b, int(dilation))
    return y[0] if single else y


def conv1d_backward(x, w, dilation: int, dy):
    """Gradients (dx, dw, db) of conv1d_forward given upstream dy."""
    x = np.ascontiguousarray(np.asarray(x))
    w = np.ascontiguousarray(np.asarray(w, dtype=x.dtype))
    dy = np.ascontiguousarray(np.asarray(dy, dtype=x.dtype))
    _check(x, w, np.zeros(w.shape[0], dtype=x.dtype), dilation)
    if dy.shape != (x.shape[0], w.shape[0], x.shape[2]):
        raise ValueError(f"dy shape {dy.shape} inconsistent with x/w")
    if _ACTIVE == "compiled":
        return _ext.conv1d_backward(x, w, int(dilation), dy)
    return _np_backward(x, w, int(dilation), dy)
