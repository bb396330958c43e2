"""Pure-numpy temporal convolution kernels.

Reference semantics for the compiled backend: 'same'-padded stride-1
convolution along the time axis of (N, C, T, V) tensors. The forward pass
goes through an im2col window view feeding one large matmul.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _padded(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    n, c, t, v = x.shape
    xp = np.zeros((n, c, t + 2 * pad, v), x.dtype)
    xp[:, :, pad : pad + t] = x
    return xp


def temporal_conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """y[n,o,t,v] = sum_{c,k} w[o,c,k] * x[n,c,t+k-pad,v] (+ bias[o])."""
    co, ci, k = w.shape
    pad = (k - 1) // 2
    win = sliding_window_view(_padded(x, pad), k, axis=2)  # (n, c, t, v, k)
    y = np.einsum("ock,nctvk->notv", w, win, optimize=True)
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def temporal_conv_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the 'same'-padded temporal convolution.

    dx is itself a 'same'-padded convolution of dy with the kernel flipped in
    time and transposed in channels.
    """
    co, ci, k = w.shape
    pad = (k - 1) // 2
    win = sliding_window_view(_padded(x, pad), k, axis=2)
    dw = np.einsum("notv,nctvk->ock", dy, win, optimize=True)
    w_flip = np.ascontiguousarray(w.transpose(1, 0, 2)[:, :, ::-1])
    dx = temporal_conv_forward(dy, w_flip, None)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db
