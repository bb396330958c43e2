"""Array primitives for the network layers: forwards and exact gradients.

All sequence tensors are (N, C, T, V). The temporal convolution is delegated
to the selected kernel backend; everything else maps onto BLAS-backed
matmuls.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..kernels import temporal_conv_backward, temporal_conv_forward

__all__ = [
    "conv1x1_forward",
    "conv1x1_backward",
    "graph_mix_forward",
    "graph_mix_backward",
    "conv1d_forward",
    "conv1d_backward",
    "temporal_conv_forward",
    "temporal_conv_backward",
    "sigmoid",
]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv1x1_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Per-position channel map: y[n,o,t,v] = sum_c w[o,c] x[n,c,t,v] + b[o]."""
    n, c, t, v = x.shape
    y = np.matmul(w, x.reshape(n, c, t * v)).reshape(n, w.shape[0], t, v)
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def conv1x1_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, c, t, v = x.shape
    co = w.shape[0]
    dy2 = dy.reshape(n, co, t * v)
    x2 = x.reshape(n, c, t * v)
    dx = np.matmul(w.T, dy2).reshape(n, c, t, v)
    dw = np.matmul(dy2, x2.transpose(0, 2, 1)).sum(axis=0)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def graph_mix_forward(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Joint-dimension contraction y[n,c,t,v] = sum_u x[n,c,t,u] g[u,v].

    ``g`` is either a shared (V, V) matrix or per-sample (N, V, V).
    """
    if g.ndim == 2:
        return x @ g
    return x @ g[:, None, :, :]


def graph_mix_backward(
    x: np.ndarray, g: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (dx, dg); dg keeps g's shape (summed over the batch if shared)."""
    if g.ndim == 2:
        dx = dy @ g.T
        dg = np.tensordot(x, dy, axes=([0, 1, 2], [0, 1, 2]))
    else:
        dx = dy @ g.transpose(0, 2, 1)[:, None, :, :]
        n, c, t, v = x.shape
        dg = np.matmul(
            x.reshape(n, c * t, v).transpose(0, 2, 1), dy.reshape(n, c * t, v)
        )
    return dx, dg


def conv1d_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """'Same'-padded 1D convolution on (N, C, L): y[n,o,l] = sum_{c,k} w[o,c,k] x[n,c,l+k-p]."""
    n, c, length = x.shape
    co, ci, k = w.shape
    pad = (k - 1) // 2
    xp = np.zeros((n, c, length + 2 * pad), x.dtype)
    xp[:, :, pad : pad + length] = x
    win = sliding_window_view(xp, k, axis=2)  # (n, c, l, k)
    y = np.einsum("ock,nclk->nol", w, win, optimize=True)
    if bias is not None:
        y += bias[None, :, None]
    return y


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, c, length = x.shape
    co, ci, k = w.shape
    pad = (k - 1) // 2
    xp = np.zeros((n, c, length + 2 * pad), x.dtype)
    xp[:, :, pad : pad + length] = x
    win = sliding_window_view(xp, k, axis=2)
    dw = np.einsum("nol,nclk->ock", dy, win, optimize=True)
    w_flip = np.ascontiguousarray(w.transpose(1, 0, 2)[:, :, ::-1])
    dx = conv1d_forward(dy, w_flip, None)
    db = dy.sum(axis=(0, 2))
    return dx, dw, db
