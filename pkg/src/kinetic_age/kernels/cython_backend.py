"""Compiled-kernel backend: thin wrappers around the Cython extension."""

from __future__ import annotations

import numpy as np

from . import _ctconv

NAME = "cython"


def _padded(x: np.ndarray, pad: int) -> np.ndarray:
    n, c, t, v = x.shape
    xp = np.zeros((n, c, t + 2 * pad, v), x.dtype)
    xp[:, :, pad : pad + t] = x
    return xp


def temporal_conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {x.dtype}")
    n, c, t, v = x.shape
    co, ci, k = w.shape
    pad = (k - 1) // 2
    xp = _padded(np.ascontiguousarray(x), pad)
    y = np.zeros((n, co, t, v), x.dtype)
    _ctconv.conv_forward(xp, np.ascontiguousarray(w), y)
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def temporal_conv_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    co, ci, k = w.shape
    pad = (k - 1) // 2
    xp = _padded(np.ascontiguousarray(x), pad)
    dy = np.ascontiguousarray(dy)
    dw = _ctconv.conv_dw(xp, dy, ci, k).astype(w.dtype)
    w_flip = np.ascontiguousarray(w.transpose(1, 0, 2)[:, :, ::-1])
    dx = temporal_conv_forward(dy, w_flip, None)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db
