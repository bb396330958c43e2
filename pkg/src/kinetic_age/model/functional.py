"""Functional forms of the network operations with explicit weights.

Thin wrappers over the layer implementations, convenient for direct
numerical checks against reference computations. Inputs may be (C, T, V) or
batched (N, C, T, V); the output matches the input's batchedness.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .layers import AdaptiveGraphConv, GraphConv, STCAttention, TemporalConv


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (C, T, V) or (N, C, T, V), got shape {x.shape}")


def gcn_forward(x: np.ndarray, adjacency: np.ndarray, w: np.ndarray,
                b: np.ndarray | None = None) -> np.ndarray:
    """sum_k W_k (X A_k) with per-subset 1x1 maps w (K, C_out, C_in)."""
    xb, squeeze = _batched(x)
    adjacency = np.asarray(adjacency)
    w = np.asarray(w)
    rng = np.random.default_rng(0)
    layer = GraphConv(w.shape[2], w.shape[1], adjacency, rng, dtype=xb.dtype)
    layer.w.data[...] = w
    layer.b.data[...] = 0.0 if b is None else b
    y = layer.forward(xb)
    return y[0] if squeeze else y


def adaptive_gcn_forward(x: np.ndarray, bmat: np.ndarray, theta_w: np.ndarray,
                         theta_b: np.ndarray, phi_w: np.ndarray, phi_b: np.ndarray,
                         alpha: float, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """sum_k W_k X (B_k + alpha C_k) with the per-sample similarity graphs C_k."""
    xb, squeeze = _batched(x)
    bmat = np.asarray(bmat)
    w = np.asarray(w)
    rng = np.random.default_rng(0)
    layer = AdaptiveGraphConv(w.shape[2], w.shape[1], bmat, theta_w.shape[1], rng,
                              dtype=xb.dtype)
    layer.bmat.data[...] = bmat
    layer.theta_w.data[...] = theta_w
    layer.theta_b.data[...] = theta_b
    layer.phi_w.data[...] = phi_w
    layer.phi_b.data[...] = phi_b
    layer.alpha.data[...] = alpha
    layer.w.data[...] = w
    layer.b.data[...] = 0.0 if b is None else b
    y = layer.forward(xb)
    return y[0] if squeeze else y


def sample_similarity_graphs(x: np.ndarray, bmat: np.ndarray, theta_w, theta_b,
                             phi_w, phi_b) -> np.ndarray:
    """The C_k graphs alone, shape (N, K, V, V) (or (K, V, V) unbatched)."""
    xb, squeeze = _batched(x)
    rng = np.random.default_rng(0)
    layer = AdaptiveGraphConv(xb.shape[1], xb.shape[1], np.asarray(bmat),
                              theta_w.shape[1], rng, dtype=xb.dtype)
    layer.theta_w.data[...] = theta_w
    layer.theta_b.data[...] = theta_b
    layer.phi_w.data[...] = phi_w
    layer.phi_b.data[...] = phi_b
    c = layer.sample_graphs(xb)
    return c[0] if squeeze else c


def stc_attention(x: np.ndarray, ws: np.ndarray, ws_b: np.ndarray, wt: np.ndarray,
                  wt_b: np.ndarray, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray,
                  b2: np.ndarray, masks_out: dict | None = None) -> np.ndarray:
    """Sequential residual spatial -> temporal -> channel attention."""
    xb, squeeze = _batched(x)
    channels = xb.shape[1]
    rng = np.random.default_rng(0)
    layer = STCAttention(channels, max(channels // max(w1.shape[0], 1), 1),
                         ws.shape[2], wt.shape[2], rng, dtype=xb.dtype)
    # Rebuild exact parameter shapes (reduction inferred from w1).
    layer.w1.data = np.asarray(w1, dtype=xb.dtype)
    layer.w1.grad = np.zeros_like(layer.w1.data)
    layer.b1.data = np.asarray(b1, dtype=xb.dtype)
    layer.b1.grad = np.zeros_like(layer.b1.data)
    layer.w2.data = np.asarray(w2, dtype=xb.dtype)
    layer.w2.grad = np.zeros_like(layer.w2.data)
    layer.b2.data = np.asarray(b2, dtype=xb.dtype)
    layer.b2.grad = np.zeros_like(layer.b2.data)
    layer.ws.data[...] = ws
    layer.ws_b.data[...] = ws_b
    layer.wt.data[...] = wt
    layer.wt_b.data[...] = wt_b
    y = layer.forward(xb)
    if masks_out is not None:
        masks_out.update(layer.masks())
    return y[0] if squeeze else y


def tcn_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """'Same'-padded temporal convolution with kernel w (C_out, C_in, K_t)."""
    xb, squeeze = _batched(x)
    y = ops.temporal_conv_forward(xb, np.asarray(w),
                                  None if b is None else np.asarray(b))
    return y[0] if squeeze else y
