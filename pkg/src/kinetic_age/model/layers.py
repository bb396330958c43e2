"""Network layers with hand-written exact reverse-mode gradients.

Every layer caches what its backward pass needs during forward; calling
``backward`` consumes that cache and accumulates parameter gradients into
``Param.grad``. Sequence tensors are (N, C, T, V) throughout.
"""

from __future__ import annotations

import numpy as np

from . import ops


class Param:
    """A learnable tensor with its gradient accumulator."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)


class Module:
    """Minimal composite with named parameters, buffers, and children."""

    def __init__(self):
        self._params: dict[str, Param] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}

    def add_param(self, name: str, data: np.ndarray) -> Param:
        p = Param(data)
        self._params[name] = p
        return p

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = np.asarray(data)
        return self._buffers[name]

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def params(self, prefix: str = "") -> dict[str, Param]:
        out = {prefix + name: p for name, p in self._params.items()}
        for cname, child in self._children.items():
            out.update(child.params(prefix + cname + "."))
        return out

    def buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + name: b for name, b in self._buffers.items()}
        for cname, child in self._children.items():
            out.update(child.buffers(prefix + cname + "."))
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if "." in name:
            head, rest = name.split(".", 1)
            self._children[head].set_buffer(rest, value)
        else:
            self._buffers[name][...] = value

    def zero_grads(self) -> None:
        for p in self.params().values():
            p.grad[...] = 0.0

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params().values())


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                   dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ReLU(Module):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Dropout(Module):
    """Inverted dropout: zero with probability p, rescale survivors by 1/(1-p)."""

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator) -> np.ndarray:
        if not training or self.p == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        return dy * self._mask


class _BatchNormBase(Module):
    """Shared batch-norm math; subclasses fix the reduction axes and shapes."""

    def __init__(self, feat_shape: tuple[int, ...], axes: tuple[int, ...],
                 bcast: tuple[int, ...], momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float64):
        super().__init__()
        self.axes = axes
        self.bcast = bcast
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(feat_shape, dtype))
        self.beta = self.add_param("beta", np.zeros(feat_shape, dtype))
        self.add_buffer("running_mean", np.zeros(feat_shape, dtype))
        self.add_buffer("running_var", np.ones(feat_shape, dtype))

    def _b(self, a: np.ndarray) -> np.ndarray:
        return a.reshape(self.bcast)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if training:
            mean = x.mean(axis=self.axes)
            var = x.var(axis=self.axes)
            m = self.momentum
            self._buffers["running_mean"][...] = (1 - m) * self._buffers["running_mean"] + m * mean
            self._buffers["running_var"][...] = (1 - m) * self._buffers["running_var"] + m * var
        else:
            mean = self._buffers["running_mean"]
            var = self._buffers["running_var"]
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._b(mean)) * self._b(invstd)
        self._xhat = xhat
        self._invstd = invstd
        self._training = training
        self._m = x.size // mean.size
        return self._b(self.gamma.data) * xhat + self._b(self.beta.data)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, invstd = self._xhat, self._invstd
        self.gamma.grad += (dy * xhat).sum(axis=self.axes)
        self.beta.grad += dy.sum(axis=self.axes)
        dxhat = dy * self._b(self.gamma.data)
        if not self._training:
            return dxhat * self._b(invstd)
        m = self._m
        term = dxhat - dxhat.mean(axis=self.axes, keepdims=True) \
            - xhat * (dxhat * xhat).sum(axis=self.axes, keepdims=True) / m
        return term * self._b(invstd)


class BatchNorm(_BatchNormBase):
    """Per-channel normalization of (N, C, T, V) over batch, time, joints."""

    def __init__(self, channels: int, dtype=np.float64, **kw):
        super().__init__((channels,), (0, 2, 3), (1, channels, 1, 1), dtype=dtype, **kw)


class DataBatchNorm(_BatchNormBase):
    """Input normalization per (channel, joint) pair over batch and time."""

    def __init__(self, channels: int, joints: int, dtype=np.float64, **kw):
        super().__init__((channels, joints), (0, 2), (1, channels, 1, joints), dtype=dtype, **kw)


class Conv1x1(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.w = self.add_param("w", fan_in_uniform(rng, (cout, cin), cin, dtype))
        self.b = self.add_param("b", fan_in_uniform(rng, (cout,), cin, dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return ops.conv1x1_forward(x, self.w.data, self.b.data)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = ops.conv1x1_backward(self._x, self.w.data, dy)
        self.w.grad += dw
        self.b.grad += db
        return dx


class TemporalConv(Module):
    """'Same'-padded K_t x 1 convolution along the time axis."""

    def __init__(self, cin: int, cout: int, kernel_t: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        if kernel_t % 2 != 1:
            raise ValueError("temporal kernel size must be odd")
        fan = cin * kernel_t
        self.w = self.add_param("w", fan_in_uniform(rng, (cout, cin, kernel_t), fan, dtype))
        self.b = self.add_param("b", fan_in_uniform(rng, (cout,), fan, dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return ops.temporal_conv_forward(x, self.w.data, self.b.data)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = ops.temporal_conv_backward(self._x, self.w.data, dy)
        self.w.grad += dw
        self.b.grad += db
        return dx


class GraphConv(Module):
    """Fixed-graph spatial convolution: sum_k W_k (X A_k)."""

    def __init__(self, cin: int, cout: int, adjacency: np.ndarray,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.k_v = adjacency.shape[0]
        self.add_buffer("a", adjacency.astype(dtype))
        self.w = self.add_param("w", fan_in_uniform(rng, (self.k_v, cout, cin), cin, dtype))
        self.b = self.add_param("b", fan_in_uniform(rng, (self.k_v, cout), cin, dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        a = self._buffers["a"]
        y = None
        for k in range(self.k_v):
            mixed = ops.graph_mix_forward(x, a[k])
            yk = ops.conv1x1_forward(mixed, self.w.data[k], self.b.data[k])
            y = yk if y is None else y + yk
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        a = self._buffers["a"]
        dx = np.zeros_like(x)
        for k in range(self.k_v):
            mixed = ops.graph_mix_forward(x, a[k])
            dmixed, dwk, dbk = ops.conv1x1_backward(mixed, self.w.data[k], dy)
            self.w.grad[k] += dwk
            self.b.grad[k] += dbk
            dx += ops.graph_mix_backward(x, a[k], dmixed)[0]
        return dx


def column_softmax(s: np.ndarray) -> np.ndarray:
    """Softmax over the source axis so every column sums to 1; s is (..., U, V)."""
    z = s - s.max(axis=-2, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-2, keepdims=True)


class AdaptiveGraphConv(Module):
    """Adaptive spatial convolution: sum_k W_k X (B_k + alpha C_k).

    B_k is an unconstrained learnable graph initialized from the normalized
    adjacency. C_k is the per-sample similarity graph: both input embeddings
    (1x1 channel maps of dimension ``embed_dim``) are averaged over time and
    combined into a V x V score matrix, column-softmaxed so that incoming
    weights of every joint sum to one.
    """

    def __init__(self, cin: int, cout: int, adjacency: np.ndarray, embed_dim: int,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.k_v = adjacency.shape[0]
        self.embed_dim = embed_dim
        self.bmat = self.add_param("bmat", adjacency.astype(dtype).copy())
        self.theta_w = self.add_param(
            "theta_w", fan_in_uniform(rng, (self.k_v, embed_dim, cin), cin, dtype))
        self.theta_b = self.add_param(
            "theta_b", fan_in_uniform(rng, (self.k_v, embed_dim), cin, dtype))
        self.phi_w = self.add_param(
            "phi_w", fan_in_uniform(rng, (self.k_v, embed_dim, cin), cin, dtype))
        self.phi_b = self.add_param(
            "phi_b", fan_in_uniform(rng, (self.k_v, embed_dim), cin, dtype))
        self.alpha = self.add_param("alpha", np.zeros((), dtype))
        self.w = self.add_param("w", fan_in_uniform(rng, (self.k_v, cout, cin), cin, dtype))
        self.b = self.add_param("b", fan_in_uniform(rng, (self.k_v, cout), cin, dtype))

    def sample_graphs(self, x: np.ndarray) -> np.ndarray:
        """Per-sample similarity graphs C_k for input (N, C, T, V) -> (N, K, V, V)."""
        xm = x.mean(axis=2)
        out = []
        for k in range(self.k_v):
            e1 = np.matmul(self.theta_w.data[k], xm) + self.theta_b.data[k][None, :, None]
            e2 = np.matmul(self.phi_w.data[k], xm) + self.phi_b.data[k][None, :, None]
            s = np.matmul(e1.transpose(0, 2, 1), e2)
            out.append(column_softmax(s))
        return np.stack(out, axis=1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        xm = x.mean(axis=2)
        self._xm = xm
        self._e1, self._e2, self._c = [], [], []
        y = None
        alpha = self.alpha.data
        for k in range(self.k_v):
            e1 = np.matmul(self.theta_w.data[k], xm) + self.theta_b.data[k][None, :, None]
            e2 = np.matmul(self.phi_w.data[k], xm) + self.phi_b.data[k][None, :, None]
            s = np.matmul(e1.transpose(0, 2, 1), e2)
            c = column_softmax(s)
            g = self.bmat.data[k][None] + alpha * c
            mixed = ops.graph_mix_forward(x, g)
            yk = ops.conv1x1_forward(mixed, self.w.data[k], self.b.data[k])
            y = yk if y is None else y + yk
            self._e1.append(e1)
            self._e2.append(e2)
            self._c.append(c)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, xm = self._x, self._xm
        n, cin, t, v = x.shape
        alpha = self.alpha.data
        dx = np.zeros_like(x)
        dxm = np.zeros_like(xm)
        for k in range(self.k_v):
            e1, e2, c = self._e1[k], self._e2[k], self._c[k]
            g = self.bmat.data[k][None] + alpha * c
            mixed = ops.graph_mix_forward(x, g)
            dmixed, dwk, dbk = ops.conv1x1_backward(mixed, self.w.data[k], dy)
            self.w.grad[k] += dwk
            self.b.grad[k] += dbk
            dxk, dg = ops.graph_mix_backward(x, g, dmixed)
            dx += dxk
            self.bmat.grad[k] += dg.sum(axis=0)
            self.alpha.grad += (c * dg).sum()
            dc = alpha * dg
            ds = c * (dc - (dc * c).sum(axis=1, keepdims=True))
            de1 = np.matmul(e2, ds.transpose(0, 2, 1))
            de2 = np.matmul(e1, ds)
            self.theta_w.grad[k] += np.matmul(de1, xm.transpose(0, 2, 1)).sum(axis=0)
            self.theta_b.grad[k] += de1.sum(axis=(0, 2))
            self.phi_w.grad[k] += np.matmul(de2, xm.transpose(0, 2, 1)).sum(axis=0)
            self.phi_b.grad[k] += de2.sum(axis=(0, 2))
            dxm += np.matmul(self.theta_w.data[k].T, de1)
            dxm += np.matmul(self.phi_w.data[k].T, de2)
        dx += dxm[:, :, None, :] / t
        return dx


class STCAttention(Module):
    """Sequential residual spatial / temporal / channel attention.

    Each stage computes a sigmoid mask from the current tensor and applies it
    residually: x <- x + x * mask. The channel stage is a squeeze-and-excite
    bottleneck with reduction ``r``.
    """

    def __init__(self, channels: int, reduction: int, spatial_kernel: int,
                 temporal_kernel: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.ws = self.add_param(
            "ws", fan_in_uniform(rng, (1, channels, spatial_kernel), channels * spatial_kernel, dtype))
        self.ws_b = self.add_param(
            "ws_b", fan_in_uniform(rng, (1,), channels * spatial_kernel, dtype))
        self.wt = self.add_param(
            "wt", fan_in_uniform(rng, (1, channels, temporal_kernel), channels * temporal_kernel, dtype))
        self.wt_b = self.add_param(
            "wt_b", fan_in_uniform(rng, (1,), channels * temporal_kernel, dtype))
        self.w1 = self.add_param("w1", fan_in_uniform(rng, (hidden, channels), channels, dtype))
        self.b1 = self.add_param("b1", fan_in_uniform(rng, (hidden,), channels, dtype))
        self.w2 = self.add_param("w2", fan_in_uniform(rng, (channels, hidden), hidden, dtype))
        self.b2 = self.add_param("b2", fan_in_uniform(rng, (channels,), hidden, dtype))

    def masks(self) -> dict[str, np.ndarray]:
        """Masks computed during the most recent forward pass."""
        return {"spatial": self._ms[:, 0], "temporal": self._mt[:, 0], "channel": self._mc}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x0 = x
        pool_t = x.mean(axis=2)  # (N, C, V)
        self._pool_t = pool_t
        ms = ops.sigmoid(ops.conv1d_forward(pool_t, self.ws.data, self.ws_b.data))  # (N,1,V)
        self._ms = ms
        x1 = x + x * ms[:, :, None, :]
        self._x1 = x1

        pool_v = x1.mean(axis=3)  # (N, C, T)
        self._pool_v = pool_v
        mt = ops.sigmoid(ops.conv1d_forward(pool_v, self.wt.data, self.wt_b.data))  # (N,1,T)
        self._mt = mt
        x2 = x1 + x1 * mt[:, :, :, None]
        self._x2 = x2

        pool_tv = x2.mean(axis=(2, 3))  # (N, C)
        self._pool_tv = pool_tv
        hidden_pre = pool_tv @ self.w1.data.T + self.b1.data
        hidden = np.maximum(hidden_pre, 0.0)
        self._hidden = hidden
        mc = ops.sigmoid(hidden @ self.w2.data.T + self.b2.data)  # (N, C)
        self._mc = mc
        return x2 + x2 * mc[:, :, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x2, mc, hidden = self._x2, self._mc, self._hidden
        n, c, t, v = x2.shape
        dx2 = dy * (1.0 + mc[:, :, None, None])
        dmc = (dy * x2).sum(axis=(2, 3))
        dz = dmc * mc * (1.0 - mc)
        self.w2.grad += dz.T @ hidden
        self.b2.grad += dz.sum(axis=0)
        dh = dz @ self.w2.data
        dh = dh * (hidden > 0)
        self.w1.grad += dh.T @ self._pool_tv
        self.b1.grad += dh.sum(axis=0)
        dpool_tv = dh @ self.w1.data
        dx2 += dpool_tv[:, :, None, None] / (t * v)

        x1, mt = self._x1, self._mt
        dx1 = dx2 * (1.0 + mt[:, :, :, None])
        dmt = (dx2 * x1).sum(axis=(1, 3))[:, None, :]  # (N,1,T)
        dz = dmt * mt * (1.0 - mt)
        dpool_v, dwt, dwt_b = ops.conv1d_backward(self._pool_v, self.wt.data, dz)
        self.wt.grad += dwt
        self.wt_b.grad += dwt_b
        dx1 += dpool_v[:, :, :, None] / v

        x0, ms = self._x0, self._ms
        dx = dx1 * (1.0 + ms[:, :, None, :])
        dms = (dx1 * x0).sum(axis=(1, 2))[:, None, :]  # (N,1,V)
        dz = dms * ms * (1.0 - ms)
        dpool_t, dws, dws_b = ops.conv1d_backward(self._pool_t, self.ws.data, dz)
        self.ws.grad += dws
        self.ws_b.grad += dws_b
        dx += dpool_t[:, :, None, :] / t
        return dx


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.w = self.add_param("w", fan_in_uniform(rng, (fout, fin), fin, dtype))
        self.b = self.add_param("b", fan_in_uniform(rng, (fout,), fin, dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w.data.T + self.b.data

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.w.grad += dy.T @ self._x
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.data
