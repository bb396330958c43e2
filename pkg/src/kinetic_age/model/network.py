"""Full sequence-to-age network: variants, forward/backward, checkpoints.

Architecture: input batch-norm over (channel, joint) slots, three
spatio-temporal blocks at a shared latent width, global average pooling over
time and joints, optional concatenation of precomputed global features, and
a three-layer regression head producing age in days.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import ConfigMismatchError
from ..graph import AdjacencySet, GraphInit, build_adjacency_set
from .layers import (
    AdaptiveGraphConv,
    BatchNorm,
    Conv1x1,
    DataBatchNorm,
    Dropout,
    GraphConv,
    Linear,
    Module,
    ReLU,
    STCAttention,
    TemporalConv,
)

CHECKPOINT_VERSION = 1


class Variant(str, Enum):
    STGCN = "stgcn"
    AGCN = "agcn"
    AAGCN = "aagcn"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    variant: Variant = Variant.AAGCN
    num_blocks: int = 3
    latent_dim: int = 256
    kernel_t: int = 13
    k_v: int = 3
    dropout: float = 0.5
    attention_reduction: int = 2
    attention_spatial_kernel: int = 9
    attention_temporal_kernel: int = 9
    head_dims: tuple[int, int] = (64, 32)
    global_feature_dim: int = 0
    num_joints: int = 18
    graph_init: GraphInit = GraphInit.COORDINATION
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "graph_init", GraphInit(self.graph_init))
        object.__setattr__(self, "head_dims", tuple(self.head_dims))
        if self.kernel_t % 2 != 1 or self.kernel_t < 1:
            raise ValueError("kernel_t must be a positive odd integer")
        if self.k_v != 3:
            raise ValueError("k_v is fixed to 3 by the partitioning strategy")
        for name in ("in_channels", "num_blocks", "latent_dim", "num_joints"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.global_feature_dim < 0:
            raise ValueError("global_feature_dim must be >= 0")

    @property
    def embed_dim(self) -> int:
        return max(self.latent_dim // 4, 1)

    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["graph_init"] = self.graph_init.value
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "head_dims": tuple(d.get("head_dims", (64, 32)))})


@dataclass
class ForwardTrace:
    """Exportable per-sample internals from one forward pass."""

    attention_masks: list[dict[str, np.ndarray]] = field(default_factory=list)
    sample_graphs: list[np.ndarray] = field(default_factory=list)  # per block (N, K, V, V)


class STBlock(Module):
    """One spatio-temporal block.

    Spatial graph convolution (with STC attention for the attentive
    variant), batch-norm, ReLU, dropout, temporal convolution, batch-norm,
    residual addition (1x1-projected when the width changes), final ReLU.
    """

    def __init__(self, cfg: ModelConfig, cin: int, cout: int, adjacency: np.ndarray,
                 rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype()
        if cfg.variant is Variant.STGCN:
            self.gcn = self.add_child("gcn", GraphConv(cin, cout, adjacency, rng, dtype))
        else:
            self.gcn = self.add_child(
                "gcn", AdaptiveGraphConv(cin, cout, adjacency, cfg.embed_dim, rng, dtype))
        self.attn = None
        if cfg.variant is Variant.AAGCN:
            self.attn = self.add_child(
                "attn",
                STCAttention(cout, cfg.attention_reduction, cfg.attention_spatial_kernel,
                             cfg.attention_temporal_kernel, rng, dtype))
        self.bn1 = self.add_child("bn1", BatchNorm(cout, dtype))
        self.relu1 = ReLU()
        self.drop = Dropout(cfg.dropout)
        self.tcn = self.add_child("tcn", TemporalConv(cout, cout, cfg.kernel_t, rng, dtype))
        self.bn2 = self.add_child("bn2", BatchNorm(cout, dtype))
        self.res_conv = None
        if cin != cout:
            self.res_conv = self.add_child("res_conv", Conv1x1(cin, cout, rng, dtype))
            self.res_bn = self.add_child("res_bn", BatchNorm(cout, dtype))
        self.relu2 = ReLU()

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator,
                trace: ForwardTrace | None = None) -> np.ndarray:
        if self.res_conv is not None:
            res = self.res_bn.forward(self.res_conv.forward(x), training)
        else:
            res = x
        h = self.gcn.forward(x)
        if self.attn is not None:
            h = self.attn.forward(h)
        h = self.bn1.forward(h, training)
        h = self.relu1.forward(h)
        h = self.drop.forward(h, training, rng)
        h = self.tcn.forward(h)
        h = self.bn2.forward(h, training)
        if trace is not None:
            if self.attn is not None:
                trace.attention_masks.append(self.attn.masks())
            if isinstance(self.gcn, AdaptiveGraphConv):
                trace.sample_graphs.append(np.stack(self.gcn._c, axis=1))
        return self.relu2.forward(h + res)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        ds = self.relu2.backward(dy)
        dh = self.bn2.backward(ds)
        dh = self.tcn.backward(dh)
        dh = self.drop.backward(dh)
        dh = self.relu1.backward(dh)
        dh = self.bn1.backward(dh)
        if self.attn is not None:
            dh = self.attn.backward(dh)
        dx = self.gcn.backward(dh)
        if self.res_conv is not None:
            dx += self.res_conv.backward(self.res_bn.backward(ds))
        else:
            dx += ds
        return dx


class AgeNetwork(Module):
    """Sequence-to-scalar age regressor over (N, C_in, T, V) inputs."""

    def __init__(self, config: ModelConfig, adjacency: AdjacencySet | np.ndarray | None = None,
                 seed: int = 0):
        super().__init__()
        self.config = config
        if adjacency is None:
            adjacency = build_adjacency_set(config.graph_init)
        a = adjacency.matrices if isinstance(adjacency, AdjacencySet) else np.asarray(adjacency)
        if a.shape != (config.k_v, config.num_joints, config.num_joints):
            raise ConfigMismatchError(
                f"adjacency shape {a.shape} does not match config "
                f"({config.k_v}, {config.num_joints}, {config.num_joints})")
        dtype = config.np_dtype()
        rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng(seed + 1)

        self.data_bn = self.add_child(
            "data_bn", DataBatchNorm(config.in_channels, config.num_joints, dtype))
        self.blocks = []
        cin = config.in_channels
        for i in range(config.num_blocks):
            block = STBlock(config, cin, config.latent_dim, a, rng)
            self.blocks.append(self.add_child(f"block{i}", block))
            cin = config.latent_dim
        h1, h2 = config.head_dims
        head_in = config.latent_dim + config.global_feature_dim
        self.fc1 = self.add_child("fc1", Linear(head_in, h1, rng, dtype))
        self.head_relu1 = ReLU()
        self.fc2 = self.add_child("fc2", Linear(h1, h2, rng, dtype))
        self.head_relu2 = ReLU()
        self.fc3 = self.add_child("fc3", Linear(h2, 1, rng, dtype))

    def forward(self, x: np.ndarray, global_features: np.ndarray | None = None,
                training: bool = False, trace: ForwardTrace | None = None) -> np.ndarray:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[3] != cfg.num_joints:
            raise ConfigMismatchError(
                f"input shape {x.shape} does not match (N, {cfg.in_channels}, T, {cfg.num_joints})")
        if cfg.global_feature_dim:
            if global_features is None or global_features.shape != (x.shape[0], cfg.global_feature_dim):
                raise ConfigMismatchError(
                    f"expected global features of shape ({x.shape[0]}, {cfg.global_feature_dim})")
        elif global_features is not None:
            raise ConfigMismatchError("model was configured without global features")

        h = self.data_bn.forward(x, training)
        for block in self.blocks:
            h = block.forward(h, training, self.dropout_rng, trace)
        self._pool_shape = h.shape
        pooled = h.mean(axis=(2, 3))
        if cfg.global_feature_dim:
            pooled = np.concatenate([pooled, global_features.astype(pooled.dtype)], axis=1)
        z = self.fc1.forward(pooled)
        z = self.head_relu1.forward(z)
        z = self.fc2.forward(z)
        z = self.head_relu2.forward(z)
        z = self.fc3.forward(z)
        return z[:, 0]

    def backward(self, dpred: np.ndarray) -> None:
        dpred = np.asarray(dpred, dtype=self.config.np_dtype())
        dz = self.fc3.backward(dpred[:, None])
        dz = self.head_relu2.backward(dz)
        dz = self.fc2.backward(dz)
        dz = self.head_relu1.backward(dz)
        dpooled = self.fc1.backward(dz)
        dpooled = dpooled[:, : self.config.latent_dim]
        n, c, t, v = self._pool_shape
        dh = np.broadcast_to(dpooled[:, :, None, None], (n, c, t, v)) / (t * v)
        dh = np.ascontiguousarray(dh)
        for block in reversed(self.blocks):
            dh = block.backward(dh)
        self.data_bn.backward(dh)


def count_parameters(config: ModelConfig) -> int:
    """Exact learnable-scalar count for a configuration.

    Mirrors the constructed network layer by layer; the temporal convolution
    contributes (C_in * K_t + 1) * C_out per block, so the total is affine
    in the temporal kernel size.
    """
    v = config.num_joints
    kv = config.k_v
    latent = config.latent_dim
    total = 2 * config.in_channels * v  # data batch-norm scale + shift

    cin = config.in_channels
    for _ in range(config.num_blocks):
        cout = latent
        total += kv * (cout * cin + cout)  # graph-conv 1x1 maps
        if config.variant is not Variant.STGCN:
            total += kv * v * v  # learnable global graphs
            total += 2 * kv * (config.embed_dim * cin + config.embed_dim)  # theta, phi
            total += 1  # alpha
        if config.variant is Variant.AAGCN:
            total += cout * config.attention_spatial_kernel + 1
            total += cout * config.attention_temporal_kernel + 1
            hidden = max(cout // config.attention_reduction, 1)
            total += hidden * cout + hidden
            total += cout * hidden + cout
        total += 2 * cout  # bn1
        total += (cout * config.kernel_t + 1) * cout  # temporal conv
        total += 2 * cout  # bn2
        if cin != cout:
            total += cout * cin + cout + 2 * cout  # residual projection + bn
        cin = cout

    h1, h2 = config.head_dims
    head_in = latent + config.global_feature_dim
    total += head_in * h1 + h1
    total += h1 * h2 + h2
    total += h2 * 1 + 1
    return total


def save_checkpoint(net: AgeNetwork, path: str | Path) -> None:
    """Write config, parameters, and batch-norm running stats to one npz file."""
    arrays = {"p:" + k: p.data for k, p in net.params().items()}
    arrays.update({"b:" + k: b for k, b in net.buffers().items()})
    meta = {"checkpoint_version": CHECKPOINT_VERSION, "config": net.config.to_dict()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path, expect_config: ModelConfig | None = None,
                    adjacency: AdjacencySet | np.ndarray | None = None) -> AgeNetwork:
    """Rebuild a network from a checkpoint; config mismatches are errors."""
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"]).decode())
        if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise ConfigMismatchError(
                f"unsupported checkpoint version {meta.get('checkpoint_version')!r}")
        config = ModelConfig.from_dict(meta["config"])
        if expect_config is not None and config != expect_config:
            raise ConfigMismatchError("checkpoint config does not match the expected config")
        net = AgeNetwork(config, adjacency=adjacency, seed=0)
        params = net.params()
        buffers = net.buffers()
        for key in archive.files:
            if key == "__meta__":
                continue
            kind, name = key.split(":", 1)
            if kind == "p":
                if name not in params:
                    raise ConfigMismatchError(f"unexpected parameter {name!r} in checkpoint")
                if params[name].data.shape != archive[key].shape:
                    raise ConfigMismatchError(f"parameter {name!r} has mismatched shape")
                params[name].data[...] = archive[key]
            else:
                if name not in buffers:
                    raise ConfigMismatchError(f"unexpected buffer {name!r} in checkpoint")
                net.set_buffer(name, archive[key])
        missing = set(params) - {k.split(":", 1)[1] for k in archive.files if k.startswith("p:")}
        if missing:
            raise ConfigMismatchError(f"checkpoint is missing parameters: {sorted(missing)}")
    return net
