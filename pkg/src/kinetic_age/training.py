"""Subject-wise cross-validation: fold planning, training, metrics, ablation.

Batches are assembled at window granularity; subject-level predictions are
formed at evaluation time by averaging a subject's window outputs (and, for
bagged inference, across fold models). All randomness flows from explicit
seeds, so identical configurations reproduce identical checkpoints.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DatasetManifest, split_into_windows
from .errors import ConfigMismatchError, TrainingDivergedError
from .graph import build_adjacency_set
from .model.layers import Param
from .model.network import AgeNetwork, ModelConfig, count_parameters
from .preprocess import StreamConfig, assemble_streams, preprocess_sequence


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def fold_subjects(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.assignment.items() if f == fold)


def make_folds_from_ids(ids: list[str], k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle subject ids deterministically and split into k near-equal folds."""
    ids = sorted(ids)
    if len(ids) < k:
        raise ValueError(f"need at least {k} subjects for {k} folds, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignment = {}
    for pos, idx in enumerate(order):
        assignment[ids[idx]] = pos % k
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def make_folds(manifest: DatasetManifest, k: int = 10, seed: int = 0,
               group: str | None = "Typical") -> FoldPlan:
    """Fold plan over a dataset's subjects; a subject's windows never straddle
    folds because assignment is by subject id.

    When ``group`` is given, only subjects of that cohort are assigned (the
    rest are reserved for bagged inference).
    """
    ids = [s.subject_id for s in manifest.subjects
           if group is None or s.group == group]
    return make_folds_from_ids(ids, k=k, seed=seed)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "momentum_sgd"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")


class MomentumSGD:
    """Classic momentum: v <- m v + g; p <- p - lr v."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._vel: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Param]) -> None:
        for name, p in params.items():
            vel = self._vel.get(name)
            if vel is None:
                vel = np.zeros_like(p.data)
                self._vel[name] = vel
            vel *= self.momentum
            vel += p.grad
            p.data -= self.lr * vel


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, Param]) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            mhat = m / (1 - b1 ** self._t)
            vhat = v / (1 - b2 ** self._t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


OPTIMIZERS = {"momentum_sgd": lambda cfg: MomentumSGD(cfg.learning_rate, cfg.momentum),
              "adam": lambda cfg: Adam(cfg.learning_rate)}


def make_optimizer(cfg: TrainConfig):
    try:
        return OPTIMIZERS[cfg.optimizer](cfg)
    except KeyError:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}; "
                         f"available: {sorted(OPTIMIZERS)}") from None


@dataclass
class WindowBundle:
    """Model-ready windows plus the subject bookkeeping for CV."""

    x: np.ndarray                 # (num_windows, C_in, T, V)
    window_subject: np.ndarray    # (num_windows,) index into subject_ids
    subject_ids: list[str]
    ages: np.ndarray              # (num_subjects,)
    groups: list[str]
    streams: str
    dims: str
    rotate: bool
    target_len: int
    frame_rate: float

    def subject_windows(self, subject_id: str) -> np.ndarray:
        idx = self.subject_ids.index(subject_id)
        return np.nonzero(self.window_subject == idx)[0]

    def save(self, path) -> None:
        np.savez_compressed(
            path, x=self.x, window_subject=self.window_subject,
            subject_ids=np.array(self.subject_ids), ages=self.ages,
            groups=np.array(self.groups),
            meta=np.array([self.streams, self.dims, str(int(self.rotate)),
                           str(self.target_len), repr(self.frame_rate)]))

    @classmethod
    def load(cls, path) -> "WindowBundle":
        with np.load(path, allow_pickle=False) as z:
            meta = [str(m) for m in z["meta"]]
            return cls(
                x=z["x"], window_subject=z["window_subject"],
                subject_ids=[str(s) for s in z["subject_ids"]],
                ages=z["ages"], groups=[str(g) for g in z["groups"]],
                streams=meta[0], dims=meta[1], rotate=bool(int(meta[2])),
                target_len=int(meta[3]), frame_rate=float(meta[4]))


def build_windows(manifest: DatasetManifest, streams: str = "J", dims: str = "3d",
                  rotate: bool = True, target_len: int = 600,
                  dtype: str = "float32") -> WindowBundle:
    """Preprocess every segment and assemble fixed-length stream windows."""
    cfg = StreamConfig(streams.upper())
    xs, owners = [], []
    subject_ids, ages, groups = [], [], []
    frame_rate = 30.0
    for si, subject in enumerate(manifest.subjects):
        subject_ids.append(subject.subject_id)
        ages.append(subject.corrected_age_days)
        groups.append(subject.group)
        for seg in subject.segments:
            pre = preprocess_sequence(seg, dims=dims, rotate=rotate)
            frame_rate = seg.frame_rate
            for window in split_into_windows(pre, target_len):
                xs.append(assemble_streams(window, cfg).astype(dtype))
                owners.append(si)
    return WindowBundle(
        x=np.stack(xs), window_subject=np.array(owners), subject_ids=subject_ids,
        ages=np.array(ages, float), groups=groups, streams=cfg.streams, dims=dims,
        rotate=rotate, target_len=target_len, frame_rate=frame_rate)


def predict_windows(net: AgeNetwork, x: np.ndarray, gfeat: np.ndarray | None = None,
                    batch_size: int = 64) -> np.ndarray:
    out = []
    for i in range(0, len(x), batch_size):
        xb = x[i : i + batch_size].astype(net.config.np_dtype())
        gb = None if gfeat is None else gfeat[i : i + batch_size]
        out.append(net.forward(xb, gb, training=False))
    return np.concatenate(out)


def predict_subject_ages(net: AgeNetwork, bundle: WindowBundle,
                         subject_ids: list[str],
                         gfeatures: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Window-averaged prediction per subject under a single model."""
    preds = np.empty(len(subject_ids))
    for i, sid in enumerate(subject_ids):
        widx = bundle.subject_windows(sid)
        gf = None
        if gfeatures is not None:
            gf = np.repeat(gfeatures[sid][None], len(widx), axis=0)
        preds[i] = predict_windows(net, bundle.x[widx], gf).mean()
    return preds


@dataclass
class FoldHistory:
    val_rmse: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = math.inf


def _snapshot(net: AgeNetwork) -> dict[str, np.ndarray]:
    state = {"p:" + k: p.data.copy() for k, p in net.params().items()}
    state.update({"b:" + k: b.copy() for k, b in net.buffers().items()})
    return state


def _restore(net: AgeNetwork, state: dict[str, np.ndarray]) -> None:
    for k, p in net.params().items():
        p.data[...] = state["p:" + k]
    for k in net.buffers():
        net.set_buffer(k, state["b:" + k])


def train_fold(bundle: WindowBundle, train_subjects: list[str], val_subjects: list[str],
               model_cfg: ModelConfig, train_cfg: TrainConfig,
               gfeatures: dict[str, np.ndarray] | None = None,
               adjacency=None) -> tuple[AgeNetwork, FoldHistory]:
    """Minimize MSE over the training windows; keep the best-validation state.

    Deterministic given the seeds: parameter init, batch shuffling, and
    dropout all use generators derived from ``train_cfg.seed``.
    """
    if not train_subjects or not val_subjects:
        raise ValueError("train and validation subject sets must be nonempty")
    if adjacency is None:
        adjacency = build_adjacency_set(model_cfg.graph_init)
    seeds = np.random.SeedSequence(train_cfg.seed).spawn(3)
    net = AgeNetwork(model_cfg, adjacency=adjacency,
                     seed=int(seeds[0].generate_state(1)[0]))
    net.dropout_rng = np.random.default_rng(seeds[1])
    shuffle_rng = np.random.default_rng(seeds[2])
    optimizer = make_optimizer(train_cfg)
    dtype = model_cfg.np_dtype()

    sub_index = {sid: i for i, sid in enumerate(bundle.subject_ids)}
    train_widx = np.concatenate([bundle.subject_windows(s) for s in train_subjects])
    targets = bundle.ages[bundle.window_subject[train_widx]]
    gmat = None
    if gfeatures is not None:
        gmat = np.stack([gfeatures[bundle.subject_ids[si]]
                         for si in bundle.window_subject[train_widx]]).astype(dtype)
    val_ages = np.array([bundle.ages[sub_index[s]] for s in val_subjects])

    history = FoldHistory()
    best_state = _snapshot(net)
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(len(train_widx))
        epoch_loss = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            xb = bundle.x[train_widx[batch]].astype(dtype)
            yb = targets[batch]
            gb = None if gmat is None else gmat[batch]
            net.zero_grads()
            pred = net.forward(xb, gb, training=True)
            err = pred - yb
            loss = float(np.mean(err * err))
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            net.backward(2.0 * err / len(err))
            optimizer.step(net.params())
            epoch_loss += loss * len(batch)
        history.train_loss.append(epoch_loss / len(train_widx))

        val_pred = predict_subject_ages(net, bundle, val_subjects, gfeatures)
        val_rmse = float(np.sqrt(np.mean((val_pred - val_ages) ** 2)))
        history.val_rmse.append(val_rmse)
        if val_rmse < history.best_val_rmse:
            history.best_val_rmse = val_rmse
            history.best_epoch = epoch
            best_state = _snapshot(net)

    _restore(net, best_state)
    return net, history


def bagged_predict(nets: list[AgeNetwork], windows: np.ndarray,
                   gfeat: np.ndarray | None = None) -> float:
    """Mean prediction over models and over a subject's windows."""
    if not nets:
        raise ValueError("bagged_predict needs at least one model")
    first = nets[0].config
    for net in nets[1:]:
        if net.config != first:
            raise ConfigMismatchError("bagged models have mismatched configurations")
    per_model = [predict_windows(net, windows, gfeat).mean() for net in nets]
    return float(np.mean(per_model))


@dataclass
class Metrics:
    me: float
    rmse: float
    mae: float
    r2: float
    pearson: float
    bias: float
    loa_low: float
    loa_high: float
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "me": self.me, "rmse": self.rmse, "mae": self.mae, "r2": self.r2,
            "pearson": self.pearson, "bias": self.bias,
            "loa_low": self.loa_low, "loa_high": self.loa_high,
        }


METRIC_KEYS = ("me", "rmse", "mae", "r2", "pearson", "bias", "loa_low", "loa_high")


def compute_metrics(pred: np.ndarray, actual: np.ndarray) -> Metrics:
    """Signed mean error uses the predicted-minus-actual convention, matching
    the Bland-Altman bias; limits of agreement are bias +/- 1.96 sd."""
    pred = np.asarray(pred, float)
    actual = np.asarray(actual, float)
    if pred.shape != actual.shape or pred.ndim != 1 or len(pred) < 2:
        raise ValueError("pred and actual must be equal-length vectors of length >= 2")
    diffs = pred - actual
    me = float(diffs.mean())
    rmse = float(np.sqrt(np.mean(diffs**2)))
    mae = float(np.mean(np.abs(diffs)))
    flags = []
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0:
        r2 = float("nan")
        flags.append("r2_undefined_zero_variance")
    else:
        r2 = 1.0 - float(np.sum(diffs**2)) / ss_tot
    if pred.std() == 0 or actual.std() == 0:
        pearson = float("nan")
        flags.append("pearson_undefined_constant")
    else:
        pearson = float(np.corrcoef(pred, actual)[0, 1])
    sd = float(diffs.std(ddof=1))
    return Metrics(me=me, rmse=rmse, mae=mae, r2=r2, pearson=pearson, bias=me,
                   loa_low=me - 1.96 * sd, loa_high=me + 1.96 * sd, flags=tuple(flags))


@dataclass
class EvalReport:
    per_fold: list[Metrics]
    aggregate_mean: dict[str, float]
    aggregate_sd: dict[str, float]
    predictions: list[tuple[str, int, float, float]]  # subject, fold, actual, predicted

    @classmethod
    def from_folds(cls, per_fold: list[Metrics],
                   predictions: list[tuple[str, int, float, float]]) -> "EvalReport":
        mean, sd = {}, {}
        for key in METRIC_KEYS:
            vals = np.array([getattr(m, key) for m in per_fold])
            mean[key] = float(np.nanmean(vals))
            sd[key] = float(np.nanstd(vals, ddof=1)) if len(vals) > 1 else 0.0
        return cls(per_fold=per_fold, aggregate_mean=mean, aggregate_sd=sd,
                   predictions=predictions)


def cross_validate(bundle: WindowBundle, plan: FoldPlan, model_cfg: ModelConfig,
                   train_cfg: TrainConfig,
                   gfeatures: dict[str, np.ndarray] | None = None,
                   adjacency=None) -> tuple[EvalReport, list[AgeNetwork]]:
    """Train one model per fold; each held-out fold doubles as validation."""
    if adjacency is None:
        adjacency = build_adjacency_set(model_cfg.graph_init)
    sub_index = {sid: i for i, sid in enumerate(bundle.subject_ids)}
    nets, per_fold, predictions = [], [], []
    for fold in range(plan.k):
        val_subjects = plan.fold_subjects(fold)
        train_subjects = sorted(set(plan.assignment) - set(val_subjects))
        fold_cfg = replace(train_cfg, seed=train_cfg.seed + fold)
        net, _ = train_fold(bundle, train_subjects, val_subjects, model_cfg, fold_cfg,
                            gfeatures, adjacency)
        nets.append(net)
        val_pred = predict_subject_ages(net, bundle, val_subjects, gfeatures)
        val_ages = np.array([bundle.ages[sub_index[s]] for s in val_subjects])
        per_fold.append(compute_metrics(val_pred, val_ages))
        predictions.extend(
            (s, fold, float(a), float(p))
            for s, a, p in zip(val_subjects, val_ages, val_pred))
    return EvalReport.from_folds(per_fold, predictions), nets


ABLATION_AXES = ("kt", "variant", "init", "streams", "dims", "rotate")


def run_ablation(manifest: DatasetManifest, grid: dict[str, list], k: int,
                 model_cfg: ModelConfig, train_cfg: TrainConfig,
                 seed: int = 0) -> list[dict]:
    """Cross-validate every grid cell; returns one result row per cell.

    Axes: kt, variant, init (graph initialization), streams, dims, rotate.
    Preprocessed bundles are cached per (streams, dims, rotate) combination.
    """
    unknown = set(grid) - set(ABLATION_AXES)
    if unknown:
        raise ValueError(f"unknown ablation axes: {sorted(unknown)}")
    axes = {name: grid.get(name, [None]) for name in ABLATION_AXES}
    bundles: dict[tuple, WindowBundle] = {}
    rows = []
    for kt, variant, init, streams, dims, rotate in itertools.product(
            *(axes[n] for n in ABLATION_AXES)):
        cfg = model_cfg
        if kt is not None:
            cfg = replace(cfg, kernel_t=int(kt))
        if variant is not None:
            cfg = replace(cfg, variant=variant)
        if init is not None:
            cfg = replace(cfg, graph_init=init)
        streams_v = streams if streams is not None else "J"
        dims_v = dims if dims is not None else "3d"
        rotate_v = rotate if rotate is not None else True
        key = (streams_v.upper(), dims_v, bool(rotate_v))
        if key not in bundles:
            bundles[key] = build_windows(manifest, streams=key[0], dims=key[1],
                                         rotate=key[2])
        bundle = bundles[key]
        coord_dims = 2 if dims_v == "2d" else 3
        cfg = replace(cfg, in_channels=StreamConfig(key[0]).input_channels(coord_dims))
        plan = make_folds(manifest, k=k, seed=seed)
        report, _ = cross_validate(bundle, plan, cfg, train_cfg)
        row = {
            "kt": cfg.kernel_t, "variant": cfg.variant.value,
            "init": cfg.graph_init.value, "streams": key[0], "dims": dims_v,
            "rotate": bool(rotate_v), "num_params": count_parameters(cfg),
        }
        for metric in METRIC_KEYS:
            row[f"{metric}_mean"] = report.aggregate_mean[metric]
            row[f"{metric}_sd"] = report.aggregate_sd[metric]
        rows.append(row)
    return rows
