"""Classical kinematic movement indexes and the linear regression baseline.

Ten indexes per limb pair (hands = wrists, feet = ankles): canonical
correlation of positions (Fisher-Z) and the angle between the first
canonical vectors, Pearson correlation of tangential speeds (Fisher-Z),
distance and lift percentiles with close/lift probabilities, and the three
Hjorth parameters of limb position dynamics. Indexes are computed on
neck-centered, unrotated coordinates in meters; heights are read from the
z channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .dataset import SkeletonSequence, SubjectRecord
from .errors import KineticAgeError, SingularityError
from .joints import L_ANKLE, L_WRIST, R_ANKLE, R_WRIST
from .preprocess import center_on_neck

CLOSE_DISTANCE_M = 0.25
LIFT_HEIGHT_M = 0.1
CORR_CLAMP = 1.0 - 1e-12
CCA_RIDGE = 1e-10

FEATURE_FIELDS = (
    "position_cca_z",
    "cca_angle_deg",
    "velocity_corr_z",
    "dist_p5",
    "lift_p95",
    "close_limb_prob",
    "lift_limb_prob",
    "hjorth_activity",
    "hjorth_mobility",
    "hjorth_complexity",
)

FEATURE_NAMES = tuple(f"hands_{f}" for f in FEATURE_FIELDS) + tuple(
    f"feet_{f}" for f in FEATURE_FIELDS
)


@dataclass
class LimbPairFeatures:
    position_cca_z: float
    cca_angle_deg: float
    velocity_corr_z: float
    dist_p5: float
    lift_p95: float
    close_limb_prob: float
    lift_limb_prob: float
    hjorth_activity: float
    hjorth_mobility: float
    hjorth_complexity: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass
class FeatureVector:
    hands: LimbPairFeatures
    feet: LimbPairFeatures

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.hands.as_array(), self.feet.as_array()])


def fisher_z(r: float) -> float:
    r = min(max(r, -CORR_CLAMP), CORR_CLAMP)
    return math.atanh(r)


def _inv_sqrt_psd(c: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(c)
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T


def position_cca(left: np.ndarray, right: np.ndarray) -> tuple[float, float]:
    """First canonical correlation (Fisher-Z) and the angle in degrees
    between the first canonical weight vectors of the two position series."""
    left = np.asarray(left, float)
    right = np.asarray(right, float)
    t = left.shape[0]
    if t < 4 or right.shape[0] != t:
        raise ValueError("position_cca requires two equal-length series with T >= 4")
    xc = left - left.mean(axis=0)
    yc = right - right.mean(axis=0)
    cxx = xc.T @ xc / (t - 1)
    cyy = yc.T @ yc / (t - 1)
    cxy = xc.T @ yc / (t - 1)
    for name, c in (("left", cxx), ("right", cyy)):
        vals = np.linalg.eigvalsh(c)
        if vals[0] < 1e-12 * max(vals[-1], 1e-30):
            raise SingularityError(f"rank-deficient covariance of the {name} series")
    wx = _inv_sqrt_psd(cxx + CCA_RIDGE * np.eye(cxx.shape[0]))
    wy = _inv_sqrt_psd(cyy + CCA_RIDGE * np.eye(cyy.shape[0]))
    u, s, vt = np.linalg.svd(wx @ cxy @ wy)
    r1 = float(s[0])
    a = wx @ u[:, 0]
    b = wy @ vt[0]
    cosang = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    angle = math.degrees(math.acos(min(max(cosang, -1.0), 1.0)))
    return fisher_z(r1), angle


def tangential_speed(pos: np.ndarray, frame_rate: float) -> np.ndarray:
    vel = np.diff(pos, axis=0) * frame_rate
    return np.linalg.norm(vel, axis=1)


def velocity_correlation(left: np.ndarray, right: np.ndarray, frame_rate: float) -> float:
    """Fisher-Z of the Pearson correlation between tangential speeds."""
    left = np.asarray(left, float)
    right = np.asarray(right, float)
    if left.shape[0] < 3 or right.shape[0] != left.shape[0]:
        raise ValueError("velocity_correlation requires equal-length series with T >= 3")
    sl = tangential_speed(left, frame_rate)
    sr = tangential_speed(right, frame_rate)
    if sl.std() == 0 or sr.std() == 0:
        raise SingularityError("zero-variance tangential speed")
    r = float(np.corrcoef(sl, sr)[0, 1])
    return fisher_z(r)


def distance_indexes(left: np.ndarray, right: np.ndarray) -> tuple[float, float, float, float]:
    """(dist_p5, lift_p95, close_prob, lift_prob); lift fields are NaN for 2D."""
    left = np.asarray(left, float)
    right = np.asarray(right, float)
    d = np.linalg.norm(left - right, axis=1)
    dist_p5 = float(np.percentile(d, 5))
    close_prob = float(np.mean(d < CLOSE_DISTANCE_M))
    if left.shape[1] == 3:
        zl, zr = left[:, 2], right[:, 2]
        lift_p95 = float(0.5 * (np.percentile(zl, 95) + np.percentile(zr, 95)))
        lift_prob = float(0.5 * (np.mean(zl > LIFT_HEIGHT_M) + np.mean(zr > LIFT_HEIGHT_M)))
    else:
        lift_p95 = float("nan")
        lift_prob = float("nan")
    return dist_p5, lift_p95, close_prob, lift_prob


def hjorth_indexes(pos: np.ndarray, frame_rate: float) -> tuple[float, float, float]:
    """Hjorth activity / mobility / complexity of one limb's position series.

    Velocity, acceleration, and jerk come from successive forward
    differences scaled by the frame rate; statistics are taken in 1 s
    windows with 50% overlap, the first and last windows are discarded, and
    the per-window parameters are averaged across windows and spatial
    components.
    """
    pos = np.asarray(pos, float)
    vel = np.diff(pos, axis=0) * frame_rate
    acc = np.diff(vel, axis=0) * frame_rate
    jerk = np.diff(acc, axis=0) * frame_rate
    usable = jerk.shape[0]
    win = int(round(frame_rate))
    hop = max(win // 2, 1)
    if usable < win:
        raise SingularityError("series shorter than one analysis window")
    starts = list(range(0, usable - win + 1, hop))
    if len(starts) < 3:
        raise SingularityError("fewer than 3 analysis windows after trimming")
    acts, mobs, comps = [], [], []
    for s in starts[1:-1]:
        sl = slice(s, s + win)
        sd_v = vel[sl].std(axis=0)
        sd_a = acc[sl].std(axis=0)
        sd_j = jerk[sl].std(axis=0)
        if np.any(sd_v == 0) or np.any(sd_a == 0):
            raise SingularityError("zero-variance derivative within a window")
        acts.append(vel[sl].var(axis=0))
        mob = sd_a / sd_v
        mobs.append(mob)
        comps.append((sd_j / sd_a) / mob)
    return (
        float(np.mean(acts)),
        float(np.mean(mobs)),
        float(np.mean(comps)),
    )


def _limb_pair_features(seq: SkeletonSequence, left_joint: int, right_joint: int) -> LimbPairFeatures:
    coords = seq.coords  # (C, T, V)
    left = coords[:, :, left_joint].T  # (T, C)
    right = coords[:, :, right_joint].T
    cca_z, cca_angle = position_cca(left, right)
    vel_z = velocity_correlation(left, right, seq.frame_rate)
    dist_p5, lift_p95, close_prob, lift_prob = distance_indexes(left, right)
    act_l, mob_l, comp_l = hjorth_indexes(left, seq.frame_rate)
    act_r, mob_r, comp_r = hjorth_indexes(right, seq.frame_rate)
    return LimbPairFeatures(
        position_cca_z=cca_z,
        cca_angle_deg=cca_angle,
        velocity_corr_z=vel_z,
        dist_p5=dist_p5,
        lift_p95=lift_p95,
        close_limb_prob=close_prob,
        lift_limb_prob=lift_prob,
        hjorth_activity=0.5 * (act_l + act_r),
        hjorth_mobility=0.5 * (mob_l + mob_r),
        hjorth_complexity=0.5 * (comp_l + comp_r),
    )


def segment_features(seq: SkeletonSequence) -> FeatureVector:
    """Features of one segment, computed on neck-centered coordinates."""
    centered = center_on_neck(seq)
    return FeatureVector(
        hands=_limb_pair_features(centered, L_WRIST, R_WRIST),
        feet=_limb_pair_features(centered, L_ANKLE, R_ANKLE),
    )


def subject_features(record: SubjectRecord) -> FeatureVector:
    """Length-weighted average of per-segment features.

    Segments too short or too degenerate for an index are skipped with the
    remaining weights renormalized; a subject with no usable segment is an
    error.
    """
    per_segment: list[tuple[float, np.ndarray]] = []
    for seg in record.segments:
        try:
            per_segment.append((float(seg.T), segment_features(seg).as_array()))
        except KineticAgeError:
            continue
    if not per_segment:
        raise SingularityError(f"subject {record.subject_id!r}: no valid segments for features")
    total = sum(w for w, _ in per_segment)
    stacked = sum(w * arr for w, arr in per_segment) / total
    n = len(FEATURE_FIELDS)
    return FeatureVector(
        hands=LimbPairFeatures(*stacked[:n]),
        feet=LimbPairFeatures(*stacked[n:]),
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    sorted_x = x[order]
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of average-ranked values; ties get mean ranks."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("spearman requires two equal-length vectors of length >= 3")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise SingularityError("spearman undefined for a constant vector")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])


@dataclass
class LinearAgeModel:
    intercept: float
    coef: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, float) @ self.coef + self.intercept


def linear_regression_fit(features: np.ndarray, ages: np.ndarray) -> LinearAgeModel:
    """Ordinary least squares with intercept via QR decomposition."""
    x = np.asarray(features, float)
    y = np.asarray(ages, float)
    n, p = x.shape
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} samples to fit {p} features")
    design = np.concatenate([np.ones((n, 1)), x], axis=1)
    if np.linalg.matrix_rank(design) < p + 1:
        raise SingularityError("rank-deficient design matrix")
    q, r = np.linalg.qr(design)
    beta = np.linalg.solve(r, q.T @ y)
    return LinearAgeModel(intercept=float(beta[0]), coef=beta[1:])


def spearman_table(features: np.ndarray, ages: np.ndarray) -> list[tuple[str, float, float]]:
    """Per-index Spearman correlation with age, for hands and feet columns."""
    n = len(FEATURE_FIELDS)
    rows = []
    for i, name in enumerate(FEATURE_FIELDS):
        def _rho(col):
            vals = features[:, col]
            mask = np.isfinite(vals)
            if mask.sum() < 3:
                return float("nan")
            try:
                return spearman(vals[mask], ages[mask])
            except SingularityError:
                return float("nan")
        rows.append((name, _rho(i), _rho(n + i)))
    return rows
