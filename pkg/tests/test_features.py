import math

import numpy as np
import pytest

from kinetic_age.dataset import SkeletonSequence, SubjectRecord
from kinetic_age.errors import SingularityError
from kinetic_age.features import (
    FEATURE_NAMES,
    distance_indexes,
    fisher_z,
    hjorth_indexes,
    linear_regression_fit,
    position_cca,
    segment_features,
    spearman,
    spearman_table,
    subject_features,
    velocity_correlation,
)
from kinetic_age.joints import NUM_JOINTS

from oracles import oracle_cca_first, oracle_hjorth_window, oracle_pearson


# --- Fisher Z -------------------------------------------------------------


def test_fisher_z_odd_and_increasing():
    rs = np.linspace(-0.99, 0.99, 21)
    zs = [fisher_z(r) for r in rs]
    assert all(z2 > z1 for z1, z2 in zip(zs, zs[1:]))
    for r in rs:
        assert fisher_z(-r) == pytest.approx(-fisher_z(r))
    assert math.isfinite(fisher_z(1.0)) and math.isfinite(fisher_z(-1.0))


# --- canonical correlation --------------------------------------------------


def test_cca_identical_series(rng):
    left = rng.standard_normal((50, 3))
    z, angle = position_cca(left, left)
    assert z > 10  # atanh of the clamped correlation
    assert angle == pytest.approx(0.0, abs=1e-4)


def test_cca_known_orthogonal_mixing(rng):
    # right = left with channels rotated by a known orthogonal map: the first
    # canonical correlation is exactly 1 and the weight pair matches the
    # generalized-eigenproblem oracle.
    left = rng.standard_normal((200, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    right = left @ q.T
    z, angle = position_cca(left, right)
    assert z > 10
    r1, a, b = oracle_cca_first(left, right)
    assert r1 == pytest.approx(1.0, abs=1e-6)
    expected_angle = math.degrees(
        math.acos(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))))
    # sign convention of eigenvectors is arbitrary; compare the folded angle
    folded = min(angle, 180.0 - angle)
    assert folded == pytest.approx(min(expected_angle, 180 - expected_angle), abs=1e-3)


def test_cca_independent_noise_z_near_zero():
    rng = np.random.default_rng(2024)
    left = rng.standard_normal((10000, 3))
    right = rng.standard_normal((10000, 3))
    z, _ = position_cca(left, right)
    assert abs(z) < 0.05


def test_cca_matches_eig_oracle_on_correlated_data(rng):
    base = rng.standard_normal((300, 3))
    left = base + 0.5 * rng.standard_normal((300, 3))
    right = 0.7 * base + 0.5 * rng.standard_normal((300, 3))
    z, _ = position_cca(left, right)
    r1, _, _ = oracle_cca_first(left, right)
    assert math.tanh(z) == pytest.approx(r1, abs=1e-6)


def test_cca_rank_deficient_errors(rng):
    left = rng.standard_normal((30, 3))
    left[:, 2] = 0.0  # constant channel
    with pytest.raises(SingularityError):
        position_cca(left, rng.standard_normal((30, 3)))


# --- velocity correlation -----------------------------------------------


def test_velocity_correlation_identical(rng):
    pos = np.cumsum(rng.standard_normal((60, 3)), axis=0)
    z = velocity_correlation(pos, pos, 30.0)
    assert z > 10


def test_velocity_correlation_static_side_errors(rng):
    moving = np.cumsum(rng.standard_normal((40, 3)), axis=0)
    static = np.zeros((40, 3))
    with pytest.raises(SingularityError):
        velocity_correlation(moving, static, 30.0)


def test_velocity_correlation_antiphase_speeds():
    # construct 1-D trajectories whose speeds are exact mirror images
    t = np.arange(301)
    speed_l = 1.5 + np.sin(2 * np.pi * t[:-1] / 30)
    speed_r = 3.0 - speed_l
    pos_l = np.zeros((301, 3))
    pos_r = np.zeros((301, 3))
    pos_l[1:, 0] = np.cumsum(speed_l) / 30.0
    pos_r[1:, 0] = np.cumsum(speed_r) / 30.0
    z = velocity_correlation(pos_l, pos_r, 30.0)
    assert z < -10  # r = -1 exactly, clamped before atanh
    assert math.tanh(z) == pytest.approx(-1.0, abs=1e-9)


# --- distance indexes -----------------------------------------------------


def test_distance_constant_close_pair():
    t = 100
    left = np.zeros((t, 3))
    right = np.zeros((t, 3))
    right[:, 0] = 0.10
    d5, lift95, close, lift = distance_indexes(left, right)
    assert d5 == pytest.approx(0.10)
    assert close == 1.0
    assert lift == 0.0  # z = 0 everywhere


def test_distance_low_limbs_never_lifted():
    t = 50
    left = np.full((t, 3), 0.05)
    right = np.full((t, 3), 0.05)
    right[:, 0] += 0.01
    _, lift95, _, lift = distance_indexes(left, right)
    assert lift == 0.0
    assert lift95 == pytest.approx(0.05)


def test_distance_linspace_percentiles():
    # distances 0, 0.001, ..., 1.0; linear-interpolation percentile puts the
    # 5th percentile exactly at 0.05, and 250 of 1001 frames are below 0.25
    t = 1001
    left = np.zeros((t, 3))
    right = np.zeros((t, 3))
    right[:, 0] = np.linspace(0.0, 1.0, t)
    d5, _, close, _ = distance_indexes(left, right)
    assert d5 == pytest.approx(0.05, abs=1e-12)
    assert close == pytest.approx(250 / 1001)


def test_distance_2d_lift_unavailable(rng):
    left = rng.standard_normal((40, 2))
    right = rng.standard_normal((40, 2))
    d5, lift95, close, lift = distance_indexes(left, right)
    assert math.isnan(lift95) and math.isnan(lift)
    assert math.isfinite(d5) and 0.0 <= close <= 1.0


def test_distance_probs_invariant_to_frame_order(rng):
    left = rng.standard_normal((80, 3))
    right = rng.standard_normal((80, 3))
    perm = rng.permutation(80)
    a = distance_indexes(left, right)
    b = distance_indexes(left[perm], right[perm])
    assert a == pytest.approx(b)


# --- Hjorth ----------------------------------------------------------------


def _integrated_sine(omega, fs, seconds, amp=1.0):
    # position whose forward-difference velocity is a pure discrete sinusoid
    t = np.arange(int(seconds * fs) + 1)
    return -amp * np.cos(omega * t / fs)[:, None] * np.ones((1, 1))


def test_hjorth_sinusoid_mobility_and_complexity():
    fs = 30.0
    omega = 2 * np.pi  # 1 Hz
    pos = _integrated_sine(omega, fs, 20.0)
    activity, mobility, complexity = hjorth_indexes(pos, fs)
    assert mobility == pytest.approx(omega, rel=0.02)
    assert complexity == pytest.approx(1.0, rel=0.02)
    assert activity > 0


def test_hjorth_matches_window_oracle(rng):
    fs = 10.0
    pos = np.cumsum(rng.standard_normal((120, 2)), axis=0) * 0.01
    activity, mobility, complexity = hjorth_indexes(pos, fs)
    vel = np.diff(pos, axis=0) * fs
    acc = np.diff(vel, axis=0) * fs
    jerk = np.diff(acc, axis=0) * fs
    win, hop = 10, 5
    starts = list(range(0, jerk.shape[0] - win + 1, hop))[1:-1]
    accs, mobs, comps = [], [], []
    for s in starts:
        for c in range(2):
            a, m, x = oracle_hjorth_window(list(vel[s:s + win, c]),
                                           list(acc[s:s + win, c]),
                                           list(jerk[s:s + win, c]))
            accs.append(a), mobs.append(m), comps.append(x)
    # oracle averages per (window, component); implementation averages the
    # same set, grouped per window first
    assert activity == pytest.approx(np.mean(accs), rel=1e-12)
    assert mobility == pytest.approx(np.mean(mobs), rel=1e-12)
    assert complexity == pytest.approx(np.mean(comps), rel=1e-12)


def test_hjorth_constant_velocity_errors():
    pos = np.linspace(0.0, 5.0, 200)[:, None]
    with pytest.raises(SingularityError):
        hjorth_indexes(pos, 30.0)


def test_hjorth_scaling_laws(rng):
    fs = 30.0
    pos = np.cumsum(rng.standard_normal((400, 3)), axis=0) * 0.01
    a1, m1, c1 = hjorth_indexes(pos, fs)
    a2, m2, c2 = hjorth_indexes(3.0 * pos, fs)
    assert a2 == pytest.approx(9.0 * a1, rel=1e-9)
    assert m2 == pytest.approx(m1, rel=1e-9)
    assert c2 == pytest.approx(c1, rel=1e-9)


def test_hjorth_too_short_errors():
    with pytest.raises(SingularityError):
        hjorth_indexes(np.random.default_rng(0).standard_normal((40, 2)), 30.0)


# --- subject aggregation -----------------------------------------------


def _synthetic_segment(rng, t, seed_amp=1.0):
    coords = 0.02 * seed_amp * np.cumsum(rng.standard_normal((3, t, NUM_JOINTS)), axis=1)
    coords += 0.05
    return SkeletonSequence(coords, 30.0, f"seg{t}_{seed_amp}")


def test_subject_features_single_segment(rng):
    seg = _synthetic_segment(rng, 300)
    record = SubjectRecord("s", 100.0, "Synthetic", "Typical", [seg])
    got = subject_features(record).as_array()
    want = segment_features(seg).as_array()
    assert np.allclose(got, want, equal_nan=True)


def test_subject_features_weighted_average(rng):
    seg_a = _synthetic_segment(rng, 150, 1.0)
    seg_b = _synthetic_segment(rng, 450, 2.5)
    fa = segment_features(seg_a).as_array()
    fb = segment_features(seg_b).as_array()
    record = SubjectRecord("s", 100.0, "Synthetic", "Typical", [seg_a, seg_b])
    got = subject_features(record).as_array()
    assert np.allclose(got, 0.25 * fa + 0.75 * fb, rtol=1e-12)


def test_subject_features_identical_segments(rng):
    seg = _synthetic_segment(rng, 200)
    twin = SkeletonSequence(seg.coords.copy(), 30.0, "twin")
    record = SubjectRecord("s", 90.0, "Synthetic", "Typical", [seg, twin])
    got = subject_features(record).as_array()
    assert np.allclose(got, segment_features(seg).as_array())


def test_subject_features_skips_unusable_segments(rng):
    good = _synthetic_segment(rng, 300)
    too_short = SkeletonSequence(rng.standard_normal((3, 10, NUM_JOINTS)), 30.0, "tiny")
    record = SubjectRecord("s", 90.0, "Synthetic", "Typical", [too_short, good])
    got = subject_features(record).as_array()
    assert np.allclose(got, segment_features(good).as_array(), equal_nan=True)
    with pytest.raises(SingularityError):
        subject_features(SubjectRecord("t", 90.0, "Synthetic", "Typical", [too_short]))


def test_feature_vector_has_20_named_entries(rng):
    seg = _synthetic_segment(rng, 300)
    vec = segment_features(seg).as_array()
    assert vec.shape == (20,)
    assert len(FEATURE_NAMES) == 20


# --- Spearman ----------------------------------------------------------------


def test_spearman_monotone_transform():
    x = np.array([0.3, -1.2, 2.5, 0.7, 1.1, -0.4])
    assert spearman(x, x**3) == pytest.approx(1.0)
    assert spearman(x, np.exp(x)) == pytest.approx(1.0)


def test_spearman_reversed():
    x = np.array([5.0, 3.0, 1.0, 4.0, 2.0])
    assert spearman(x, -x) == pytest.approx(-1.0)


def test_spearman_hand_computed_tie_case():
    # x ranks: [1, 2.5, 2.5, 5, 5, 5]; y ranks: [6, 4.5, 4.5, 3, 1.5, 1.5]
    x = np.array([1.0, 2.0, 2.0, 4.0, 4.0, 4.0])
    y = np.array([10.0, 9.0, 9.0, 7.0, 3.0, 3.0])
    rx = [1.0, 2.5, 2.5, 5.0, 5.0, 5.0]
    ry = [6.0, 4.5, 4.5, 3.0, 1.5, 1.5]
    assert spearman(x, y) == pytest.approx(oracle_pearson(rx, ry), abs=1e-12)


def test_spearman_constant_errors():
    with pytest.raises(SingularityError):
        spearman(np.ones(5), np.arange(5.0))


def test_spearman_invariant_to_monotone_maps(rng):
    x = rng.standard_normal(30)
    y = rng.standard_normal(30)
    base = spearman(x, y)
    assert spearman(np.exp(x), y) == pytest.approx(base)
    assert spearman(x, 2 * y + 5) == pytest.approx(base)


# --- linear regression ------------------------------------------------------


def test_linreg_exact_affine(rng):
    x = rng.standard_normal((60, 20))
    coef = rng.standard_normal(20)
    y = x @ coef + 4.2
    model = linear_regression_fit(x, y)
    assert np.allclose(model.predict(x), y, atol=1e-8)
    assert model.intercept == pytest.approx(4.2, abs=1e-8)


def test_linreg_duplicate_column_errors(rng):
    x = rng.standard_normal((60, 20))
    x[:, 7] = x[:, 3]
    with pytest.raises(SingularityError):
        linear_regression_fit(x, rng.standard_normal(60))


def test_linreg_matches_normal_equations(rng):
    x = rng.standard_normal((80, 20))
    y = rng.standard_normal(80)
    model = linear_regression_fit(x, y)
    design = np.concatenate([np.ones((80, 1)), x], axis=1)
    beta = np.linalg.solve(design.T @ design, design.T @ y)
    assert np.abs(model.intercept - beta[0]) < 1e-8
    assert np.abs(model.coef - beta[1:]).max() < 1e-8


def test_linreg_needs_enough_samples(rng):
    with pytest.raises(ValueError):
        linear_regression_fit(rng.standard_normal((21, 20)), rng.standard_normal(21))


def test_spearman_table_shape(rng):
    feats = rng.standard_normal((30, 20))
    ages = rng.uniform(50, 150, 30)
    table = spearman_table(feats, ages)
    assert len(table) == 10
    for name, rh, rf in table:
        assert -1 <= rh <= 1 and -1 <= rf <= 1
