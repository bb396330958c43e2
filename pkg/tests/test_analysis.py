import numpy as np
import pytest

from kinetic_age.analysis import (
    GroupComparison,
    KAChart,
    compare_groups,
    fit_sigmoid,
    ka_gap,
    ka_index,
    sigmoid_curve,
)
from kinetic_age.errors import SingularityError

from oracles import oracle_rank_sum_exact_p, oracle_u_statistic


# --- KA index -----------------------------------------------------------


def test_ka_index_boundaries():
    assert ka_index(50.0) == 0.0
    assert ka_index(150.0) == 1.0
    assert ka_index(100.0) == 0.5
    assert ka_index(20.0) == 0.0
    assert ka_index(500.0) == 1.0


def test_ka_index_monotone_and_lipschitz(rng):
    ages = np.sort(rng.uniform(0, 200, 100))
    vals = ka_index(ages)
    assert np.all(np.diff(vals) >= 0)
    assert np.all(np.abs(np.diff(vals)) <= np.diff(ages) / 100.0 + 1e-15)


# --- sigmoid fitting -------------------------------------------------------


def _curve_points(rng, l0=0.1, l1=0.9, x0=95.0, s=12.0, n=40, noise=0.0):
    ages = np.linspace(50, 150, n)
    ka = sigmoid_curve(ages, l0, l1, x0, s)
    if noise:
        ka = ka + noise * rng.standard_normal(n)
    return ages, ka


def test_sigmoid_exact_recovery(rng):
    ages, ka = _curve_points(rng)
    chart = fit_sigmoid(ages, ka)
    assert chart.l0 == pytest.approx(0.1, abs=1e-4)
    assert chart.l1 == pytest.approx(0.9, abs=1e-4)
    assert chart.x0 == pytest.approx(95.0, abs=1e-4)
    assert chart.s == pytest.approx(12.0, abs=1e-4)
    assert chart.converged and not chart.degenerate
    assert chart.l0 < chart.l1 and chart.s > 0


def test_sigmoid_constant_ka_degenerate():
    ages = np.linspace(50, 150, 20)
    chart = fit_sigmoid(ages, np.full(20, 0.4))
    assert chart.degenerate
    assert abs(chart.l1 - chart.l0) < 1e-5


def test_sigmoid_vertical_shift_moves_asymptotes_only(rng):
    ages, ka = _curve_points(rng)
    base = fit_sigmoid(ages, ka)
    shifted = fit_sigmoid(ages, ka + 0.25)
    assert shifted.l0 == pytest.approx(base.l0 + 0.25, abs=1e-4)
    assert shifted.l1 == pytest.approx(base.l1 + 0.25, abs=1e-4)
    assert shifted.x0 == pytest.approx(base.x0, abs=1e-3)
    assert shifted.s == pytest.approx(base.s, abs=1e-3)


def test_sigmoid_sse_not_worse_than_best_start(rng):
    ages, ka = _curve_points(rng, noise=0.05)
    chart = fit_sigmoid(ages, ka)
    l0s = float(np.percentile(ka, 10))
    l1s = float(np.percentile(ka, 90))
    start_sses = []
    for x0 in (70.0, 90.0, 110.0):
        for s in (5.0, 15.0, 30.0):
            r = sigmoid_curve(ages, l0s, l1s, x0, s) - ka
            start_sses.append(float(r @ r))
    assert chart.sse <= min(start_sses) + 1e-12


def test_sigmoid_needs_enough_points():
    with pytest.raises(ValueError):
        fit_sigmoid(np.linspace(50, 150, 7), np.linspace(0, 1, 7))


def test_sigmoid_deterministic(rng):
    ages, ka = _curve_points(rng, noise=0.03)
    a = fit_sigmoid(ages, ka)
    b = fit_sigmoid(ages, ka)
    assert (a.l0, a.l1, a.x0, a.s) == (b.l0, b.l1, b.x0, b.s)


# --- KA gap ------------------------------------------------------------------


def test_ka_gap_on_curve_zero(rng):
    ages, ka = _curve_points(rng)
    chart = fit_sigmoid(ages, ka)
    gaps = ka_gap(ka, ages, chart)
    assert np.abs(gaps).max() < 1e-4


def test_ka_gap_offset():
    chart = KAChart(l0=0.1, l1=0.9, x0=95.0, s=12.0, sse=0.0,
                    converged=True, degenerate=False)
    age = 100.0
    on_curve = chart.predict(age)
    assert ka_gap(on_curve + 0.2, age, chart) == pytest.approx(0.2)


def test_fit_residuals_sum_to_zero(rng):
    # the Jacobian of the asymptote pair spans the constant direction, so
    # least-squares residuals are orthogonal to constants at the optimum
    ages, ka = _curve_points(rng, n=60, noise=0.04)
    chart = fit_sigmoid(ages, ka)
    resid = ka - chart.predict(ages)
    assert abs(resid.sum()) < 1e-6 * len(ages)


# --- group comparison --------------------------------------------------------


def test_identical_groups_u_central():
    vals = np.array([0.1, -0.2, 0.3, 0.05, -0.15, 0.22, -0.08, 0.0])
    res = compare_groups(vals, vals.copy())
    assert res.u_statistic == pytest.approx(len(vals) ** 2 / 2)
    assert res.p_value > 0.9


def test_separated_groups(rng):
    a = np.sort(rng.uniform(-3, -1, 10))
    b = np.sort(rng.uniform(1, 3, 10))
    res = compare_groups(a, b)
    assert res.u_statistic == 0.0
    assert res.p_value < 0.001
    assert res.u_statistic == oracle_u_statistic(a, b)
    exact = oracle_rank_sum_exact_p(list(a), list(b))
    assert exact < 0.001


def test_u_statistic_matches_pair_counting(rng):
    a = rng.standard_normal(8)
    b = rng.standard_normal(6) + 0.5
    res = compare_groups(a, b)
    assert res.u_statistic == pytest.approx(oracle_u_statistic(a, b))


def test_normal_approximation_close_to_exact(rng):
    a = list(rng.standard_normal(6))
    b = list(rng.standard_normal(7) + 1.2)
    res = compare_groups(np.array(a), np.array(b))
    exact = oracle_rank_sum_exact_p(a, b)
    assert res.p_value == pytest.approx(exact, abs=0.05)


def test_age_filter_applies():
    gaps_a = np.array([0.0, 0.1, 5.0])
    gaps_b = np.array([0.2, -0.1, -5.0])
    ages_a = np.array([60.0, 90.0, 95.0])
    ages_b = np.array([70.0, 85.0, 100.0])
    res = compare_groups(gaps_a, gaps_b, ages_a, ages_b, min_age=80.0)
    assert res.n_typical == 2 and res.n_mni == 2


def test_empty_group_after_filter_errors():
    with pytest.raises(SingularityError):
        compare_groups(np.array([1.0]), np.array([2.0]),
                       np.array([50.0]), np.array([90.0]), min_age=80.0)


def test_single_element_groups_low_power():
    res = compare_groups(np.array([1.0]), np.array([2.0]))
    assert res.low_power
    assert 0.0 <= res.p_value <= 1.0


def test_p_invariant_under_monotone_transform(rng):
    a = rng.standard_normal(9)
    b = rng.standard_normal(11) + 0.7
    base = compare_groups(a, b)
    warped = compare_groups(np.exp(a), np.exp(b))
    assert warped.p_value == pytest.approx(base.p_value, rel=1e-12)
    assert warped.u_statistic == pytest.approx(base.u_statistic)


def test_group_summary_quartiles(rng):
    a = rng.standard_normal(40)
    b = rng.standard_normal(30)
    res = compare_groups(a, b)
    assert res.median_typical == pytest.approx(np.median(a))
    assert res.quartiles_mni[0] == pytest.approx(np.percentile(b, 25))
    doc = res.as_dict()
    assert set(doc) >= {"U", "p_value", "median_typical", "median_mni"}
