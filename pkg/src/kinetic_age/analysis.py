"""Kinetic-age index, growth-chart fitting, and cohort comparison.

Predicted ages are normalized to a unitless index over the 50..150 day
range. A four-parameter logistic fitted to the typically developing cohort
serves as the growth chart; a subject's KA-gap is the difference between
their index and the chart at their chronological age. Cohorts are compared
with a two-sided Wilcoxon rank-sum test (normal approximation with tie
correction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularityError

KA_AGE_LO = 50.0
KA_AGE_HI = 150.0

SIGMOID_STARTS_X0 = (70.0, 90.0, 110.0)
SIGMOID_STARTS_S = (5.0, 15.0, 30.0)
MAX_FIT_ITER = 500


def ka_index(predicted_age_days):
    """Normalize a predicted age to the unit interval over 50..150 days."""
    arr = np.asarray(predicted_age_days, float)
    out = np.clip((arr - KA_AGE_LO) / (KA_AGE_HI - KA_AGE_LO), 0.0, 1.0)
    return float(out) if np.isscalar(predicted_age_days) else out


def sigmoid_curve(age, l0: float, l1: float, x0: float, s: float):
    age = np.asarray(age, float)
    z = (age - x0) / s
    out = l0 + (l1 - l0) / (1.0 + np.exp(-z))
    return out


@dataclass
class KAChart:
    l0: float
    l1: float
    x0: float
    s: float
    sse: float
    converged: bool
    degenerate: bool
    ages: np.ndarray = field(default_factory=lambda: np.empty(0))
    ka: np.ndarray = field(default_factory=lambda: np.empty(0))
    groups: list[str] = field(default_factory=list)

    def predict(self, age):
        return sigmoid_curve(age, self.l0, self.l1, self.x0, self.s)

    def residuals(self) -> np.ndarray:
        return self.ka - self.predict(self.ages)

    def params(self) -> dict:
        return {"l0": self.l0, "l1": self.l1, "x0": self.x0, "s": self.s,
                "sse": self.sse, "converged": self.converged,
                "degenerate": self.degenerate}


def _sigmoid_jacobian(age: np.ndarray, l0: float, l1: float, x0: float, s: float):
    z = (age - x0) / s
    sig = 1.0 / (1.0 + np.exp(-z))
    dsig = sig * (1.0 - sig)
    j = np.empty((len(age), 4))
    j[:, 0] = 1.0 - sig
    j[:, 1] = sig
    j[:, 2] = (l1 - l0) * dsig * (-1.0 / s)
    j[:, 3] = (l1 - l0) * dsig * (-(age - x0) / (s * s))
    return j, sig


def _fit_from_start(ages, ka, theta0) -> tuple[np.ndarray, float, bool]:
    """Damped Gauss-Newton (Levenberg style) from one start; s stays positive."""
    theta = np.array(theta0, float)
    resid = sigmoid_curve(ages, *theta) - ka
    sse = float(resid @ resid)
    lam = 1e-3
    converged = False
    for _ in range(MAX_FIT_ITER):
        j, _ = _sigmoid_jacobian(ages, *theta)
        g = j.T @ resid
        h = j.T @ j
        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(h + lam * np.eye(4), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta + delta
            if cand[3] <= 0:
                lam *= 10.0
                continue
            cand_resid = sigmoid_curve(ages, *cand) - ka
            cand_sse = float(cand_resid @ cand_resid)
            if cand_sse <= sse:
                improvement = sse - cand_sse
                theta, resid, sse = cand, cand_resid, cand_sse
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if improvement <= 1e-14 * (1.0 + sse):
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            converged = converged or not accepted and bool(np.linalg.norm(g) < 1e-10)
            break
    return theta, sse, converged


def fit_sigmoid(ages: np.ndarray, ka: np.ndarray,
                groups: list[str] | None = None) -> KAChart:
    """Least-squares four-parameter logistic from a deterministic multi-start.

    Starts span x0 in {70, 90, 110} days and s in {5, 15, 30}; the lowest-SSE
    solution wins. A non-converged fit is still returned, flagged; a span
    collapse (upper asymptote meeting the lower) is flagged degenerate.
    """
    ages = np.asarray(ages, float)
    ka = np.asarray(ka, float)
    if len(ages) < 8 or len(ages) != len(ka):
        raise ValueError("sigmoid fit needs at least 8 (age, ka) points")
    l0_start = float(np.percentile(ka, 10))
    l1_start = float(np.percentile(ka, 90))
    if l1_start - l0_start < 1e-12:
        l1_start = l0_start + 1e-3
    best = None
    for x0 in SIGMOID_STARTS_X0:
        for s in SIGMOID_STARTS_S:
            theta, sse, conv = _fit_from_start(ages, ka, (l0_start, l1_start, x0, s))
            if best is None or sse < best[1]:
                best = (theta, sse, conv)
    theta, sse, conv = best
    span_scale = max(float(np.ptp(ka)), 1e-12)
    degenerate = abs(theta[1] - theta[0]) < 1e-6 * max(1.0, span_scale) or np.ptp(ka) == 0
    return KAChart(l0=float(theta[0]), l1=float(theta[1]), x0=float(theta[2]),
                   s=float(theta[3]), sse=sse, converged=bool(conv),
                   degenerate=bool(degenerate), ages=ages, ka=ka,
                   groups=list(groups) if groups is not None else [])


def ka_gap(ka_value, age, chart: KAChart):
    """Difference between a subject's KA and the chart at their age."""
    return np.asarray(ka_value, float) - chart.predict(age)


def _rank_with_ties(values: np.ndarray) -> tuple[np.ndarray, float]:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    tie_term = 0.0
    i = 0
    sv = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        t = j - i + 1
        tie_term += t**3 - t
        i = j + 1
    return ranks, tie_term


@dataclass
class GroupComparison:
    u_statistic: float
    z_value: float
    p_value: float
    n_typical: int
    n_mni: int
    median_typical: float
    median_mni: float
    quartiles_typical: tuple[float, float]
    quartiles_mni: tuple[float, float]
    low_power: bool

    def as_dict(self) -> dict:
        return {
            "U": self.u_statistic, "z": self.z_value, "p_value": self.p_value,
            "n_typical": self.n_typical, "n_mni": self.n_mni,
            "median_typical": self.median_typical, "median_mni": self.median_mni,
            "q1_typical": self.quartiles_typical[0], "q3_typical": self.quartiles_typical[1],
            "q1_mni": self.quartiles_mni[0], "q3_mni": self.quartiles_mni[1],
            "low_power": self.low_power,
        }


def compare_groups(gaps_typical: np.ndarray, gaps_mni: np.ndarray,
                   ages_typical: np.ndarray | None = None,
                   ages_mni: np.ndarray | None = None,
                   min_age: float = 80.0) -> GroupComparison:
    """Two-sided rank-sum comparison of KA-gaps, restricted to older infants.

    The age filter applies when ages are provided. The reported U counts
    pairs won by the first (typical) group; p comes from the normal
    approximation with tie correction.
    """
    a = np.asarray(gaps_typical, float)
    b = np.asarray(gaps_mni, float)
    if ages_typical is not None:
        a = a[np.asarray(ages_typical, float) >= min_age]
    if ages_mni is not None:
        b = b[np.asarray(ages_mni, float) >= min_age]
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise SingularityError("a group is empty after the age filter")
    combined = np.concatenate([a, b])
    ranks, tie_term = _rank_with_ties(combined)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0
    n = n1 + n2
    mean_u = n1 * n2 / 2.0
    tie_factor = (n + 1) - tie_term / (n * (n - 1)) if n > 1 else 0.0
    var_u = n1 * n2 / 12.0 * tie_factor
    if var_u <= 0:
        z = 0.0
        p = 1.0
    else:
        z = (u1 - mean_u) / math.sqrt(var_u)
        p = math.erfc(abs(z) / math.sqrt(2.0))
    return GroupComparison(
        u_statistic=float(u1), z_value=float(z), p_value=float(p),
        n_typical=n1, n_mni=n2,
        median_typical=float(np.median(a)), median_mni=float(np.median(b)),
        quartiles_typical=(float(np.percentile(a, 25)), float(np.percentile(a, 75))),
        quartiles_mni=(float(np.percentile(b, 25)), float(np.percentile(b, 75))),
        low_power=(n1 < 2 or n2 < 2),
    )
