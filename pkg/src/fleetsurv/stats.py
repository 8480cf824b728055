"""Two-sample and normality test statistics used by the mobility analytics.

The statistics are computed from their definitions (Shapiro-Wilk follows the
Royston 1995 approximation for 3 <= n <= 5000); scipy is used only for
distribution CDFs/quantiles, never for the test procedures themselves. The
test suite cross-checks every statistic against scipy.stats as an independent
reference.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test at significance level ``alpha``."""

    __test__ = False  # not a pytest collection target

    test: str
    statistic: float
    p_value: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
        }


def _poly(coeffs, x):
    # Horner evaluation, coeffs[0] is the constant term (AS R94 convention)
    result = 0.0
    for c in reversed(coeffs):
        result = result * x + c
    return result


# Royston (1995) polynomial constants, AS R94
_C1 = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056]
_C2 = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633]
_C3 = [0.5440, -0.39978, 0.025054, -6.714e-4]
_C4 = [1.3822, -0.77857, 0.062767, -0.0020322]
_C5 = [-1.5861, -0.31082, -0.083751, 0.0038915]
_C6 = [-0.4803, -0.082676, 0.0030302]
_G = [-2.273, 0.459]


def shapiro_wilk(sample, alpha: float = 0.01) -> TestResult:
    """Shapiro-Wilk normality test (Royston approximation, 3 <= n <= 5000)."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 3:
        raise ValueError("Shapiro-Wilk requires at least 3 observations")
    if n > 5000:
        warnings.warn("Shapiro-Wilk approximation calibrated for n <= 5000")
    if x[-1] - x[0] <= 0:
        raise ValueError("Shapiro-Wilk undefined for a constant sample")

    n2 = n // 2
    if n == 3:
        a = np.array([math.sqrt(0.5)])
    else:
        # Blom normal scores for the lower half, then Royston's corrections
        m = special.ndtri((np.arange(1, n2 + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * np.sum(m**2)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        if n > 5:
            i1 = 2
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt(
                (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
            )
        else:
            i1 = 1
            a2 = None
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
        a = -m / fac
        a[0] = a1
        if a2 is not None:
            a[1] = a2

    # W from the antisymmetric coefficient vector: sum_i a_i * (x_(n+1-i) - x_(i))
    diffs = x[::-1][:n2] - x[:n2]
    numerator = float(np.dot(a, diffs)) ** 2
    denom = float(np.sum((x - x.mean()) ** 2))
    w = numerator / denom
    w = min(w, 1.0)

    if n == 3:
        pi6 = 6.0 / math.pi
        stqr = math.asin(math.sqrt(0.75))
        pw = pi6 * (math.asin(math.sqrt(w)) - stqr)
        pw = min(max(pw, 0.0), 1.0)
    elif n <= 11:
        gamma = _poly(_G, n)
        y = -math.log(gamma - math.log1p(-w))
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
        pw = float(special.ndtr(-(y - mu) / sigma))
    else:
        ln_n = math.log(n)
        y = math.log1p(-w)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
        pw = float(special.ndtr(-(y - mu) / sigma))
    return TestResult("shapiro-wilk", w, pw, alpha)


def ks_two_sample(sample_a, sample_b, alpha: float = 0.01) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test, asymptotic two-sided p-value."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test requires non-empty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(math.sqrt(en) * d))
    p = min(max(p, 0.0), 1.0)
    return TestResult("ks-2sample", d, p, alpha)


def _t_p_value(t: float, df: float) -> float:
    return float(2.0 * special.stdtr(df, -abs(t)))


def t_test_pooled(sample_a, sample_b, alpha: float = 0.01) -> TestResult:
    """Independent two-sample t-test with pooled variance."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("t-test requires at least 2 observations per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    pooled = ((a.size - 1) * va + (b.size - 1) * vb) / (a.size + b.size - 2)
    denom = math.sqrt(pooled * (1.0 / a.size + 1.0 / b.size))
    return _finish_t_test("t-ind", a, b, denom, a.size + b.size - 2, alpha)


def t_test_welch(sample_a, sample_b, alpha: float = 0.01) -> TestResult:
    """Welch's t-test for unequal variances."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("t-test requires at least 2 observations per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    denom = math.sqrt(va + vb)
    if va + vb > 0:
        df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    else:
        df = a.size + b.size - 2
    return _finish_t_test("t-welch", a, b, denom, df, alpha)


def _finish_t_test(name, a, b, denom, df, alpha) -> TestResult:
    delta = a.mean() - b.mean()
    if denom == 0.0:
        # degenerate: no variability in either sample
        if delta == 0.0:
            return TestResult(name, 0.0, 1.0, alpha)
        return TestResult(name, math.inf if delta > 0 else -math.inf, 0.0, alpha)
    t = delta / denom
    return TestResult(name, float(t), _t_p_value(t, df), alpha)


def f_variance_ratio(sample_a, sample_b, alpha: float = 0.05) -> TestResult:
    """Two-sided F test of equal variances (pretest for the t-test choice)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("F test requires at least 2 observations per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        return TestResult("f-ratio", 1.0, 1.0, alpha)
    if vb == 0.0 or va == 0.0:
        return TestResult("f-ratio", math.inf, 0.0, alpha)
    f = va / vb
    cdf = float(special.fdtr(a.size - 1, b.size - 1, f))
    p = min(max(2.0 * min(cdf, 1.0 - cdf), 0.0), 1.0)
    return TestResult("f-ratio", f, p, alpha)
