"""Chi-square and Welch tests, odds ratios, and two-layer pattern labelling."""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seqmine import FrequentPatternStats

_EPS = 1e-16
_TINY = sys.float_info.min / _EPS


class DegenerateTableError(ValueError):
    pass


# -- special functions ----------------------------------------------------
# Series / Lentz continued fractions in the style of Numerical Recipes.

def _gamma_p_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_fraction(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0 or x < 0:
        raise ValueError("gamma_q needs a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_fraction(a, x)


def _beta_fraction(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 100000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def beta_inc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("beta_inc needs a, b > 0")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_fraction(a, b, x) / a
    return 1.0 - front * _beta_fraction(b, a, 1.0 - x) / b


def chi2_sf(statistic: float, df: float) -> float:
    if statistic <= 0:
        return 1.0
    return gamma_q(df / 2.0, statistic / 2.0)


def student_t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    if t == 0:
        return 1.0
    return beta_inc(df / 2.0, 0.5, df / (df + t * t))


# -- tests ------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: float
    p_value: float

    __test__ = False  # keep pytest from collecting this class

    def to_json(self) -> dict:
        return {"statistic": self.statistic, "df": self.degrees_of_freedom, "p": self.p_value}


def chi_square_2x2(a: float, b: float, c: float, d: float, yates: bool = False) -> TestResult:
    """Pearson chi-square on [[a, b], [c, d]], 1 degree of freedom."""
    if min(a, b, c, d) < 0:
        raise ValueError("counts must be non-negative")
    rows = (a + b, c + d)
    cols = (a + c, b + d)
    if min(rows) <= 0 or min(cols) <= 0:
        raise DegenerateTableError(f"zero marginal total in [[{a}, {b}], [{c}, {d}]]")
    n = a + b + c + d
    diff = abs(a * d - b * c)
    if yates:
        diff = max(diff - n / 2.0, 0.0)
    statistic = n * diff * diff / (rows[0] * rows[1] * cols[0] * cols[1])
    return TestResult(statistic, 1.0, min(max(chi2_sf(statistic, 1.0), 0.0), 1.0))


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    if all(isinstance(x, int) for x in xs):
        # exact integer moments; instance supports are counts
        total = sum(xs)
        squares = sum(x * x for x in xs)
        return total / n, (n * squares - total * total) / (n * (n - 1))
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


def welch_t_test(xs: Sequence[float], ys: Sequence[float]) -> TestResult:
    """Two-sided Welch t-test."""
    nx, ny = len(xs), len(ys)
    if nx < 2 or ny < 2:
        raise ValueError("welch_t_test needs at least 2 observations per sample")
    return _welch(*_mean_var(xs), nx, *_mean_var(ys), ny)


def _welch(mx: float, vx: float, nx: int, my: float, vy: float, ny: int) -> TestResult:
    sx, sy = vx / nx, vy / ny
    se2 = sx + sy
    if se2 == 0:
        if mx == my:
            return TestResult(0.0, float(nx + ny - 2), 1.0)
        return TestResult(math.copysign(math.inf, mx - my), float(nx + ny - 2), 0.0)
    t = (mx - my) / math.sqrt(se2)
    df = se2 * se2 / (sx * sx / (nx - 1) + sy * sy / (ny - 1))
    return TestResult(t, df, min(max(student_t_two_sided(t, df), 0.0), 1.0))


def odds_ratio(perc_high: float, perc_low: float) -> float:
    """Odds of the pattern among high performers over odds among low performers.

    Fractions on the boundary give ``inf`` or ``0.0`` (``nan`` when both
    fractions sit on the same boundary); callers flag those rows.
    """
    for p in (perc_high, perc_low):
        if not 0 <= p <= 1:
            raise ValueError(f"fraction out of range: {p}")
    odds_high = math.inf if perc_high == 1 else perc_high / (1 - perc_high)
    odds_low = math.inf if perc_low == 1 else perc_low / (1 - perc_low)
    if math.isinf(odds_high) and math.isinf(odds_low):
        return math.nan
    if math.isinf(odds_high):
        return math.inf
    if math.isinf(odds_low):
        return 0.0
    if odds_low == 0:
        return math.nan if odds_high == 0 else math.inf
    return odds_high / odds_low


def is_boundary(perc_high: float, perc_low: float) -> bool:
    return perc_high in (0.0, 1.0) or perc_low in (0.0, 1.0)


# -- two-layer classification ---------------------------------------------

class PatternClass(str, enum.Enum):
    FH = "FH"
    FL = "FL"
    DH = "DH"
    DL = "DL"
    DISCARDED = "Discarded"

    @property
    def is_high(self) -> bool:
        return self in (PatternClass.FH, PatternClass.DH)

    @property
    def is_low(self) -> bool:
        return self in (PatternClass.FL, PatternClass.DL)

    @property
    def n_bins(self) -> int:
        return 2 if self in (PatternClass.FH, PatternClass.FL) else 3


@dataclass(frozen=True)
class Classification:
    label: PatternClass
    chi2: TestResult | None = None
    ttest: TestResult | None = None


def classify_pattern(stats: FrequentPatternStats, n_high: int, n_low: int, alpha: float = 0.05,
                     use_foc: bool = False, yates: bool = False,
                     moments: tuple[float, float, float, float] | None = None) -> Classification:
    """Label a frequent pattern FH/FL (chi-square layer), DH/DL (t-test layer) or Discarded.

    The chi-square table holds students with / without the pattern per
    group. With ``use_foc`` it holds total occurrences against group size
    instead. ``moments`` (mean and variance of each group's instance
    supports) may be passed in when computed in bulk.
    """
    if stats.seq_support_high > n_high or stats.seq_support_low > n_low:
        raise ValueError("sequence support exceeds group size")
    if use_foc:
        table = (stats.foc_high, n_high, stats.foc_low, n_low)
        rate_high, rate_low = stats.foc_high / n_high, stats.foc_low / n_low
    else:
        table = (stats.seq_support_high, n_high - stats.seq_support_high,
                 stats.seq_support_low, n_low - stats.seq_support_low)
        rate_high, rate_low = stats.seq_support_high / n_high, stats.seq_support_low / n_low
    chi = None
    try:
        chi = chi_square_2x2(*table, yates=yates)
    except DegenerateTableError:
        pass
    if chi is not None and chi.p_value < alpha:
        label = PatternClass.FH if rate_high > rate_low else PatternClass.FL
        return Classification(label, chi, None)

    high, low = stats.instance_supports_high, stats.instance_supports_low
    if len(high) < 2 or len(low) < 2:
        return Classification(PatternClass.DISCARDED, chi, None)
    if moments is None:
        moments = (*_mean_var(high), *_mean_var(low))
    mx, vx, my, vy = moments
    tt = _welch(mx, vx, len(high), my, vy, len(low))
    if tt.p_value < alpha:
        label = PatternClass.DH if mx > my else PatternClass.DL
        return Classification(label, chi, tt)
    return Classification(PatternClass.DISCARDED, chi, tt)


def _batch_moments(stats: Sequence[FrequentPatternStats]) -> list | None:
    """Exact integer means and variances for every pattern at once, or None."""
    sizes = {(len(s.instance_supports_high), len(s.instance_supports_low)) for s in stats}
    if len(sizes) != 1:
        return None
    nx, ny = sizes.pop()
    if nx < 2 or ny < 2:
        return None
    high = np.array([s.instance_supports_high for s in stats])
    low = np.array([s.instance_supports_low for s in stats])
    if high.dtype.kind not in "iu" or low.dtype.kind not in "iu":
        return None
    out = []
    for m, n in ((high, nx), (low, ny)):
        total = m.sum(axis=1)
        squares = (m * m).sum(axis=1)
        out.append((total.tolist(), (n * squares - total * total).tolist(), n))
    (th, qh, nx), (tl, ql, ny) = out
    return [(a / nx, b / (nx * (nx - 1)), c / ny, d / (ny * (ny - 1)))
            for a, b, c, d in zip(th, qh, tl, ql)]


def classify_all(stats: Sequence[FrequentPatternStats], n_high: int, n_low: int,
                 alpha: float = 0.05, correction: str = "none", use_foc: bool = False,
                 yates: bool = False, n_tests: int | None = None) -> list[Classification]:
    """Classify every pattern.

    With ``correction='bonferroni'`` alpha is divided by ``n_tests``, the
    size of the test family. It defaults to two tests per pattern, since a
    pattern may be tried by both the chi-square and the t-test layer. Pass a
    larger family when several assignments are judged together.
    """
    if correction not in ("none", "bonferroni"):
        raise ValueError(f"unknown correction {correction!r}")
    if n_tests is None:
        n_tests = 2 * len(stats)
    level = alpha
    if correction == "bonferroni" and n_tests > 0:
        level = alpha / n_tests
    moments = _batch_moments(stats) if stats else None
    if moments is None:
        moments = [None] * len(stats)
    return [classify_pattern(s, n_high, n_low, level, use_foc=use_foc, yates=yates, moments=m)
            for s, m in zip(stats, moments)]
