"""Evaluation statistics: Spearman, Friedman + Kendall's W, Wilcoxon + Cohen's d."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    AllZeroDifferences,
    ConstantInput,
    IncompleteMatrix,
    LengthMismatch,
    ValidationError,
)

EXACT_WILCOXON_MAX_N = 20

_EPS = 1e-15
_FPMIN = 1e-300


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    return kernels.average_ranks(x)


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    n: int


def spearman_rho(a, b) -> SpearmanResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"sequences differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise LengthMismatch("need at least 2 pairs")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ConstantInput("rank correlation is undefined for a constant sequence")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(ra @ rb) / math.sqrt(float(ra @ ra) * float(rb @ rb))
    return SpearmanResult(min(1.0, max(-1.0, rho)), len(a))


# -- chi-square tail ---------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series (x < a + 1)."""
    term = total = 1.0 / a
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi_square_upper_tail(x: float, df: int) -> float:
    """P(X >= x) for X ~ chi-square(df)."""
    if df < 1:
        raise ValidationError("df must be >= 1")
    if x < 0:
        raise ValidationError("x must be >= 0")
    if x == 0:
        return 1.0
    a, z = df / 2.0, x / 2.0
    if z < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, z)))
    return min(1.0, max(0.0, _gamma_cont_frac(a, z)))


# -- Friedman -----------------------------------------------------------------

@dataclass(frozen=True)
class FriedmanResult:
    chi2: float
    df: int
    n_subjects: int
    p: float
    kendalls_w: float

    def format(self) -> str:
        return f"χ²({self.df}, {self.n_subjects}) = {self.chi2:.2f}, {format_p(self.p)}, W = {self.kendalls_w:.2f}"


def format_p(p: float) -> str:
    return "p < 0.001" if p < 0.001 else f"p = {p:.3f}"


def friedman_test(scores) -> FriedmanResult:
    """Friedman test over columns (conditions) of an n_subjects x k matrix.

    Rows are ranked independently with average ranks; the statistic carries
    the usual sum(t^3 - t) tie correction and W = chi2 / (n (k - 1)).
    """
    m = np.asarray(scores, dtype=np.float64)
    if m.ndim != 2:
        raise IncompleteMatrix("scores must be a 2-D matrix")
    n, k = m.shape
    if n < 2 or k < 3:
        raise IncompleteMatrix(f"need >= 2 subjects and >= 3 conditions, got {n} x {k}")
    if not np.isfinite(m).all():
        raise IncompleteMatrix("scores contain missing or non-finite entries")

    ranks = np.vstack([average_ranks(row) for row in m])
    tie_sum = 0.0
    for row in m:
        _, counts = np.unique(row, return_counts=True)
        tie_sum += float(np.sum(counts.astype(np.float64) ** 3 - counts))
    denom = 1.0 - tie_sum / (n * (k ** 3 - k))
    if denom <= 0:
        # every row fully tied
        return FriedmanResult(0.0, k - 1, n, 1.0, 0.0)
    rank_sums = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * float(rank_sums @ rank_sums) - 3.0 * n * (k + 1)
    chi2 = max(0.0, stat / denom)
    return FriedmanResult(chi2, k - 1, n, chi_square_upper_tail(chi2, k - 1), chi2 / (n * (k - 1)))


# -- Wilcoxon -----------------------------------------------------------------

class WilcoxonMethod(enum.Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float
    n_effective: int
    p: float
    method: WilcoxonMethod
    cohens_d: float
    rank_sum_pos: float = 0.0
    rank_sum_neg: float = 0.0


def exact_signed_rank_p(ranks: np.ndarray, w: float) -> float:
    """Two-sided exact p of ``min(T+, T-) <= w`` given the (average) ranks of |d|.

    Counts all 2^n sign assignments through the rank-sum distribution;
    doubled ranks are integral even with ties.
    """
    doubled = np.rint(2.0 * np.asarray(ranks)).astype(np.int64)
    counts = kernels.signed_rank_counts(doubled)
    cut = int(round(2.0 * w))
    tail = int(counts[: cut + 1].sum())
    return min(1.0, 2.0 * tail / float(2 ** len(doubled)))


def normal_signed_rank_p(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(t.astype(np.float64) ** 3 - t)) / 48.0
    if var <= 0:
        return 1.0
    # continuity correction toward the mean
    z = (w - mean + 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, method: str = "auto") -> WilcoxonResult:
    """Paired two-sided signed-rank test of ``a - b``.

    Zero differences are dropped. ``method`` is ``"auto"`` (exact up to 20
    non-zero pairs), ``"exact"`` or ``"normal"``. ``cohens_d`` is
    mean(d) / sd(d) with the n-1 sample sd, over the non-zero differences; it is
    nan with a single pair and +/-inf when all differences are equal.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"sequences differ in shape: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise LengthMismatch("need at least 2 pairs")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise AllZeroDifferences("every paired difference is zero")

    ranks = average_ranks(np.abs(d))
    t_pos = float(ranks[d > 0].sum())
    t_neg = float(ranks[d < 0].sum())
    w = min(t_pos, t_neg)

    use_exact = {"auto": n <= EXACT_WILCOXON_MAX_N, "exact": True, "normal": False}.get(method)
    if use_exact is None:
        raise ValidationError(f"unknown method {method!r}")
    if use_exact:
        p, kind = exact_signed_rank_p(ranks, w), WilcoxonMethod.EXACT
    else:
        p, kind = normal_signed_rank_p(ranks, w), WilcoxonMethod.NORMAL_APPROX

    return WilcoxonResult(w, n, p, kind, paired_cohens_d(d), t_pos, t_neg)


def paired_cohens_d(d) -> float:
    d = np.asarray(d, dtype=np.float64)
    if len(d) < 2:
        return math.nan
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0:
        return math.copysign(math.inf, mean) if mean else math.nan
    return mean / sd


# -- correlation bands --------------------------------------------------------

class CorrelationBand(enum.Enum):
    HIGH = "high"
    MODERATE = "moderate"
    LOW = "low"
    NEGLIGIBLE = "negligible"


BAND_THRESHOLDS = ((0.70, CorrelationBand.HIGH), (0.50, CorrelationBand.MODERATE),
                   (0.30, CorrelationBand.LOW))


def classify_band(rho: float) -> CorrelationBand:
    """Band of the signed correlation; negative values are Negligible."""
    if not abs(rho) <= 1.0:
        raise ValidationError(f"correlation {rho} outside [-1, 1]")
    for cut, band in BAND_THRESHOLDS:
        if rho >= cut:
            return band
    return CorrelationBand.NEGLIGIBLE
