"""Hypothesis tests for pooled and censored distance samples.

Multi-group tests: one-way ANOVA F with equal variances (``F1``), Welch's
heteroscedastic ANOVA (``F2``), Kruskal-Wallis (``KW``) and Brown-Forsythe
(``BF``, ANOVA on absolute deviations from each group's median).

Two-sample tests take an :class:`Alternative` whose direction always refers
to the first sample: ``LESS`` means the first sample tends to be smaller (or,
for Brown-Forsythe, less variable) than the second.

Every test is split into a raw-data entry point and a ``*_from_summary``
finisher working on sufficient statistics, so the censoring engine can feed
prefix-sum summaries through the same p-value code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import chi2_sf, f_sf, norm_cdf, norm_sf, t_cdf, t_sf


class Alternative(str, enum.Enum):
    TWO_SIDED = "two"
    LESS = "less"
    GREATER = "greater"

    @classmethod
    def parse(cls, value: "Alternative | str") -> "Alternative":
        if isinstance(value, Alternative):
            return value
        key = str(value).strip().lower()
        aliases = {
            "two": cls.TWO_SIDED, "two-sided": cls.TWO_SIDED, "two_sided": cls.TWO_SIDED,
            "less": cls.LESS, "l": cls.LESS, "<": cls.LESS,
            "greater": cls.GREATER, "g": cls.GREATER, ">": cls.GREATER,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown alternative {value!r}") from None

    def mirrored(self) -> "Alternative":
        if self is Alternative.LESS:
            return Alternative.GREATER
        if self is Alternative.GREATER:
            return Alternative.LESS
        return self


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    pvalue: float
    df: tuple[float, ...] | None = None
    alternative: Alternative = Alternative.TWO_SIDED
    stderr: float | None = None  # Monte Carlo standard error of pvalue, when calibrated


def _clip_p(p: float) -> float:
    if math.isnan(p):
        return p
    return min(1.0, max(0.0, p))


def _as_groups(groups: Sequence[Sequence[float]], min_size: int) -> list[np.ndarray]:
    arrays = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(arrays) < 2:
        raise ValueError("need at least two groups")
    for i, a in enumerate(arrays):
        if a.size < min_size:
            raise ValueError(f"group {i} has {a.size} values; at least {min_size} required")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"group {i} contains non-finite values")
    return arrays


def _as_sample(x: Sequence[float], min_size: int, label: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size < min_size:
        raise ValueError(f"sample {label} has {a.size} values; at least {min_size} required")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"sample {label} contains non-finite values")
    return a


def _group_summary(groups: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.array([g.size for g in groups], dtype=float)
    mean = np.array([g.mean() for g in groups])
    ss = np.array([np.sum((g - m) ** 2) for g, m in zip(groups, mean)])
    return n, mean, ss


# --------------------------------------------------------------------------
# ANOVA family


def anova_from_summary(n, mean, ss, name: str = "F1") -> TestResult:
    """Classical one-way ANOVA from group sizes, means and within-group sums of squares."""
    n = np.asarray(n, dtype=float)
    mean = np.asarray(mean, dtype=float)
    ss = np.asarray(ss, dtype=float)
    k = n.size
    total = n.sum()
    grand = float(np.dot(n, mean) / total)
    ssb = float(np.dot(n, (mean - grand) ** 2))
    ssw = float(ss.sum())
    df1, df2 = float(k - 1), float(total - k)
    if ssw <= 0.0:
        if ssb <= 1e-300:
            return TestResult(name, 0.0, 1.0, (df1, df2))
        return TestResult(name, math.inf, 0.0, (df1, df2))
    stat = (ssb / df1) / (ssw / df2)
    return TestResult(name, stat, _clip_p(f_sf(stat, df1, df2)), (df1, df2))


def one_way_anova_f(*groups: Sequence[float]) -> TestResult:
    """ANOVA F-test assuming equal variances."""
    arrays = _as_groups(groups, 2)
    return anova_from_summary(*_group_summary(arrays), name="F1")


def welch_anova_from_summary(n, mean, var, name: str = "F2") -> TestResult:
    n = np.asarray(n, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("Welch ANOVA requires every group variance to be positive")
    k = n.size
    w = n / var
    sw = w.sum()
    wmean = float(np.dot(w, mean) / sw)
    a = float(np.dot(w, (mean - wmean) ** 2)) / (k - 1)
    tmp = float(np.sum((1.0 - w / sw) ** 2 / (n - 1.0)))
    b = 1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * tmp
    stat = a / b
    df1 = float(k - 1)
    df2 = (k * k - 1.0) / (3.0 * tmp)
    return TestResult(name, stat, _clip_p(f_sf(stat, df1, df2)), (df1, df2))


def welch_anova(*groups: Sequence[float]) -> TestResult:
    """Welch's heteroscedastic one-way ANOVA (ANOVA without HOV)."""
    arrays = _as_groups(groups, 2)
    n, mean, ss = _group_summary(arrays)
    return welch_anova_from_summary(n, mean, ss / (n - 1.0))


def median(x: np.ndarray) -> float:
    """Median; the average of the two middle order statistics for even n."""
    return float(np.median(x))


def median_residuals(x: Sequence[float]) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return np.abs(a - median(a))


def brown_forsythe(*groups: Sequence[float]) -> TestResult:
    """Brown-Forsythe test of equal variances (ANOVA on |x - group median|)."""
    arrays = _as_groups(groups, 2)
    res = anova_from_summary(*_group_summary([median_residuals(g) for g in arrays]), name="BF")
    return res


# --------------------------------------------------------------------------
# rank tests


def midranks(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Ranks with ties given their average rank, plus the tie term sum(t^3 - t)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    boundaries = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    avg = 0.5 * (starts + ends + 1)  # mean of ranks start+1..end
    counts = ends - starts
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.repeat(avg, counts)
    t = counts.astype(float)
    return ranks, float(np.sum(t ** 3 - t))


def kruskal_from_ranksums(n, ranksum, tie_term: float, name: str = "KW") -> TestResult:
    n = np.asarray(n, dtype=float)
    ranksum = np.asarray(ranksum, dtype=float)
    total = n.sum()
    df = float(n.size - 1)
    correction = 1.0 - tie_term / (total ** 3 - total)
    if correction <= 0.0:
        return TestResult(name, 0.0, 1.0, (df,))
    h = 12.0 / (total * (total + 1.0)) * float(np.sum(ranksum ** 2 / n)) - 3.0 * (total + 1.0)
    h = max(h, 0.0) / correction
    return TestResult(name, h, _clip_p(chi2_sf(h, df)), (df,))


def kruskal_wallis(*groups: Sequence[float]) -> TestResult:
    """Kruskal-Wallis H test with midranks and tie correction."""
    arrays = _as_groups(groups, 1)
    n = np.array([a.size for a in arrays], dtype=float)
    if n.sum() < 3:
        raise ValueError("Kruskal-Wallis needs at least three observations in total")
    ranks, tie = midranks(np.concatenate(arrays))
    bounds = np.concatenate(([0], np.cumsum(n).astype(int)))
    rs = np.array([ranks[bounds[i]:bounds[i + 1]].sum() for i in range(len(arrays))])
    return kruskal_from_ranksums(n, rs, tie)


def wrs_from_ranksum(na: float, nb: float, ranksum_a: float, tie_term: float,
                     alternative: Alternative | str = Alternative.TWO_SIDED,
                     name: str = "WRS") -> TestResult:
    """Normal approximation to the rank-sum test with continuity correction."""
    alt = Alternative.parse(alternative)
    total = na + nb
    mu = na * (total + 1.0) / 2.0
    var = na * nb / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0))) if total > 1 else 0.0
    if var <= 0.0:
        return TestResult(name, 0.0, 1.0, None, alt)
    sd = math.sqrt(var)
    diff = ranksum_a - mu
    if alt is Alternative.LESS:
        z = (diff + 0.5) / sd
        p = norm_cdf(z)
    elif alt is Alternative.GREATER:
        z = (diff - 0.5) / sd
        p = norm_sf(z)
    else:
        z = math.copysign(max(abs(diff) - 0.5, 0.0), diff) / sd
        p = 2.0 * norm_sf(abs(z))
    return TestResult(name, z, _clip_p(p), None, alt)


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float],
                      alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Wilcoxon rank-sum test; the statistic is the continuity-corrected z."""
    xa = _as_sample(a, 1, "a")
    xb = _as_sample(b, 1, "b")
    ranks, tie = midranks(np.concatenate((xa, xb)))
    return wrs_from_ranksum(xa.size, xb.size, float(ranks[: xa.size].sum()), tie, alternative)


def rank_sum_z(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized rank sum of ``a`` against ``b`` without continuity correction."""
    xa = _as_sample(a, 1, "a")
    xb = _as_sample(b, 1, "b")
    ranks, tie = midranks(np.concatenate((xa, xb)))
    na, nb = float(xa.size), float(xb.size)
    total = na + nb
    var = na * nb / 12.0 * ((total + 1.0) - tie / (total * (total - 1.0)))
    if var <= 0.0:
        return 0.0
    return (float(ranks[: xa.size].sum()) - na * (total + 1.0) / 2.0) / math.sqrt(var)


# --------------------------------------------------------------------------
# t-tests


def welch_t_from_summary(na: float, mean_a: float, var_a: float,
                         nb: float, mean_b: float, var_b: float,
                         alternative: Alternative | str = Alternative.TWO_SIDED,
                         name: str = "t") -> TestResult:
    alt = Alternative.parse(alternative)
    if var_a <= 0.0 or var_b <= 0.0:
        raise ValueError("Welch t-test requires positive variance in both samples")
    va, vb = var_a / na, var_b / nb
    se2 = va + vb
    stat = (mean_a - mean_b) / math.sqrt(se2)
    df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    if alt is Alternative.LESS:
        p = t_cdf(stat, df)
    elif alt is Alternative.GREATER:
        p = t_sf(stat, df)
    else:
        p = 2.0 * t_sf(abs(stat), df)
    return TestResult(name, stat, _clip_p(p), (df,), alt)


def welch_t(a: Sequence[float], b: Sequence[float],
            alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Welch's unequal-variance t-test."""
    xa = _as_sample(a, 2, "a")
    xb = _as_sample(b, 2, "b")
    return welch_t_from_summary(xa.size, xa.mean(), xa.var(ddof=1),
                                xb.size, xb.mean(), xb.var(ddof=1), alternative)


def pooled_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Student's two-sample t-test with pooled variance (two-sided)."""
    xa = _as_sample(a, 2, "a")
    xb = _as_sample(b, 2, "b")
    na, nb = xa.size, xb.size
    sp2 = (np.sum((xa - xa.mean()) ** 2) + np.sum((xb - xb.mean()) ** 2)) / (na + nb - 2)
    stat = (xa.mean() - xb.mean()) / math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    df = float(na + nb - 2)
    return TestResult("pooled-t", stat, _clip_p(2.0 * t_sf(abs(stat), df)), (df,))


def brown_forsythe_pairwise(a: Sequence[float], b: Sequence[float],
                            alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Directional Brown-Forsythe: Welch t on absolute deviations from the medians.

    ``GREATER`` is the alternative Var(a) > Var(b).
    """
    xa = _as_sample(a, 2, "a")
    xb = _as_sample(b, 2, "b")
    res = welch_t(median_residuals(xa), median_residuals(xb), alternative)
    return TestResult("BF", res.statistic, res.pvalue, res.df, res.alternative)


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov and Lilliefors


def ks_statistics(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Return (sup(F_a - F_b), sup(F_b - F_a)) of the two empirical CDFs."""
    xa = np.sort(_as_sample(a, 1, "a"))
    xb = np.sort(_as_sample(b, 1, "b"))
    grid = np.concatenate((xa, xb))
    fa = np.searchsorted(xa, grid, side="right") / xa.size
    fb = np.searchsorted(xb, grid, side="right") / xb.size
    diff = fa - fb
    return max(float(diff.max()), 0.0), max(float(-diff.min()), 0.0)


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        # theta-function form; the alternating series converges poorly here
        s = 0.0
        j = 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * math.pi ** 2 / (8.0 * lam * lam))
            s += term
            if term < 1e-16 * max(s, 1e-300) or j > 100:
                break
            j += 1
        return _clip_p(1.0 - math.sqrt(2.0 * math.pi) / lam * s)
    s = 0.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        s += term if j % 2 else -term
        if term < 1e-12:
            break
        j += 1
    return _clip_p(2.0 * s)


def ks_two_sample(a: Sequence[float], b: Sequence[float],
                  alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with asymptotic p-values.

    ``LESS`` (first sample stochastically smaller) uses sup(F_a - F_b);
    ``GREATER`` uses sup(F_b - F_a).
    """
    alt = Alternative.parse(alternative)
    xa = _as_sample(a, 1, "a")
    xb = _as_sample(b, 1, "b")
    d_plus, d_minus = ks_statistics(xa, xb)
    n_eff = xa.size * xb.size / (xa.size + xb.size)
    if alt is Alternative.TWO_SIDED:
        d = max(d_plus, d_minus)
        p = kolmogorov_sf(math.sqrt(n_eff) * d)
    else:
        d = d_plus if alt is Alternative.LESS else d_minus
        p = math.exp(-2.0 * n_eff * d * d)
    return TestResult("KS", d, _clip_p(p), None, alt)


def _normal_ks_distance(sorted_z: np.ndarray) -> np.ndarray:
    """KS distance of standardized sorted rows against N(0, 1)."""
    from math import sqrt

    n = sorted_z.shape[-1]
    cdf = 0.5 * _erfc_array(-sorted_z / sqrt(2.0))
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf, axis=-1)
    d_minus = np.max(cdf - (i - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


def _erfc_array(x: np.ndarray) -> np.ndarray:
    return np.vectorize(math.erfc, otypes=[float])(x)


def lilliefors_statistic(x: Sequence[float]) -> float:
    a = _as_sample(x, 5, "x")
    sd = a.std(ddof=1)
    if sd <= 0.0:
        raise ValueError("Lilliefors test requires a non-constant sample")
    return float(_normal_ks_distance(np.sort((a - a.mean()) / sd)))


def lilliefors(x: Sequence[float], n_resamples: int = 2000, seed: int = 0,
               chunk_values: int = 2_000_000) -> TestResult:
    """Lilliefors normality test calibrated by seeded Monte Carlo.

    The null distribution of the statistic is simulated from standard normal
    samples of the same size; ``stderr`` is the binomial standard error of
    the Monte Carlo p-value.
    """
    a = _as_sample(x, 5, "x")
    d_obs = lilliefors_statistic(a)
    n = a.size
    rng = np.random.default_rng(seed)
    per_chunk = max(1, chunk_values // n)
    exceed = 0
    done = 0
    while done < n_resamples:
        m = min(per_chunk, n_resamples - done)
        sims = rng.standard_normal((m, n))
        sims = (sims - sims.mean(axis=1, keepdims=True)) / sims.std(axis=1, ddof=1, keepdims=True)
        sims.sort(axis=1)
        exceed += int(np.sum(_normal_ks_distance(sims) >= d_obs))
        done += m
    p = (exceed + 1.0) / (n_resamples + 1.0)
    se = math.sqrt(p * (1.0 - p) / n_resamples)
    return TestResult("Lilliefors", d_obs, p, None, Alternative.TWO_SIDED, stderr=se)


# --------------------------------------------------------------------------
# registries used by the sweep, Monte Carlo and CLI layers

MULTI_GROUP_TESTS = {
    "BF": brown_forsythe,
    "KW": kruskal_wallis,
    "F1": one_way_anova_f,
    "F2": welch_anova,
}

PAIRWISE_TESTS = {
    "BF": brown_forsythe_pairwise,
    "WRS": wilcoxon_rank_sum,
    "t": welch_t,
    "KS": ks_two_sample,
}


def canonical_test_name(name: str, pairwise: bool) -> str:
    table = PAIRWISE_TESTS if pairwise else MULTI_GROUP_TESTS
    for key in table:
        if key.lower() == name.strip().lower():
            return key
    kind = "pairwise" if pairwise else "multi-group"
    raise ValueError(f"unknown {kind} test {name!r}; choose from {', '.join(table)}")
