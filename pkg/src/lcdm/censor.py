"""Censoring sweeps: p-value curves over thresholds gamma = k * delta.

Two evaluation paths produce the same curves:

* the direct path censors each group at every threshold and calls the test
  functions in :mod:`lcdm.stats` (used for case-study data, so the last
  threshold reproduces the pooled p-value exactly);
* :class:`PrefixEngine` sorts each group once and reads every censored
  sample's sufficient statistics from prefix sums, which is what makes
  Monte Carlo censoring studies affordable.  Results agree with the direct
  path to rounding (about 1e-12).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import stats
from .correction import Method, adjust_with_gaps
from .dataset import CensorSpec, GroupPool
from .stats import Alternative

DEFAULT_GUARD = 10


@dataclass(frozen=True)
class RosterEntry:
    """One curve to compute: a test on all groups, or on an ordered pair."""

    test: str
    pair: tuple[int, int] | None = None
    alternative: Alternative = Alternative.TWO_SIDED

    def __post_init__(self) -> None:
        object.__setattr__(self, "test", stats.canonical_test_name(self.test, self.pair is not None))
        object.__setattr__(self, "alternative", Alternative.parse(self.alternative))
        if self.pair is None and self.alternative is not Alternative.TWO_SIDED:
            raise ValueError("directional alternatives need a pairwise test")
        if self.pair is not None:
            a, b = self.pair
            if a == b:
                raise ValueError("pairwise test needs two different groups")
            object.__setattr__(self, "pair", (int(a), int(b)))

    def label(self, names: Sequence[str] | None = None) -> str:
        if self.pair is None:
            return self.test
        a, b = self.pair
        na = names[a] if names else str(a)
        nb = names[b] if names else str(b)
        return f"{self.test}[{na},{nb}]"


@dataclass(frozen=True)
class SweepConfig:
    censor: CensorSpec = field(default_factory=CensorSpec)
    guard: int = DEFAULT_GUARD
    method: Method = Method.NONE

    def __post_init__(self) -> None:
        if self.guard < 2:
            raise ValueError("guard must be at least 2")
        object.__setattr__(self, "method", Method.parse(self.method))


@dataclass(frozen=True)
class PValueCurve:
    """p-values of one test across thresholds; NaN marks a MISSING threshold."""

    test: str
    alternative: Alternative
    gamma: np.ndarray
    p: np.ndarray
    counts: np.ndarray  # (n_thresholds, n_groups involved)
    groups: tuple[str, ...] = ()
    p_adjusted: np.ndarray | None = None
    method: Method = Method.NONE

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.p)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    extremum: float
    at: float


@dataclass(frozen=True)
class SignificanceRanges:
    threshold: float
    intervals: tuple[Interval, ...]


# --------------------------------------------------------------------------
# direct path


def _call_test(entry: RosterEntry, samples: Sequence[np.ndarray]) -> float:
    try:
        if entry.pair is None:
            return stats.MULTI_GROUP_TESTS[entry.test](*samples).pvalue
        a, b = samples
        return stats.PAIRWISE_TESTS[entry.test](a, b, entry.alternative).pvalue
    except (ValueError, ArithmeticError, ZeroDivisionError):
        return math.nan


def _involved(entry: RosterEntry, n_groups: int) -> tuple[int, ...]:
    if entry.pair is None:
        return tuple(range(n_groups))
    return entry.pair


def direct_curve(groups: Sequence[np.ndarray], entry: RosterEntry, gammas: np.ndarray,
                 guard: int = DEFAULT_GUARD) -> tuple[np.ndarray, np.ndarray]:
    """p-values at each threshold by censoring and testing from scratch."""
    idx = _involved(entry, len(groups))
    data = [np.asarray(groups[i], dtype=float) for i in idx]
    p = np.full(len(gammas), np.nan)
    counts = np.zeros((len(gammas), len(idx)), dtype=np.int64)
    prev_counts = None
    prev_p = math.nan
    for t, g in enumerate(gammas):
        cens = [d[d <= g] for d in data]
        c = tuple(x.size for x in cens)
        counts[t] = c
        if min(c) < guard:
            continue
        if c == prev_counts:
            p[t] = prev_p  # identical censored samples
            continue
        prev_counts = c
        prev_p = _call_test(entry, cens)
        p[t] = prev_p
    return p, counts


# --------------------------------------------------------------------------
# prefix-sum path


class _RankTable:
    """Midranks of the union of some groups, laid out per group in sorted order."""

    def __init__(self, sorted_groups: Sequence[np.ndarray]):
        allv = np.concatenate(sorted_groups)
        labels = np.concatenate([np.full(g.size, i) for i, g in enumerate(sorted_groups)])
        order = np.argsort(allv, kind="mergesort")
        self.values = allv[order]
        lab = labels[order]
        n = self.values.size
        boundaries = np.flatnonzero(np.diff(self.values)) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [n]))
        t = (ends - starts).astype(float)
        ranks = np.repeat(0.5 * (starts + ends + 1), ends - starts)
        # tie term of the prefix ending at each run end
        self.run_ends = ends
        self.tie_cum = np.cumsum(t ** 3 - t)
        self.rank_cum = []
        self.cum_counts = []
        for i in range(len(sorted_groups)):
            mine = lab == i
            self.rank_cum.append(np.concatenate(([0.0], np.cumsum(ranks[mine]))))
            self.cum_counts.append(np.cumsum(mine))

    def tie_term(self, prefix: int) -> float:
        # prefixes always end on a run boundary
        if prefix == 0:
            return 0.0
        j = np.searchsorted(self.run_ends, prefix)
        return float(self.tie_cum[j])


class PrefixEngine:
    """Censored-sample statistics for every threshold from one sort per group."""

    def __init__(self, groups: Sequence[np.ndarray]):
        self.groups = [np.sort(np.asarray(g, dtype=float).ravel()) for g in groups]
        allv = np.concatenate(self.groups)
        self.shift = float(np.median(allv)) if allv.size else 0.0
        self.cs = []
        self.cq = []
        for g in self.groups:
            c = g - self.shift
            self.cs.append(np.concatenate(([0.0], np.cumsum(c))))
            self.cq.append(np.concatenate(([0.0], np.cumsum(c * c))))
        self._ranks: dict[tuple[int, ...], _RankTable] = {}

    def counts(self, gammas: np.ndarray) -> np.ndarray:
        return np.stack([np.searchsorted(g, gammas, side="right") for g in self.groups], axis=1)

    def _rank_table(self, idx: tuple[int, ...]) -> _RankTable:
        if idx not in self._ranks:
            self._ranks[idx] = _RankTable([self.groups[i] for i in idx])
        return self._ranks[idx]

    # per-group summaries of a prefix of length m

    def _mean_ss(self, i: int, m: int) -> tuple[float, float]:
        s, q = self.cs[i][m], self.cq[i][m]
        mean = s / m
        return mean + self.shift, max(q - s * mean, 0.0)

    def _residual_summary(self, i: int, m: int) -> tuple[float, float]:
        """Mean and sum of squares of |x - median| over the first m sorted values."""
        g = self.groups[i]
        med = 0.5 * (g[(m - 1) // 2] + g[m // 2]) - self.shift
        split = int(np.searchsorted(g[:m], med + self.shift, side="right"))
        s_all, s_lo = self.cs[i][m], self.cs[i][split]
        abs_sum = med * split - s_lo + (s_all - s_lo) - med * (m - split)
        sq_sum = self.cq[i][m] - 2.0 * med * s_all + m * med * med
        mean = abs_sum / m
        return mean, max(sq_sum - abs_sum * mean, 0.0)

    def pvalue(self, entry: RosterEntry, m: Sequence[int]) -> float:
        idx = _involved(entry, len(self.groups))
        try:
            return self._pvalue(entry, idx, m)
        except (ValueError, ArithmeticError, ZeroDivisionError):
            return math.nan

    def _pvalue(self, entry: RosterEntry, idx: tuple[int, ...], m: Sequence[int]) -> float:
        test = entry.test
        n = np.array(m, dtype=float)
        if test in ("F1", "F2", "t", "BF"):
            if test == "BF":
                summ = [self._residual_summary(i, k) for i, k in zip(idx, m)]
            else:
                summ = [self._mean_ss(i, k) for i, k in zip(idx, m)]
            mean = np.array([s[0] for s in summ])
            ss = np.array([s[1] for s in summ])
            if entry.pair is None and test in ("F1", "BF"):
                return stats.anova_from_summary(n, mean, ss).pvalue
            if test == "F2":
                return stats.welch_anova_from_summary(n, mean, ss / (n - 1.0)).pvalue
            var = ss / (n - 1.0)
            return stats.welch_t_from_summary(n[0], mean[0], var[0], n[1], mean[1], var[1],
                                              entry.alternative).pvalue
        table = self._rank_table(idx)
        prefix = int(sum(m))
        tie = table.tie_term(prefix)
        rank_sums = np.array([table.rank_cum[j][k] for j, k in enumerate(m)])
        if test == "KW":
            return stats.kruskal_from_ranksums(n, rank_sums, tie).pvalue
        if test == "WRS":
            return stats.wrs_from_ranksum(n[0], n[1], rank_sums[0], tie, entry.alternative).pvalue
        if test == "KS":
            return self._ks(table, m, prefix, entry.alternative)
        raise ValueError(f"no prefix evaluation for test {test!r}")

    @staticmethod
    def _ks(table: _RankTable, m: Sequence[int], prefix: int, alternative: Alternative) -> float:
        # evaluate the empirical CDFs at the last element of each tie run
        ends = table.run_ends[table.run_ends <= prefix] - 1
        fa = table.cum_counts[0][ends] / m[0]
        fb = table.cum_counts[1][ends] / m[1]
        diff = fa - fb
        d_plus, d_minus = max(float(diff.max()), 0.0), max(float(-diff.min()), 0.0)
        n_eff = m[0] * m[1] / (m[0] + m[1])
        if alternative is Alternative.TWO_SIDED:
            return stats.kolmogorov_sf(math.sqrt(n_eff) * max(d_plus, d_minus))
        d = d_plus if alternative is Alternative.LESS else d_minus
        return min(1.0, math.exp(-2.0 * n_eff * d * d))

    def curve(self, entry: RosterEntry, gammas: np.ndarray,
              guard: int = DEFAULT_GUARD) -> tuple[np.ndarray, np.ndarray]:
        idx = _involved(entry, len(self.groups))
        counts = self.counts(gammas)[:, list(idx)]
        p = np.full(len(gammas), np.nan)
        prev = None
        prev_p = math.nan
        for t in range(len(gammas)):
            c = tuple(int(x) for x in counts[t])
            if min(c) < guard:
                continue
            if c != prev:
                prev, prev_p = c, self.pvalue(entry, c)
            p[t] = prev_p
        return p, counts


# --------------------------------------------------------------------------
# sweeps


def _as_arrays(pools: Sequence[GroupPool | np.ndarray]) -> tuple[list[np.ndarray], tuple[str, ...]]:
    arrays, names = [], []
    for i, pl in enumerate(pools):
        if isinstance(pl, GroupPool):
            arrays.append(pl.distances)
            names.append(pl.group)
        else:
            arrays.append(np.asarray(pl, dtype=float).ravel())
            names.append(f"group{i + 1}")
    return arrays, tuple(names)


def sweep(pools: Sequence[GroupPool | np.ndarray], cfg: SweepConfig,
          roster: Sequence[RosterEntry], fast: bool = False) -> list[PValueCurve]:
    """Evaluate every roster entry at every reported threshold."""
    if not roster:
        raise ValueError("empty test roster")
    arrays, names = _as_arrays(pools)
    if any(a.size == 0 for a in arrays):
        raise ValueError("every pool must be non-empty")
    gammas = cfg.censor.thresholds()
    engine = PrefixEngine(arrays) if fast else None
    curves = []
    for entry in roster:
        idx = _involved(entry, len(arrays))
        if max(idx) >= len(arrays):
            raise ValueError(f"roster entry {entry.label()} refers to a missing group")
        if engine is not None:
            p, counts = engine.curve(entry, gammas, cfg.guard)
        else:
            p, counts = direct_curve(arrays, entry, gammas, cfg.guard)
        curve = PValueCurve(entry.label(names), entry.alternative, gammas, p, counts,
                            tuple(names[i] for i in idx))
        curves.append(apply_correction(curve, cfg.method))
    return curves


def sweep_multigroup(pools: Sequence[GroupPool | np.ndarray], cfg: SweepConfig,
                     tests: Sequence[str] = ("BF", "KW"), fast: bool = False) -> list[PValueCurve]:
    if len(pools) < 2:
        raise ValueError("need at least two pools")
    return sweep(pools, cfg, [RosterEntry(t) for t in tests], fast)


def sweep_pairwise(a: GroupPool | np.ndarray, b: GroupPool | np.ndarray, cfg: SweepConfig,
                   alternatives: Sequence[Alternative | str] = (Alternative.TWO_SIDED,),
                   tests: Sequence[str] = ("BF", "WRS", "t", "KS"),
                   fast: bool = False) -> list[PValueCurve]:
    roster = [RosterEntry(t, (0, 1), alt) for t in tests for alt in alternatives]
    return sweep([a, b], cfg, roster, fast)


def apply_correction(curve: PValueCurve, method: Method | str) -> PValueCurve:
    """Adjust one curve across its thresholds; MISSING gaps split the family."""
    method = Method.parse(method)
    return replace(curve, p_adjusted=adjust_with_gaps(curve.p, method), method=method)


def extract_ranges(gamma: Sequence[float], values: Sequence[float], threshold: float,
                   above: bool = False) -> SignificanceRanges:
    """Maximal runs of thresholds where values < threshold (or > threshold if ``above``).

    NaN entries break runs.  Each interval carries its extremum (min p, or
    max rate) and the threshold where it occurs.
    """
    g = np.asarray(gamma, dtype=float)
    v = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore"):
        hit = (v > threshold) if above else (v < threshold)
    hit &= ~np.isnan(v)
    intervals = []
    idx = np.flatnonzero(hit)
    if idx.size:
        breaks = np.flatnonzero(np.diff(idx) > 1) + 1
        for run in np.split(idx, breaks):
            seg = v[run]
            j = run[int(np.argmax(seg) if above else np.argmin(seg))]
            intervals.append(Interval(float(g[run[0]]), float(g[run[-1]]), float(v[j]), float(g[j])))
    return SignificanceRanges(float(threshold), tuple(intervals))
