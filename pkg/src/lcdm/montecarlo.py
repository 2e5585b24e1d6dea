"""Monte Carlo estimation of empirical size, power and censoring-curve averages.

Replicate ``t`` draws its samples from the stream keyed by ``(seed, t)``, so
results do not depend on the number of worker processes or their schedule.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import stats
from .censor import DEFAULT_GUARD, PrefixEngine, RosterEntry
from .correction import Method, adjust_with_gaps
from .dataset import CensorSpec
from .distributions import norm_sf
from .simgen import AlternativeCase, case_params, replicate_rng
from .special import betaincc
from .stats import Alternative, TestResult

NAMES = ("X", "Y", "Z")


class Verdict(str, enum.Enum):
    CONSERVATIVE = "CONSERVATIVE"
    OK = "OK"
    LIBERAL = "LIBERAL"


class MonteCarloError(RuntimeError):
    """A replicate failed; the message names the replicate index."""


def nominal_band(n_mc: int, alpha: float = 0.05, z: float = 1.645) -> tuple[float, float]:
    """Rates inside alpha +/- z*sqrt(alpha(1-alpha)/n_mc) are not distinguishable from alpha.

    The default z = 1.645 reproduces the (.0464, .0536) band used for
    N_mc = 10000 at alpha = .05; pass z = 1.96 for the two-sided 95% band.
    """
    if n_mc < 30:
        raise ValueError("nominal band needs n_mc >= 30")
    half = z * math.sqrt(alpha * (1.0 - alpha) / n_mc)
    return max(0.0, alpha - half), min(1.0, alpha + half)


def upper_threshold(n_mc: int, alpha: float = 0.05, z: float = 1.645) -> float:
    """One-sided rate above which a test rejects more often than alpha."""
    return nominal_band(n_mc, alpha, z)[1]


def binomial_critical_rate(n_mc: int, alpha: float = 0.05, level: float = 0.05) -> float:
    """Exact one-sided cutoff: rates strictly above c/n_mc are significantly above alpha.

    c is the smallest count with P(Binomial(n_mc, alpha) > c) <= level; for
    n_mc = 1000 and alpha = level = .05 this gives .062.
    """
    for c in range(0, n_mc):
        # P(X > c) = P(X >= c + 1) = I_alpha(c + 1, n - c)
        if betaincc(n_mc - c, c + 1, 1.0 - alpha, alpha) <= level:
            return c / n_mc
    return 1.0


def verdict(rate: float, band: tuple[float, float]) -> Verdict:
    lo, hi = band
    if rate < lo:
        return Verdict.CONSERVATIVE
    if rate > hi:
        return Verdict.LIBERAL
    return Verdict.OK


def agreement_proportions(indicators) -> np.ndarray:
    """Entry (i, j) is the fraction of replicates where tests i and j both reject."""
    ind = np.asarray(indicators, dtype=float)
    if ind.ndim != 2:
        raise ValueError("indicators must be a (replicates, tests) matrix")
    return ind.T @ ind / ind.shape[0]


def two_proportion_test(p1: float, p2: float, n_mc: int, n_mc2: int | None = None) -> TestResult:
    """Pooled two-proportion z-test of equal rates, two-sided."""
    n1 = float(n_mc)
    n2 = float(n_mc if n_mc2 is None else n_mc2)
    pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var <= 0.0:
        return TestResult("two-proportion", 0.0, 1.0)
    z = (p1 - p2) / math.sqrt(var)
    return TestResult("two-proportion", z, min(1.0, 2.0 * norm_sf(abs(z))))


def rate_interval(rate: float, n_mc: int, z: float = 1.96) -> tuple[float, float]:
    half = z * math.sqrt(rate * (1.0 - rate) / n_mc)
    return max(0.0, rate - half), min(1.0, rate + half)


def default_pooled_roster(alternatives: Sequence[Alternative | str] = (Alternative.LESS,)) -> list[RosterEntry]:
    roster = [RosterEntry(t) for t in ("BF", "KW", "F1", "F2")]
    for pair in ((0, 1), (0, 2), (1, 2)):
        for test in ("BF", "WRS", "t", "KS"):
            for alt in alternatives:
                roster.append(RosterEntry(test, pair, alt))
    return roster


def default_censor_roster() -> list[RosterEntry]:
    roster = [RosterEntry("BF"), RosterEntry("KW")]
    for pair in ((0, 1), (0, 2), (1, 2)):
        for test in ("BF", "WRS"):
            roster.append(RosterEntry(test, pair, Alternative.LESS))
    return roster


@dataclass(frozen=True)
class MCConfig:
    case: AlternativeCase
    sizes: tuple[int, int, int] = (1000, 1000, 1000)
    n_mc: int = 2000
    alpha: float = 0.05
    roster: tuple[RosterEntry, ...] = field(default_factory=lambda: tuple(default_pooled_roster()))
    seed: int = 0
    censor: CensorSpec | None = None
    guard: int = DEFAULT_GUARD
    workers: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.case, str):
            object.__setattr__(self, "case", case_params(self.case))
        if self.n_mc < 1:
            raise ValueError("n_mc must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if len(self.sizes) != 3 or min(self.sizes) < 2:
            raise ValueError("need three sample sizes of at least 2")
        if not self.roster:
            raise ValueError("empty test roster")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "roster", tuple(self.roster))

    @property
    def labels(self) -> list[str]:
        out = []
        for e in self.roster:
            lab = e.label(NAMES)
            out.append(lab if e.pair is None else f"{lab}:{e.alternative.value}")
        return out


@dataclass(frozen=True)
class RejectionSummary:
    labels: tuple[str, ...]
    n_mc: int
    alpha: float
    pvalues: np.ndarray  # (n_mc, n_tests)
    band: tuple[float, float]

    @property
    def indicators(self) -> np.ndarray:
        return self.pvalues < self.alpha

    @property
    def rates(self) -> np.ndarray:
        return self.indicators.mean(axis=0)

    @property
    def agreement(self) -> np.ndarray:
        return agreement_proportions(self.indicators)

    def rate(self, label: str) -> float:
        return float(self.rates[self.labels.index(label)])

    def agreement_of(self, a: str, b: str) -> float:
        return float(self.agreement[self.labels.index(a), self.labels.index(b)])

    def intervals(self) -> list[tuple[float, float]]:
        return [rate_interval(float(r), self.n_mc) for r in self.rates]

    def verdicts(self) -> list[Verdict]:
        return [verdict(float(r), self.band) for r in self.rates]


def _pooled_pvalue(entry: RosterEntry, samples: Sequence[np.ndarray]) -> float:
    if entry.pair is None:
        return stats.MULTI_GROUP_TESTS[entry.test](*samples).pvalue
    a, b = entry.pair
    return stats.PAIRWISE_TESTS[entry.test](samples[a], samples[b], entry.alternative).pvalue


def _size_power_chunk(cfg: MCConfig, indices: Sequence[int]) -> np.ndarray:
    out = np.empty((len(indices), len(cfg.roster)))
    for row, t in enumerate(indices):
        try:
            samples = cfg.case.sample(cfg.sizes, replicate_rng(cfg.seed, t))
            out[row] = [_pooled_pvalue(e, samples) for e in cfg.roster]
        except (ValueError, ArithmeticError) as exc:
            raise MonteCarloError(f"replicate {t}: {exc}") from exc
    return out


def _censor_chunk(cfg: MCConfig, indices: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    gammas = cfg.censor.thresholds()
    out = np.empty((len(indices), len(cfg.roster), len(gammas)))
    counts = np.empty((len(indices), len(gammas), 3), dtype=np.int64)
    for row, t in enumerate(indices):
        try:
            samples = cfg.case.sample(cfg.sizes, replicate_rng(cfg.seed, t))
            engine = PrefixEngine(samples)
            counts[row] = engine.counts(gammas)
            for j, e in enumerate(cfg.roster):
                out[row, j] = engine.curve(e, gammas, cfg.guard)[0]
        except (ValueError, ArithmeticError) as exc:
            raise MonteCarloError(f"replicate {t}: {exc}") from exc
    return out, counts


def _run_chunks(func, cfg: MCConfig) -> list:
    indices = np.arange(cfg.n_mc)
    if cfg.workers <= 1:
        return [func(cfg, indices)]
    chunks = np.array_split(indices, cfg.workers * 4)
    chunks = [c for c in chunks if c.size]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(func, [cfg] * len(chunks), chunks))


def run_size_power(cfg: MCConfig, band_z: float = 1.645) -> RejectionSummary:
    """Rejection rates of the roster on pooled (uncensored) samples."""
    if cfg.censor is not None:
        raise ValueError("run_size_power takes a configuration without censoring")
    pvals = np.concatenate(_run_chunks(_size_power_chunk, cfg), axis=0)
    return RejectionSummary(tuple(cfg.labels), cfg.n_mc, cfg.alpha, pvals,
                            nominal_band(max(cfg.n_mc, 30), cfg.alpha, band_z))


@dataclass(frozen=True)
class CensorMCResult:
    labels: tuple[str, ...]
    gamma: np.ndarray
    alpha: float
    pvalues: np.ndarray  # (n_mc, n_tests, n_thresholds), NaN = MISSING
    mean_counts: np.ndarray | None = None  # (n_thresholds, n_groups) average censored sizes

    @property
    def n_mc(self) -> int:
        return self.pvalues.shape[0]

    @property
    def coverage(self) -> np.ndarray:
        """Replicates with a p-value at each (test, threshold)."""
        return np.sum(~np.isnan(self.pvalues), axis=0)

    def _masked_mean(self, values: np.ndarray) -> np.ndarray:
        cov = np.sum(~np.isnan(values), axis=0)
        total = np.nansum(values, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cov > 0, total / np.maximum(cov, 1), np.nan)

    def mean_p(self) -> np.ndarray:
        return self._masked_mean(self.pvalues)

    def band(self, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
        """mean +/- z * SD / sqrt(coverage), clamped to [0, 1]."""
        mean = self.mean_p()
        cov = self.coverage
        with warnings.catch_warnings(), np.errstate(invalid="ignore", divide="ignore"):
            warnings.simplefilter("ignore", RuntimeWarning)
            sd = np.where(cov > 1, np.nanstd(self.pvalues, axis=0, ddof=1), 0.0)
            half = z * sd / np.sqrt(np.maximum(cov, 1))
        return np.clip(mean - half, 0.0, 1.0), np.clip(mean + half, 0.0, 1.0)

    def rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            rej = np.where(np.isnan(self.pvalues), np.nan, (self.pvalues < self.alpha).astype(float))
        return self._masked_mean(rej)

    def adjusted(self, method: Method | str) -> np.ndarray:
        """Per-replicate corrected curves, each curve its own family."""
        out = np.empty_like(self.pvalues)
        for t in range(self.pvalues.shape[0]):
            for j in range(self.pvalues.shape[1]):
                out[t, j] = adjust_with_gaps(self.pvalues[t, j], method)
        return out

    def mean_adjusted(self, method: Method | str) -> np.ndarray:
        return self._masked_mean(self.adjusted(method))

    def curve_index(self, label: str) -> int:
        return self.labels.index(label)


def run_censor_mc(cfg: MCConfig) -> CensorMCResult:
    """Per-replicate censoring curves for every roster entry."""
    if cfg.censor is None:
        raise ValueError("run_censor_mc needs a CensorSpec")
    parts = _run_chunks(_censor_chunk, cfg)
    pvals = np.concatenate([p for p, _ in parts], axis=0)
    counts = np.concatenate([c for _, c in parts], axis=0)
    return CensorMCResult(tuple(cfg.labels), cfg.censor.thresholds(), cfg.alpha, pvals,
                          counts.mean(axis=0))
