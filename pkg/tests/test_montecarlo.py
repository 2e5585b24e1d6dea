import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given
from hypothesis import strategies as st

from lcdm.censor import RosterEntry
from lcdm.dataset import CensorSpec
from lcdm.montecarlo import (CensorMCResult, MCConfig, MonteCarloError, Verdict, agreement_proportions,
                             binomial_critical_rate, default_censor_roster, default_pooled_roster,
                             nominal_band, rate_interval, run_censor_mc, run_size_power,
                             two_proportion_test, upper_threshold, verdict)

MULTI = tuple(RosterEntry(t) for t in ("BF", "KW", "F1", "F2"))


class TestBands:
    def test_nominal_band_default(self):
        lo, hi = nominal_band(10_000, 0.05)
        assert (round(lo, 4), round(hi, 4)) == (0.0464, 0.0536)

    def test_nominal_band_two_sided(self):
        lo, hi = nominal_band(10_000, 0.5, z=1.96)
        assert lo == pytest.approx(0.4902, abs=1e-12) and hi == pytest.approx(0.5098, abs=1e-12)

    def test_clamped(self):
        assert nominal_band(30, 0.001)[0] == 0.0

    def test_too_few(self):
        with pytest.raises(ValueError):
            nominal_band(10)

    def test_one_sided_threshold(self):
        assert upper_threshold(1000) == pytest.approx(0.05 + 1.645 * math.sqrt(0.05 * 0.95 / 1000))

    def test_binomial_critical_rate(self):
        assert binomial_critical_rate(1000) == 0.062
        # oracle: smallest c with P(X > c) <= .05
        c = int(ss.binom.isf(0.05, 1000, 0.05))
        while ss.binom.sf(c, 1000, 0.05) > 0.05:
            c += 1
        while c > 0 and ss.binom.sf(c - 1, 1000, 0.05) <= 0.05:
            c -= 1
        assert binomial_critical_rate(1000) == c / 1000
        assert binomial_critical_rate(10_000) == pytest.approx(0.0536)

    def test_verdict(self):
        band = (0.0464, 0.0536)
        assert verdict(0.05, band) is Verdict.OK
        assert verdict(0.04, band) is Verdict.CONSERVATIVE
        assert verdict(0.06, band) is Verdict.LIBERAL

    def test_rate_interval(self):
        lo, hi = rate_interval(0.5, 10_000)
        assert hi - lo == pytest.approx(2 * 0.0098, abs=1e-4)


class TestAgreement:
    def test_identical_columns(self):
        col = np.array([1, 0, 1, 0, 0], dtype=bool)
        a = agreement_proportions(np.stack([col, col], axis=1))
        np.testing.assert_allclose(a, 0.4)

    def test_disjoint(self):
        ind = np.array([[1, 0], [0, 1], [0, 0]], dtype=bool)
        assert agreement_proportions(ind)[0, 1] == 0.0

    @given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()), min_size=1, max_size=50))
    def test_bounded_by_rates(self, rows):
        ind = np.array(rows, dtype=bool)
        a = agreement_proportions(ind)
        rates = ind.mean(axis=0)
        assert np.all(a <= np.minimum.outer(rates, rates) + 1e-15)
        np.testing.assert_allclose(np.diag(a), rates)


class TestTwoProportion:
    def test_equal(self):
        r = two_proportion_test(0.3, 0.3, 500)
        assert r.statistic == 0.0 and r.pvalue == pytest.approx(1.0)

    def test_hand_value(self):
        r = two_proportion_test(0.39, 0.35, 10_000)
        assert r.statistic == pytest.approx(0.04 / math.sqrt(0.37 * 0.63 * 2 / 10_000))
        assert r.statistic == pytest.approx(5.86, abs=0.01)
        assert r.pvalue < 1e-4

    def test_symmetric(self):
        assert two_proportion_test(0.2, 0.3, 400).pvalue == pytest.approx(two_proportion_test(0.3, 0.2, 400).pvalue)

    def test_degenerate(self):
        assert two_proportion_test(0.0, 0.0, 100).pvalue == 1.0
        assert two_proportion_test(1.0, 1.0, 100).pvalue == 1.0

    def test_matches_statsmodels(self):
        from statsmodels.stats.proportion import proportions_ztest

        z, p = proportions_ztest([120, 150], [1000, 1000])
        r = two_proportion_test(0.12, 0.15, 1000)
        assert r.statistic == pytest.approx(z) and r.pvalue == pytest.approx(p)


class TestSizePower:
    def test_duplicate_entry_self_agreement(self):
        roster = (RosterEntry("KW"), RosterEntry("KW"))
        s = run_size_power(MCConfig("NULL_L", (200, 200, 200), 200, roster=roster, seed=1))
        assert s.agreement_of("KW", "KW") == s.rate("KW")
        assert s.agreement[0, 1] == s.rates[0]

    def test_deterministic_across_workers(self):
        base = dict(case="L3", sizes=(150, 150, 150), n_mc=40, seed=9)
        one = run_size_power(MCConfig(**base, workers=1))
        two = run_size_power(MCConfig(**base, workers=2))
        np.testing.assert_array_equal(one.pvalues, two.pvalues)

    def test_default_roster_labels(self):
        cfg = MCConfig("NULL_L", n_mc=10)
        assert cfg.labels[:4] == ["BF", "KW", "F1", "F2"]
        assert "WRS[Y,Z]:less" in cfg.labels and "KS[X,Y]:less" in cfg.labels
        assert len(default_pooled_roster()) == 16

    def test_structural_agreement_bound(self):
        s = run_size_power(MCConfig("L2", (300, 300, 300), 100, seed=2))
        rates = s.rates
        assert np.all(s.agreement <= np.minimum.outer(rates, rates) + 1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            MCConfig("NULL_L", n_mc=0)
        with pytest.raises(KeyError):
            MCConfig("L9")
        with pytest.raises(ValueError):
            run_size_power(MCConfig("NULL_L", n_mc=5, censor=CensorSpec()))

    def test_replicate_failure_is_reported(self, monkeypatch):
        from lcdm import stats

        def broken(*groups):
            raise ValueError("boom")

        monkeypatch.setitem(stats.MULTI_GROUP_TESTS, "KW", broken)
        cfg = MCConfig("NULL_L", (20, 20, 20), 3, roster=(RosterEntry("KW"),))
        with pytest.raises(MonteCarloError, match="replicate 0: boom"):
            run_size_power(cfg)

    @pytest.mark.slow
    @pytest.mark.parametrize("case", ["NULL_L", "NULL_N", "NULL_E"])
    def test_null_rates_inside_band(self, case):
        rows = [(1000, 1000, 1000), (500, 500, 1000), (500, 750, 1000),
                (1000, 1000, 2000), (750, 750, 750), (600, 800, 1000)]
        n_mc = 1000
        band = nominal_band(n_mc, 0.05, z=1.96)
        outside = np.zeros(len(MULTI), dtype=int)
        for i, sizes in enumerate(rows):
            s = run_size_power(MCConfig(case, sizes, n_mc, roster=MULTI, seed=100 + i))
            outside += (s.rates < band[0]) | (s.rates > band[1])
        assert np.all(outside <= 1), dict(zip(("BF", "KW", "F1", "F2"), outside))


class TestCensorMC:
    def test_band_zero_width_for_constant_p(self):
        p = np.full((20, 1, 5), 0.3)
        res = CensorMCResult(("BF",), np.arange(5) * 0.1, 0.05, p)
        lo, hi = res.band()
        np.testing.assert_allclose(lo, 0.3)
        np.testing.assert_allclose(hi, 0.3)
        np.testing.assert_array_equal(res.coverage, 20)

    def test_missing_excluded(self):
        p = np.array([[[0.01, np.nan]], [[0.5, 0.2]]])
        res = CensorMCResult(("BF",), np.array([0.0, 0.1]), 0.05, p)
        np.testing.assert_allclose(res.mean_p()[0], [0.255, 0.2])
        np.testing.assert_allclose(res.rate()[0], [0.5, 0.0])
        np.testing.assert_array_equal(res.coverage[0], [2, 1])

    def test_band_formula(self, rng):
        p = rng.uniform(size=(50, 1, 3))
        res = CensorMCResult(("KW",), np.arange(3.0), 0.05, p)
        lo, hi = res.band()
        half = 1.96 * p.std(axis=0, ddof=1) / math.sqrt(50)
        np.testing.assert_allclose(hi - lo, np.minimum(p.mean(axis=0) + half, 1) - np.maximum(p.mean(axis=0) - half, 0))

    def test_adjusted_per_replicate(self):
        p = np.full((2, 1, 4), 0.01)
        res = CensorMCResult(("BF",), np.arange(4.0), 0.05, p)
        np.testing.assert_allclose(res.mean_adjusted("bonferroni"), 0.04)

    def test_deterministic_across_workers(self):
        spec = CensorSpec(0.25, 7.0, 0.0)
        base = dict(case="L5", sizes=(300, 300, 300), n_mc=12, seed=4, censor=spec,
                    roster=tuple(default_censor_roster()))
        a = run_censor_mc(MCConfig(**base, workers=1))
        b = run_censor_mc(MCConfig(**base, workers=2))
        np.testing.assert_array_equal(a.pvalues, b.pvalues)
        assert a.labels[0] == "BF" and a.pvalues.shape == (12, 8, spec.thresholds().size)

    def test_null_average_p(self):
        spec = CensorSpec(0.1, 7.0, 0.0)
        res = run_censor_mc(MCConfig("NULL_L", (2000, 2000, 2000), 100, seed=3, censor=spec,
                                     roster=(RosterEntry("BF"),)))
        ok = res.coverage[0] == 100
        assert 0.4 <= np.mean(res.mean_p()[0][ok]) <= 0.6
        assert 0.02 <= np.mean(res.rate()[0][ok]) <= 0.08

    def test_needs_censor_spec(self):
        with pytest.raises(ValueError):
            run_censor_mc(MCConfig("NULL_L", n_mc=2))
