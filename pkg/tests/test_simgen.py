import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given
from hypothesis import strategies as st

from lcdm.simgen import (CASE_IDS, V_EXP, V_O, BinnedSpec, ExponentialSpec, NormalSpec, case_params,
                         gen_binned, gen_exponential, gen_normal, parse_generator_spec, pmf_from_freq,
                         replicate_rng)

# printed with a total of 11659 rather than sum(V_O) = 11682, and entry 4 reads .126 for 1492/11682 = .128
PRINTED_NULL_PMF = (.177, .163, .151, .143, .126, .109, .070, .036, .012, .007, .005, .001, 0.0)
PRINTED_ETA50_PMF = (.171, .158, .146, .138, .121, .104, .065, .051, .031, .008, .003, .003, .001)


class TestPmf:
    def test_null_pmf_matches_printed(self):
        pmf = pmf_from_freq(V_O, 0)
        np.testing.assert_allclose(pmf, PRINTED_NULL_PMF, atol=0.0025)
        np.testing.assert_allclose(pmf[:12], np.array(V_O) / sum(V_O), atol=0)
        assert pmf[12] == 0.0

    def test_eta50_matches_printed(self):
        np.testing.assert_allclose(pmf_from_freq(V_O, 50), PRINTED_ETA50_PMF, atol=0.0025)

    def test_eta_bounds(self):
        with pytest.raises(ValueError):
            pmf_from_freq(V_O, -1)
        with pytest.raises(ValueError):
            pmf_from_freq(V_O[:11], 0)

    @given(st.integers(0, 1000), st.sampled_from([V_O, V_EXP]))
    def test_valid_probability_vector(self, eta, freq):
        pmf = pmf_from_freq(freq, eta)
        assert pmf.shape == (13,)
        assert np.all(pmf >= 0)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_tail_mass_increases_with_eta(self):
        tails = [pmf_from_freq(V_O, eta)[7:].sum() for eta in (0, 10, 30, 50, 100)]
        assert np.all(np.diff(tails) > 0)

    def test_mean_and_variance_increase_with_eta(self):
        bins = np.arange(13)
        stats = []
        for eta in (0, 10, 30, 50):
            p = pmf_from_freq(V_O, eta)
            mean = p @ bins
            stats.append((mean, p @ (bins - mean) ** 2))
        means, variances = np.array(stats).T
        assert np.all(np.diff(means) > 0) and np.all(np.diff(variances) > 0)


class TestBinnedGenerator:
    def test_support_and_bin_frequencies(self, rng):
        n = 100_000
        pmf = pmf_from_freq(V_O, 0)
        d = gen_binned(n, pmf, 1.0, rng)
        assert d.min() >= 0 and d.max() < 6
        freq = np.bincount(np.floor(2 * d).astype(int), minlength=13) / n
        assert np.all(np.abs(freq - pmf) <= 3 * np.sqrt(pmf * (1 - pmf) / n) + 1e-15)

    def test_chi_square_goodness_of_fit(self, rng):
        n = 100_000
        pmf = pmf_from_freq(V_O, 0)[:12]
        d = gen_binned(n, np.append(pmf, 0.0), 1.0, rng)
        # quarter-bins: piecewise-uniform density puts pmf_j / 2 in each half of bin j
        counts = np.bincount(np.floor(4 * d).astype(int), minlength=24)
        expected = np.repeat(pmf / 2, 2) * n
        assert ss.chisquare(counts, expected).pvalue > 0.01

    def test_shape(self, rng):
        d = gen_binned(10_000, pmf_from_freq(V_O, 0), 1.0, rng)
        assert 1.55 <= d.mean() <= 1.75
        assert np.median(d) < d.mean()

    def test_wider_spread_with_r(self, rng):
        d = gen_binned(10_000, pmf_from_freq(V_O, 0), 1.2, rng)
        assert d.max() < (12 + 1.2) / 2
        assert d.max() > 6.0 - 0.5

    def test_deterministic(self):
        a = gen_binned(100, pmf_from_freq(V_O, 0), 1.0, np.random.default_rng(3))
        b = gen_binned(100, pmf_from_freq(V_O, 0), 1.0, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_invalid(self, rng):
        with pytest.raises(ValueError):
            gen_binned(10, pmf_from_freq(V_O), 0.9, rng)
        with pytest.raises(ValueError):
            BinnedSpec(V_O, 0, 2.5)


class TestParametricGenerators:
    def test_exponential_range(self, rng):
        x = gen_exponential(10_000, 1.0, rng)
        frac = np.mean((x > 0) & (x < 5.5))
        assert frac == pytest.approx(1 - np.exp(-5.5), abs=0.005)
        assert frac == pytest.approx(0.996, abs=0.005)

    def test_normal_mean(self, rng):
        n = 10_000
        x = gen_normal(n, 3.35, 2.28, rng)
        assert abs(x.mean() - 3.35) < 3 * 2.28 / np.sqrt(n)

    def test_invalid(self, rng):
        with pytest.raises(ValueError):
            gen_normal(10, 0.0, 0.0, rng)
        with pytest.raises(ValueError):
            gen_exponential(10, -1.0, rng)

    def test_reproducible(self):
        assert np.array_equal(gen_normal(5, 0, 1, np.random.default_rng(1)),
                              gen_normal(5, 0, 1, np.random.default_rng(1)))


class TestCatalog:
    def test_l2(self):
        c = case_params("L2")
        assert (c.y.r, c.z.r, c.y.eta, c.z.eta) == (1.1, 1.2, 0, 0)
        assert c.x == BinnedSpec(V_O, 0, 1.0)

    def test_n4(self):
        c = case_params("N4")
        assert tuple(s.mu for s in c.specs) == (3.35, 3.39, 3.42)
        assert tuple(s.sigma for s in c.specs) == (2.28, 2.33, 2.37)

    def test_null_n(self):
        c = case_params("NULL_N")
        assert all(s == NormalSpec(3.35, 2.28) for s in c.specs)

    def test_exponential_cases_use_binned_construction(self):
        assert all(s == ExponentialSpec(1.0) for s in case_params("NULL_E").specs)
        e2 = case_params("E2")
        assert e2.x == BinnedSpec(V_EXP, 0, 1.0)
        assert (e2.y.r, e2.z.r) == (1.1, 1.2)

    def test_every_id_resolves(self):
        assert len(CASE_IDS) == 18
        for cid in CASE_IDS:
            assert case_params(cid).case_id == cid
        assert case_params("l5").case_id == "L5"

    def test_unknown(self):
        for bad in ("L6", "N", "Q1", "NULL_Q"):
            with pytest.raises(KeyError):
                case_params(bad)


class TestSpecParsing:
    def test_binned(self):
        spec = parse_generator_spec({"family": "binned", "freq": "v_o", "eta": "50", "r": "1.0"})
        assert spec == BinnedSpec(V_O, 50, 1.0)

    def test_custom_freq(self):
        spec = parse_generator_spec({"family": "binned", "freq": ",".join(str(v) for v in V_EXP)})
        assert spec.freq == V_EXP

    def test_others(self):
        assert parse_generator_spec({"family": "normal", "mu": "1", "sigma": "2"}) == NormalSpec(1.0, 2.0)
        assert parse_generator_spec({"family": "exponential", "lambda": "2"}) == ExponentialSpec(2.0)
        with pytest.raises(ValueError):
            parse_generator_spec({"family": "gamma"})


class TestReplicateStreams:
    def test_independent_of_order(self):
        a = [replicate_rng(11, t).random() for t in range(5)]
        b = [replicate_rng(11, t).random() for t in reversed(range(5))][::-1]
        assert a == b
        assert len(set(a)) == 5

    def test_case_sampling_deterministic(self):
        c = case_params("L5")
        s1 = c.sample((50, 60, 70), replicate_rng(1, 2))
        s2 = c.sample((50, 60, 70), replicate_rng(1, 2))
        assert [len(s) for s in s1] == [50, 60, 70]
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a, b)
