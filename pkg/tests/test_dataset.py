import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcdm.dataset import (CensorSpec, GroupPool, Hemisphere, SubjectDistances, censor_at, descriptives,
                          histogram, kde, pool, pools_by_group, silverman_bandwidth, subject_vs_group_wrs,
                          trim, trim_subject)

dists = st.lists(st.floats(-2, 8, allow_nan=False), max_size=40)


def subj(sid, group, values, hemi="left"):
    return SubjectDistances(sid, group, hemi, np.asarray(values, dtype=float))


class TestTrim:
    def test_boundary_rule(self):
        r = trim([-0.6, -0.5, 0.2, 5.5, 5.6], -0.5, 5.5)
        assert r.kept.tolist() == [0.2, 5.5]
        assert (r.below, r.above) == (2, 1)
        assert r.frac_below == pytest.approx(0.4) and r.frac_above == pytest.approx(0.2)

    def test_identity_inside_window(self):
        assert trim([0.1, 1.0, 5.0]).kept.tolist() == [0.1, 1.0, 5.0]

    def test_empty(self):
        r = trim([])
        assert r.kept.size == 0 and r.total == 0 and r.frac_below == 0.0

    def test_bad_window(self):
        with pytest.raises(ValueError):
            trim([1.0], 2.0, 1.0)

    @given(st.lists(dists, min_size=1, max_size=5))
    def test_commutes_with_pooling(self, lists):
        subs = [subj(f"s{i}", "g", v) for i, v in enumerate(lists)]
        a = pool([trim_subject(s) for s in subs]).distances
        b = trim(pool(subs).distances).kept
        np.testing.assert_array_equal(a, b)


class TestPool:
    def test_single_subject(self):
        np.testing.assert_array_equal(pool([subj("a", "X", [1, 2])]).distances, [1, 2])

    def test_union(self):
        p = pool([subj("a", "X", [1, 2]), subj("b", "X", [3])])
        assert sorted(p.distances) == [1, 2, 3]
        assert p.subjects == ("a", "b")

    def test_sizes_add(self):
        p = pool([subj("a", "X", [1] * 3), subj("b", "X", [2] * 5), subj("c", "X", [3] * 7)])
        assert len(p) == 15

    def test_mixed_group_rejected(self):
        with pytest.raises(ValueError):
            pool([subj("a", "X", [1]), subj("b", "Y", [2])])

    def test_mixed_hemisphere_rejected(self):
        with pytest.raises(ValueError):
            pool([subj("a", "X", [1], "left"), subj("b", "X", [2], "right")])

    def test_pools_by_group_order(self):
        subs = [subj("a", "Y", [1]), subj("b", "X", [2]), subj("c", "Y", [3])]
        assert [p.group for p in pools_by_group(subs)] == ["Y", "X"]
        assert [p.group for p in pools_by_group(subs, ["X", "Y"])] == ["X", "Y"]
        with pytest.raises(ValueError):
            pools_by_group(subs, ["Z"])

    def test_hemisphere_parse(self):
        assert Hemisphere.parse("L") is Hemisphere.LEFT
        with pytest.raises(ValueError):
            Hemisphere.parse("up")


class TestCensor:
    def test_inclusive_boundary(self):
        assert censor_at(np.array([0.2, 1.0, 1.01]), 1.0).tolist() == [0.2, 1.0]

    def test_extremes(self):
        d = np.array([0.5, 1.5, 2.5])
        assert censor_at(d, 3.0).tolist() == d.tolist()
        assert censor_at(d, 0.1).size == 0
        assert censor_at(GroupPool("g", d), 1.5).tolist() == [0.5, 1.5]

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            censor_at(np.array([1.0]), -0.1)

    @given(dists, st.floats(0, 8), st.floats(0, 8))
    def test_idempotent_and_monotone(self, d, g1, g2):
        d = np.array(d)
        once = censor_at(d, g1)
        np.testing.assert_array_equal(censor_at(once, g1), once)
        lo, hi = sorted((g1, g2))
        assert set(censor_at(d, lo)) <= set(censor_at(d, hi))

    def test_counts_nondecreasing_on_grid(self, rng):
        d = rng.exponential(1.5, 2000)
        sizes = [censor_at(d, g).size for g in CensorSpec().all_thresholds()]
        assert np.all(np.diff(sizes) >= 0)


class TestCensorSpec:
    def test_grid(self):
        spec = CensorSpec(delta=0.5, d_max=2.0, analysis_lo=0.5)
        np.testing.assert_allclose(spec.all_thresholds(), [0, 0.5, 1.0, 1.5, 2.0])
        np.testing.assert_allclose(spec.thresholds(), [0.5, 1.0, 1.5, 2.0])

    def test_default_count(self):
        spec = CensorSpec()
        assert spec.all_thresholds().size == 551
        assert spec.thresholds()[0] == pytest.approx(0.5)

    def test_voxel_size_bounds(self):
        CensorSpec(delta=0.1, voxel_size=1.0)
        CensorSpec(delta=1.0, voxel_size=1.0)
        with pytest.raises(ValueError):
            CensorSpec(delta=0.05, voxel_size=1.0)
        with pytest.raises(ValueError):
            CensorSpec(delta=1.5, voxel_size=1.0)
        with pytest.raises(ValueError):
            CensorSpec(delta=0.0)


class TestDescriptives:
    def test_small(self):
        s = descriptives(np.array([1.0, 2.0, 3.0]))
        assert (s.n, s.mean, s.median, s.sd) == (3, 2.0, 2.0, 1.0)
        assert descriptives(np.array([1.0, 2, 3, 4])).median == 2.5

    def test_empty(self):
        with pytest.raises(ValueError):
            descriptives(np.array([]))

    def test_matches_single_pass_oracle(self, rng):
        x = rng.gamma(2.0, 0.8, 50_001) + 1e3
        # Welford's update as the independent oracle
        n, mean, m2 = 0, 0.0, 0.0
        for v in x.tolist():
            n += 1
            delta = v - mean
            mean += delta / n
            m2 += delta * (v - mean)
        s = descriptives(x)
        assert s.mean == pytest.approx(mean, rel=1e-10)
        assert s.sd == pytest.approx(math.sqrt(m2 / (n - 1)), rel=1e-10)
        assert s.median == sorted(x.tolist())[n // 2]


class TestKde:
    def test_standard_normal(self, rng):
        x = rng.standard_normal(10_000)
        grid, dens = kde(x)
        bw = silverman_bandwidth(x)
        assert grid[0] == pytest.approx(x.min() - 3 * bw) and grid[-1] == pytest.approx(x.max() + 3 * bw)
        assert np.interp(0.0, grid, dens) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=0.05)
        assert np.all(dens >= 0)
        integral = float(np.sum((dens[1:] + dens[:-1]) * np.diff(grid)) / 2)
        assert integral == pytest.approx(1.0, abs=0.02)

    def test_silverman_rule(self, rng):
        x = rng.normal(size=500)
        q75, q25 = np.percentile(x, [75, 25])
        expected = 0.9 * min(x.std(ddof=1), (q75 - q25) / 1.34) * 500 ** -0.2
        assert silverman_bandwidth(x) == pytest.approx(expected)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            kde([2.0] * 10)
        with pytest.raises(ValueError):
            kde([1.0, 2.0], bandwidth=0.0)

    def test_histogram(self):
        lo, hi, counts = histogram([0.1, 0.2, 0.6, 1.4], 0.5)
        assert lo.tolist() == [0.0, 0.5, 1.0]
        assert hi.tolist() == [0.5, 1.0, 1.5]
        assert counts.tolist() == [2, 1, 1]


class TestSubjectVsGroup:
    def test_exchangeable(self):
        rng = np.random.default_rng(7)
        zs = []
        for _ in range(100):
            s = subj("s", "A", rng.normal(size=200))
            zs.append(abs(subject_vs_group_wrs(s, [GroupPool("B", rng.normal(size=2000))])[0]))
        assert np.mean(zs) < 2

    def test_rank_saturation(self):
        na, nb = 5, 20
        s = subj("s", "A", np.arange(na) + 100.0)
        z = subject_vs_group_wrs(s, [GroupPool("B", np.arange(nb, dtype=float))])[0]
        n = na + nb
        top = sum(range(nb + 1, n + 1))
        assert z == pytest.approx((top - na * (n + 1) / 2) / math.sqrt(na * nb * (n + 1) / 12))

    def test_order_preserved(self):
        s = subj("s", "A", [5.0, 6.0, 7.0])
        z = subject_vs_group_wrs(s, [GroupPool("B", [1.0, 2.0]), GroupPool("C", [10.0, 11.0])])
        assert len(z) == 2 and z[0] > 0 > z[1]

    def test_leave_one_out(self):
        a = subj("a", "A", [1.0, 2.0, 3.0])
        b = subj("b", "A", [4.0, 5.0])
        c = subj("c", "B", [0.5, 1.5])
        pools = pools_by_group([a, b, c])
        with pytest.raises(ValueError):
            subject_vs_group_wrs(a, pools)
        loo = subject_vs_group_wrs(a, pools, [a, b, c])
        direct = subject_vs_group_wrs(a, [GroupPool("A", b.distances), pools[1]])
        assert loo == direct

    def test_empty_pool(self):
        with pytest.raises(ValueError):
            subject_vs_group_wrs(subj("s", "A", [1.0]), [GroupPool("B", [])])
