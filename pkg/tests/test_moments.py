import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import ExactOracle, random_graph
from gseg_rm.counts import edge_count_profiles
from gseg_rm.dataset import GeneratorConfig, generate
from gseg_rm.graph import decompose, similarity_graph
from gseg_rm.moments import (
    NullMoments,
    UnsupportedSizeError,
    enumerate_null_moments,
    second_order_moments,
    third_moments,
    varrho,
)


def complete_graph(n):
    edges = [[u, v] for u in range(n) for v in range(u + 1, n)]
    return decompose(edges, np.arange(n))


def cycle_with_loops(n):
    # ell = 2: individual u owns nodes 2u, 2u+1; one within edge each and a
    # between-individual cycle, so every individual looks alike
    edges = [[2 * u, 2 * u + 1] for u in range(n)]
    edges += [[2 * u + 1, 2 * ((u + 1) % n)] for u in range(n)]
    return decompose(edges, np.repeat(np.arange(n), 2))


class TestSecondOrder:
    def test_mean_within_substitution(self):
        # 10 individuals with ell = 3 and two within edges each: |G_in| = 20
        edges = [[3 * u, 3 * u + 1] for u in range(10)] + [[3 * u + 1, 3 * u + 2] for u in range(10)]
        g = decompose(edges, np.repeat(np.arange(10), 3))
        assert g.n_in == 20
        assert second_order_moments(g, 4).mu_in == pytest.approx(8.0)

    def test_mean_between_substitution(self):
        g = complete_graph(5)
        assert g.n_out == 10
        assert second_order_moments(g, 2).mu_out1 == pytest.approx(1.0)

    def test_path_graph_against_enumeration(self):
        g = decompose([[0, 1], [1, 2], [2, 3]], np.arange(4))
        assert second_order_moments(g, 2).mu_out1 == pytest.approx(0.5)
        assert ExactOracle(g).mean("out1", 2) == 0.5

    @pytest.mark.parametrize("seed", range(4))
    def test_against_enumeration(self, seed):
        g = random_graph(seed, n=6, ell=2, k=2)
        oracle = ExactOracle(g)
        ms = NullMoments(g).second_order(np.arange(1, 6))
        for t in range(1, 6):
            i = t - 1
            checks = {
                "mu_out1": ("mean", "out1"),
                "mu_out2": ("mean", "out2"),
                "mu_in": ("mean", "in"),
                "mu_out_w": ("mean", "out_w"),
                "mu_out_d": ("mean", "out_d"),
                "var_out1": ("cov", "out1", "out1"),
                "var_out2": ("cov", "out2", "out2"),
                "var_in": ("cov", "in", "in"),
                "cov_out1_out2": ("cov", "out1", "out2"),
                "cov_out1_in": ("cov", "out1", "in"),
                "cov_out2_in": ("cov", "out2", "in"),
            }
            for field, query in checks.items():
                exact = oracle.mean(query[1], t) if query[0] == "mean" else oracle.central(list(query[1:]), t)
                assert getattr(ms, field)[i] == pytest.approx(float(exact), abs=1e-10), (field, t)
            for field, name in [("sigma_out_w", "out_w"), ("sigma_out_d", "out_d"), ("sigma_in", "in")]:
                exact = math.sqrt(oracle.central([name, name], t))
                assert getattr(ms, field)[i] == pytest.approx(exact, abs=1e-10)

    def test_small_n_rejected(self):
        with pytest.raises(UnsupportedSizeError):
            NullMoments(complete_graph(3))

    def test_t_range_checked(self):
        with pytest.raises(ValueError):
            second_order_moments(complete_graph(5), 5)

    def test_real_valued_t(self):
        # closed forms are rational in t, so fractional nodes interpolate smoothly
        m = NullMoments(random_graph(1, 7, 2, 2))
        mid = m.second_order(2.5).var_out1
        lo, hi = m.second_order(2).var_out1, m.second_order(3).var_out1
        assert min(lo, hi) - 1 < mid < max(lo, hi) + 1


class TestVarrho:
    def test_degenerate_regular_graph(self):
        g = cycle_with_loops(6)
        assert math.isnan(varrho(g))
        assert not NullMoments(g).within_enabled

    def test_no_within_edges(self):
        g = random_graph(0, n=6, ell=1, k=2)
        assert g.n_in == 0
        assert math.isnan(varrho(g))

    @pytest.mark.parametrize("seed", range(4))
    def test_equals_enumerated_correlation_at_every_t(self, seed):
        g = random_graph(10 + seed, n=6, ell=2, k=2)
        r = varrho(g)
        oracle = ExactOracle(g)
        for t in range(1, 6):
            assert oracle.varrho(t) == pytest.approx(r, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 12), st.integers(2, 3), st.integers(1, 3), st.integers(0, 10_000))
    def test_bounded(self, n, ell, k, seed):
        r = varrho(random_graph(seed, n, ell, k))
        assert math.isnan(r) or abs(r) <= 1 + 1e-12


class TestThirdMoments:
    @pytest.mark.parametrize("seed", range(3))
    def test_raw_third_moments_against_enumeration(self, seed):
        g = random_graph(20 + seed, n=5, ell=2, k=2)
        oracle = ExactOracle(g)
        th = third_moments(g, np.arange(1, 5))
        for t in range(1, 5):
            i = t - 1
            assert th.e_out_w3[i] == pytest.approx(float(oracle.raw(["out_w"] * 3, t)), abs=1e-9)
            assert th.e_out_d3[i] == pytest.approx(float(oracle.raw(["out_d"] * 3, t)), abs=1e-9)
            assert th.e_in3[i] == pytest.approx(float(oracle.raw(["in"] * 3, t)), abs=1e-9)
            assert th.e_in2_out_d[i] == pytest.approx(float(oracle.raw(["in", "in", "out_d"], t)), abs=1e-9)
            assert th.e_in_out_d2[i] == pytest.approx(float(oracle.raw(["in", "out_d", "out_d"], t)), abs=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(5, 15), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
    def test_time_reversal_symmetry(self, n, ell, k, seed):
        m = NullMoments(random_graph(seed, n, ell, k))
        t = np.arange(1, n)
        th, rev = m.third(t), m.third(n - t)
        np.testing.assert_allclose(rev.gamma_out_d, -th.gamma_out_d, atol=1e-9)
        np.testing.assert_allclose(rev.gamma_out_w, th.gamma_out_w, atol=1e-9)
        np.testing.assert_allclose(rev.gamma_in, -th.gamma_in, atol=1e-9)

    def test_monte_carlo_cross_check(self):
        # n too large to enumerate: compare skewness with 10^5 random orderings
        g = random_graph(7, n=30, ell=2, k=3)
        m = NullMoments(g)
        rng = np.random.default_rng(0)
        perms = np.argsort(rng.random((100_000, 30)), axis=1)
        r1, r2, rin = edge_count_profiles(g, perms, check=False)
        t = np.array([3, 10, 20, 27])
        th = m.third(t)
        for j, tt in enumerate(t):
            i = tt - 1
            a, b = (30 - tt - 1) / 28, (tt - 1) / 28
            samples = {
                "gamma_out_w": a * r1[:, i] + b * r2[:, i],
                "gamma_out_d": r1[:, i] - r2[:, i],
                "gamma_in": rin[:, i],
            }
            for field, x in samples.items():
                z = (x - x.mean()) / x.std()
                emp = np.mean(z**3)
                se = np.std(z**3) / math.sqrt(len(z))
                assert abs(emp - getattr(th, field)[j]) < 5 * se + 1e-3, (field, tt)

    def test_standardized_statistics_have_unit_variance(self):
        g = random_graph(4, n=6, ell=2, k=2)
        ms = NullMoments(g).second_order(np.arange(1, 6))
        ex = enumerate_null_moments(g)
        checked = 0
        for t in range(1, 6):
            i = t - 1
            a, b = (6 - t - 1) / 4, (t - 1) / 4
            parts = [
                (a * ex.r_out1[:, i] + b * ex.r_out2[:, i], ms.mu_out_w[i], ms.sigma_out_w[i]),
                (ex.r_out1[:, i] - ex.r_out2[:, i], ms.mu_out_d[i], ms.sigma_out_d[i]),
                (ex.r_in1[:, i], ms.mu_in[i], ms.sigma_in[i]),
            ]
            for x, mu, sigma in parts:
                if sigma == 0:
                    # e.g. R_w(1) = R_out1(1) = 0 for every ordering
                    continue
                z = (x - mu) / sigma
                assert z.mean() == pytest.approx(0.0, abs=1e-12)
                assert np.mean(z**2) == pytest.approx(1.0, abs=1e-12)
                checked += 1
        assert checked >= 12

    def test_moment_set_carries_skewness(self):
        m = NullMoments(random_graph(2, n=8, ell=2, k=2))
        ms = m.moment_set()
        assert ms.t.tolist() == list(range(1, 8))
        np.testing.assert_allclose(ms.gamma_out_d, m.skewness("out_d", np.arange(1, 8)))

    @pytest.mark.slow
    def test_right_skew_near_both_ends(self):
        ds = generate(GeneratorConfig(seed=1), 1000, 5, 50)
        m = NullMoments(similarity_graph(ds, k=1))
        gamma = m.skewness("out_w", np.array([10, 25, 975, 990]))
        assert np.all(gamma > 0)


class TestOrderingInvariance:
    def test_relabeled_graph_has_identical_moments(self):
        g = random_graph(5, n=9, ell=2, k=3)
        base = NullMoments(g).moment_set()
        rng = np.random.default_rng(0)
        for _ in range(10):
            perm = rng.permutation(9)
            h = decompose(g.edges, perm[g.individual_of], 9)
            other = NullMoments(h).moment_set()
            for field in ("mu_out_w", "sigma_out_w", "sigma_out_d", "sigma_in", "gamma_out_w", "gamma_in_tilde"):
                np.testing.assert_allclose(getattr(other, field), getattr(base, field), rtol=1e-12, atol=1e-12)
            assert other.varrho == pytest.approx(base.varrho, abs=1e-15)


class TestEnumeration:
    def test_three_individuals_without_within_edges(self):
        g = complete_graph(3)
        ex = enumerate_null_moments(g)
        assert ex.raw_moment(0, 0, 1) == [0, 0]

    def test_refuses_large_n(self):
        with pytest.raises(UnsupportedSizeError, match="8"):
            enumerate_null_moments(complete_graph(9))

    def test_order_limit(self):
        with pytest.raises(ValueError):
            enumerate_null_moments(complete_graph(4), max_order=4)
