import math

import numpy as np
import pytest

from _oracles import random_graph
from gseg_rm.counts import edge_count_profile
from gseg_rm.detect import detect
from gseg_rm.dataset import generate
from gseg_rm.moments import NullMoments
from gseg_rm.permutation import (
    MIN_PERMUTATIONS,
    PermutationResult,
    exhaustive_null,
    null_maxima,
    permutation_test,
)
from gseg_rm.scanstat import standardized_scans
from gseg_rm.study import setting_config


def test_observed_below_every_replicate_gives_one():
    res = PermutationResult(B=100, seed=0, observed={"m": 0.1}, null={"m": np.linspace(1, 2, 100)})
    assert res.p_value() == 1.0


def test_observed_above_every_replicate():
    res = PermutationResult(B=100, seed=0, observed={"m": 9.0}, null={"m": np.linspace(1, 2, 100)})
    assert res.p_value() == pytest.approx(1 / 101)


def test_non_finite_observed():
    res = PermutationResult(B=100, seed=0, observed={"m": np.nan}, null={"m": np.zeros(100)})
    assert math.isnan(res.p_value())


def test_quantile_is_linear_interpolation():
    draws = np.random.default_rng(0).standard_normal(500)
    res = PermutationResult(B=500, seed=0, observed={"m": 0.0}, null={"m": draws})
    assert res.critical_value(0.05) == np.quantile(draws, 0.95, method="linear")
    with pytest.raises(ValueError):
        res.critical_value(1.0)


def test_requires_enough_replicates():
    g = random_graph(0, n=10, ell=2, k=2)
    with pytest.raises(ValueError, match=str(MIN_PERMUTATIONS)):
        permutation_test(g, 1, 9, B=MIN_PERMUTATIONS - 1)


def test_window_checked():
    g = random_graph(0, n=10, ell=2, k=2)
    with pytest.raises(ValueError):
        permutation_test(g, 0, 9, B=100)


def test_deterministic_and_chunk_independent():
    g = random_graph(3, n=15, ell=2, k=3)
    a = permutation_test(g, 1, 14, B=300, seed=5)
    b = permutation_test(g, 1, 14, B=300, seed=5, chunk=7)
    for key in a.null:
        np.testing.assert_array_equal(a.null[key], b.null[key])
    c = permutation_test(g, 1, 14, B=300, seed=6)
    assert not np.array_equal(a.null["m"], c.null["m"])


def test_observed_matches_scan():
    g = random_graph(4, n=12, ell=2, k=3)
    res = permutation_test(g, 2, 10, B=100)
    scan = standardized_scans(edge_count_profile(g), NullMoments(g))
    assert res.observed["m"] == np.nanmax(scan.m[1:10])
    assert res.observed["out_d"] == np.nanmax(np.abs(scan.z_out_d[1:10]))


def test_monte_carlo_agrees_with_enumeration():
    g = random_graph(12, n=6, ell=2, k=2)
    exact = exhaustive_null(g, 1, 5)
    assert exact.B == 720 and exact.seed == -1
    mc = permutation_test(g, 1, 5, B=50_000, seed=1)
    for ch in ("m", "out_w", "out_d"):
        assert abs(mc.p_value(ch) - exact.p_value(ch)) < 0.01


def test_exhaustive_size_limit():
    with pytest.raises(ValueError):
        exhaustive_null(random_graph(0, n=9, ell=1, k=1), 1, 8)


def test_null_maxima_shape():
    g = random_graph(1, n=8, ell=2, k=2)
    perms = np.stack([np.random.default_rng(i).permutation(8) for i in range(4)])
    out = null_maxima(g, perms, NullMoments(g), 1, 7)
    assert set(out) == {"m", "out_w", "out_d", "in", "in_tilde"}
    assert all(v.shape == (4,) for v in out.values())


@pytest.mark.slow
def test_analytic_null_rejection_rate():
    # 100 null sequences; the analytic A2 test should reject about 5% of them
    rejections = 0
    for r in range(100):
        ds = generate(setting_config("gaussian", 1, None, 5000 + r), 60, 3, 20)
        rejections += detect(ds, k=5).reject
    assert 1 <= rejections <= 10
