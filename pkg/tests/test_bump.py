import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cases
from homotype.bump import bump_one_param, bump_product, check_rectangle_sum_bound, series_terms
from homotype.errors import EmptyTarget, SeriesNotConverging
from homotype.haar import ProductHaar
from homotype.maximal import iterate, strong_operator_norm
from homotype.space import ProductInstance, grid1d, random_cloud

pytestmark = pytest.mark.filterwarnings("ignore::homotype.lattice.AdmissibilityWarning")


def test_whole_space_gives_constant_one():
    sp = random_cloud(9, 1, mass="random")
    assert np.all(bump_one_param(sp, np.ones(9, dtype=bool), 0.1).tau == 1.0)
    p = ProductInstance(grid1d(4), grid1d(3))
    r = bump_product(p, np.ones(p.shape, dtype=bool), 0.1)
    assert np.all(r.m == 1.0) and np.all(r.tau == 1.0)


def test_empty_target_and_bad_delta():
    with pytest.raises(EmptyTarget):
        bump_one_param(grid1d(4), np.zeros(4, dtype=bool), 0.1)
    with pytest.raises(EmptyTarget):
        bump_product(ProductInstance(grid1d(2), grid1d(2)), np.zeros((2, 2), dtype=bool), 0.1)
    with pytest.raises(ValueError):
        bump_one_param(grid1d(4), [0], 1.5)


def test_support_shrinks_with_delta():
    g = grid1d(64)
    small = bump_one_param(g, [20, 21], 0.05).support
    large = bump_one_param(g, [20, 21], 0.2).support
    assert np.all(small <= large)


def test_point_target_on_refinements():
    ratios = []
    for n in (64, 128, 256):
        r = bump_one_param(grid1d(n), [n // 2], 0.1)
        assert r.report.passed
        ratios.append(r.measured["bmo_ratio"])
    assert max(ratios) / min(ratios) < 1.5


def test_product_point_target():
    p = ProductInstance(grid1d(8), grid1d(8))
    r = bump_product(p, [[3, 4]], 0.1)
    assert r.report.passed, r.report.failures()
    assert r.tau[3, 4] == 1.0
    assert r.m[3, 4] == 1.0 and np.all(r.m <= 1.0)
    assert r.measured["tail_l2"] < 1e-10


def test_series_guard():
    with pytest.raises(SeriesNotConverging):
        series_terms(1.0, 1.0, 1.0, 1.0, 1e-10)
    assert series_terms(0.25, 2.0, 1.0, 1.0, 1e-3) >= 1


def test_m_matches_direct_series():
    p = ProductInstance(grid1d(4), grid1d(4))
    E = np.zeros(p.shape, dtype=bool)
    E[1, 1] = E[2, 3] = True
    r = bump_product(p, E, 0.2)
    c, L = r.report.values["c"], r.report.values["terms"]
    direct = sum(c**l * iterate(p, E.astype(float), l).values for l in range(L))
    K = sum(c**l for l in range(L))
    np.testing.assert_allclose(r.m, direct / K, atol=1e-12)
    assert r.report.values["norm"] == strong_operator_norm(p).values["norm"]


def test_rectangle_sum_examples():
    p = ProductInstance(grid1d(8), grid1d(8))
    l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    ph = ProductHaar.build(p, l1, l2)
    one = np.ones(p.shape)
    assert check_rectangle_sum_bound(p, ph, one, one, 100.0, "exhaustive").values["ratio"] == pytest.approx(0, abs=1e-20)
    phi = np.outer(np.exp(-np.linspace(-1, 1, 8) ** 2), np.exp(-np.linspace(-1, 1, 8) ** 2))
    tau = bump_product(p, [[3, 4]], 0.1).tau
    prev = None
    for alpha in (0.5, 1.5, 3.5, 100.0):
        sums = check_rectangle_sum_bound(p, ph, phi, tau, alpha, "sampled:256:seed7").values["sums"]
        if prev is not None:
            assert np.all(sums >= prev - 1e-15)
        prev = sums
    with pytest.raises(ValueError):
        check_rectangle_sum_bound(p, ph, phi, 2 * one, 1.0, "exhaustive")


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 16), st.integers(0, 999), st.sampled_from([0.05, 0.1, 0.2]))
def test_one_param_invariants(n, seed, delta):
    sp = random_cloud(n, seed, mass="random")
    rng = np.random.default_rng(seed)
    E = rng.random(n) < 0.3
    E[rng.integers(n)] = True
    big = E | (rng.random(n) < 0.3)
    r = bump_one_param(sp, E, delta)
    assert r.report.passed
    assert np.all(r.tau[E] == 1.0) and np.all((r.tau >= 0) & (r.tau <= 1))
    assert np.array_equal(r.support, r.m > np.exp(-1 / delta))
    assert np.all(r.tau <= bump_one_param(sp, big, delta).tau)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 999), st.sampled_from([0.05, 0.1, 0.2]))
def test_product_invariants(n1, n2, seed, delta):
    p = ProductInstance(random_cloud(n1, seed, mass="random"), random_cloud(n2, seed + 1, mass="random"))
    rng = np.random.default_rng(seed)
    E = rng.random(p.shape) < 0.3
    E[rng.integers(n1), rng.integers(n2)] = True
    big = E | (rng.random(p.shape) < 0.3)
    r = bump_product(p, E, delta, family="exhaustive")
    assert r.report.passed, r.report.failures()
    assert np.all(r.tau[E] == 1.0) and np.all((r.tau >= 0) & (r.tau <= 1))
    assert np.array_equal(r.support, r.m > np.exp(-1 / delta))
    assert np.all(r.tau <= bump_product(p, big, delta, family="exhaustive").tau + 1e-12)
