import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cases
import oracles
from homotype.errors import SystemMismatch
from homotype.haar import (COARSE, HaarSystem, ProductHaar, averaging, averaging_matrix, build_haar,
                           difference, level_average, level_difference, rectangle_difference,
                           verify_haar)
from homotype.space import ProductInstance, grid1d, random_cloud

pytestmark = pytest.mark.filterwarnings("ignore::homotype.lattice.AdmissibilityWarning")


def grid4():
    return cases.natural_lattice(grid1d(4))


def test_averaging_example():
    lat = grid4()
    q = lat.cube_of(0, lat.k_min + 1)
    assert sorted(q.members.tolist()) == [0, 1]
    np.testing.assert_allclose(averaging([0, 1, 2, 3], q, lat.space.mass), [0.5, 0.5, 0, 0])
    top = lat.cubes[lat.k_min][0]
    np.testing.assert_allclose(averaging([0, 1, 2, 3], top, lat.space.mass), np.full(4, 1.5))


def test_difference_examples():
    lat = cases.natural_lattice(random_cloud(9, 2, mass="random"))
    m = lat.space.mass
    for q in lat.iter_cubes():
        assert np.allclose(difference(np.full(9, 3.0), q, lat), 0)
        if len(q.children) > 1:
            child = lat.cubes[q.level + 1][q.children[0]]
            f = np.zeros(9)
            f[child.members] = 1.0
            expect = f - lat.cube_mass(child) / lat.cube_mass(q) * (np.isin(np.arange(9), q.members))
            np.testing.assert_allclose(difference(f, q, lat), expect, atol=1e-14)
            g = difference(np.random.default_rng(0).random(9), q, lat)
            assert abs(np.dot(g, m)) < 1e-12


def test_telescoping():
    lat = cases.natural_lattice(random_cloud(20, 5, mass="random"))
    f = cases.func(20)
    total = level_average(lat, f, lat.k_min)
    for k in range(lat.k_min, lat.k_max):
        total = total + level_difference(lat, f, k)
    np.testing.assert_allclose(total, f, atol=1e-12)
    for k in lat.levels:
        np.testing.assert_allclose(averaging_matrix(lat, k) @ f, level_average(lat, f, k), atol=1e-13)


def test_two_equal_children():
    lat = cases.natural_lattice(grid1d(2, mass=0.5))
    h = build_haar(lat)
    fns = [h.function(k) for k in h.keys if k[1] != COARSE]
    assert len(fns) == 1
    assert sorted(np.abs(fns[0]).tolist()) == [1.0, 1.0] and fns[0].sum() == 0


def test_grid8_function_count():
    h = build_haar(cases.natural_lattice(grid1d(8)))
    assert len(h) == 8 and int(h.cancellative.sum()) == 7


def test_single_haar_function_expands_to_unit_entry():
    h = build_haar(cases.natural_lattice(grid1d(8)))
    key = h.keys[3]
    c = h.expand(h.function(key)).coeffs
    expect = np.zeros(len(h))
    expect[3] = 1.0
    np.testing.assert_allclose(c, expect, atol=1e-14)


@pytest.mark.parametrize("n", [16, 8])
def test_roundtrip_and_parseval(n):
    h = build_haar(cases.natural_lattice(grid1d(n)))
    f = cases.func(n)
    t = h.expand(f)
    assert np.max(np.abs(h.reconstruct(t) - f)) < 1e-10
    assert np.sum(t.coeffs**2) == pytest.approx(np.sum(f * f * h.space.mass), rel=1e-12)
    rep = verify_haar(h)
    assert rep.passed, rep.failures()


def test_product_roundtrip_and_mismatch():
    p = ProductInstance(grid1d(8), grid1d(8))
    l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    ph = ProductHaar.build(p, l1, l2)
    F = cases.func(p.shape)
    assert np.max(np.abs(ph.reconstruct(ph.expand(F)) - F)) < 1e-10
    assert verify_haar(ph).passed
    with pytest.raises(SystemMismatch):
        ph.expand(np.zeros((8, 7)))
    other = build_haar(l1)
    with pytest.raises(SystemMismatch):
        other.reconstruct(build_haar(l1).expand(np.zeros(8)))


def test_square_function_examples():
    h = build_haar(cases.natural_lattice(grid1d(16)))
    assert np.allclose(h.square_function(np.full(16, 2.0)), 0)
    one = h.function(h.keys[5])
    assert np.sum(h.square_function(one) ** 2 * h.space.mass) == pytest.approx(1.0)
    f = cases.func(16)
    S = h.square_function(f)
    assert np.sum(S**2 * h.space.mass) == pytest.approx(h.expand(f).cancellative_energy())


def test_same_level_differences_are_orthogonal():
    lat = cases.natural_lattice(grid1d(16))
    f = cases.func(16)
    for k in range(lat.k_min, lat.k_max):
        qs = lat.cubes[k]
        for a in qs:
            for b in qs:
                if a.index != b.index:
                    assert np.allclose(difference(difference(f, a, lat), b, lat), 0)


def test_rectangle_difference_matches_oracle():
    p = cases.product4()
    l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    F = cases.func(p.shape, seed=5)
    ph = ProductHaar.build(p, l1, l2)
    energies = oracles.rectangle_energies(l1, l2, F)
    for (a, b), e in energies.items():
        q1 = next(q for q in l1.iter_cubes() if list(q.members) == list(a) and len(q.children) > 1)
        q2 = next(q for q in l2.iter_cubes() if list(q.members) == list(b) and len(q.children) > 1)
        D = rectangle_difference(F, q1, q2, l1, l2)
        assert np.sum(D * D * p.mass) == pytest.approx(e, rel=1e-10, abs=1e-14)
    assert ph.expand(F).cancellative_energy() == pytest.approx(sum(energies.values()), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 24), st.integers(0, 500), st.integers(0, 50))
def test_random_systems_are_orthonormal_bases(n, seed, order):
    sp = random_cloud(n, seed, mass="random")
    h = HaarSystem(cases.natural_lattice(sp), order)
    assert len(h) == n
    assert np.max(np.abs(h.gram() - np.eye(n))) < 1e-10
    vals = h.matrix.toarray()
    assert np.all(np.abs(vals[h.cancellative] @ sp.mass) < 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 99))
def test_tensor_difference_identity(n1, n2, seed):
    p = ProductInstance(random_cloud(n1, seed, mass="random"), random_cloud(n2, seed + 1, mass="random"))
    l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    F = np.random.default_rng(seed).standard_normal(p.shape)
    for q1 in l1.iter_cubes():
        for q2 in l2.iter_cubes():
            D = rectangle_difference(F, q1, q2, l1, l2)
            # applying the factors in the other order gives the same operator
            step = np.vstack([difference(F[i], q2, l2) for i in range(n1)])
            other = np.column_stack([difference(step[:, j], q1, l1) for j in range(n2)])
            np.testing.assert_allclose(D, other, atol=1e-12)
