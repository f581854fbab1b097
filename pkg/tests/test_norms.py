import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cases
import oracles
from homotype.errors import EmptyFamily, InconsistentSpaces
from homotype.haar import ProductHaar
from homotype.lattice import random_lattice
from homotype.norms import (FamilySpec, OpenSetFamily, bmo_ball_norm, carleson_bmo_norm,
                            dyadic_product_bmo_norm, expectation_bmo, h1_norm, little_bmo_max_closure,
                            little_bmo_norm, pairing, realize_family, vmo_defects)
from homotype.space import FiniteSpace, ProductInstance, grid1d, random_cloud

pytestmark = pytest.mark.filterwarnings("ignore::homotype.lattice.AdmissibilityWarning")


def setup(p):
    l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    return l1, l2, ProductHaar.build(p, l1, l2)


def tensor(ph, i, j):
    return np.outer(ph.first.function(ph.first.keys[i]), ph.second.function(ph.second.keys[j]))


def support_mass(ph, i, j, p):
    a = ph.first.function(ph.first.keys[i]) != 0
    b = ph.second.function(ph.second.keys[j]) != 0
    return p.measure(np.outer(a, b))


def test_ball_bmo_examples():
    two = FiniteSpace([[0.0, 1.0], [1.0, 0.0]])
    assert bmo_ball_norm(two, [1.0, 0.0]).values["value"] == pytest.approx(0.5)
    c = random_cloud(7, 1)
    assert bmo_ball_norm(c, np.full(7, 4.0)).values["value"] == 0.0


def test_family_descriptor_parsing():
    assert str(FamilySpec.parse("sampled:1024:seed7")) == "sampled:1024:seed7"
    assert FamilySpec.parse("exhaustive").kind == "exhaustive"
    with pytest.raises(ValueError):
        FamilySpec.parse("all-of-them")


def test_single_tensor_haar_values():
    p = ProductInstance(grid1d(4), grid1d(4))
    l1, l2, ph = setup(p)
    fam = realize_family("exhaustive", p, l1, l2)
    i = int(np.nonzero(ph.first.cancellative)[0][1])
    j = int(np.nonzero(ph.second.cancellative)[0][0])
    h = tensor(ph, i, j)
    mu = support_mass(ph, i, j, p)
    assert carleson_bmo_norm(p, h, ph, fam).values["value"] == pytest.approx(mu ** -0.5)
    assert dyadic_product_bmo_norm(p, h, l1, l2, fam).values["value"] == pytest.approx(mu ** -0.5)
    assert h1_norm(p, h, ph).values["value"] == pytest.approx(mu ** 0.5)


def test_constants_and_zero():
    p = cases.product4()
    l1, l2, ph = setup(p)
    c = np.full(p.shape, 3.0)
    fam = realize_family("exhaustive", p, l1, l2)
    assert carleson_bmo_norm(p, c, ph, fam).values["value"] == pytest.approx(0, abs=1e-12)
    assert dyadic_product_bmo_norm(p, c, l1, l2, fam).values["value"] == pytest.approx(0, abs=1e-12)
    assert little_bmo_norm(p, c).values["value"] == pytest.approx(0, abs=1e-12)
    assert h1_norm(p, np.zeros(p.shape), ph).values["value"] == 0.0
    rep = vmo_defects(p, c, ph, fam, [0.5, 2, 8], [0.5, 2])
    assert max(rep.values["small"] + rep.values["large"] + rep.values["far"]) < 1e-12


def test_empty_family_rejected():
    p = cases.product4()
    l1, l2, ph = setup(p)
    empty = OpenSetFamily(FamilySpec("exhaustive"), np.zeros((0, *p.shape), dtype=bool))
    with pytest.raises(EmptyFamily):
        carleson_bmo_norm(p, np.zeros(p.shape), ph, empty)


def test_levelset_family():
    p = cases.product4()
    l1, l2, ph = setup(p)
    F = cases.func(p.shape)
    fam = realize_family("levelsets", p, l1, l2, F)
    assert len(fam) > 0 and all(m.any() for m in fam.masks)
    with pytest.raises(EmptyFamily):
        realize_family("levelsets", p, l1, l2, np.zeros(p.shape))


def test_sampled_is_lower_bound_of_exhaustive():
    p = ProductInstance(grid1d(8), grid1d(8))
    l1, l2, ph = setup(p)
    F = cases.func(p.shape)
    ex = carleson_bmo_norm(p, F, ph, realize_family("exhaustive", p, l1, l2)).values["value"]
    sm = carleson_bmo_norm(p, F, ph, realize_family("sampled:64:seed7", p, l1, l2)).values["value"]
    assert sm <= ex + 1e-12


def test_little_bmo_of_one_variable_function():
    p = cases.product4()
    g = cases.func(4)
    F = np.repeat(g[:, None], 4, axis=1)
    assert little_bmo_norm(p, F).values["value"] == pytest.approx(bmo_ball_norm(p.factor1, g).values["value"])


def test_vmo_finest_tensor_and_vacuous_curves():
    p = ProductInstance(grid1d(4), grid1d(4))
    l1, l2, ph = setup(p)
    top1 = max(k[0] for k in ph.first.keys)
    top2 = max(k[0] for k in ph.second.keys)
    keys1 = [k for k in ph.first.keys if k[0] == top1]
    keys2 = [k for k in ph.second.keys if k[0] == top2]
    h = np.outer(ph.first.function(keys1[0]), ph.second.function(keys2[0]))
    rep = vmo_defects(p, h, ph, "exhaustive", [5.0], [100.0])
    assert rep.values["small"][0] > 0
    assert rep.values["large"] == [0.0]


def test_pairing_examples():
    p = ProductInstance(grid1d(4), grid1d(4))
    R = np.zeros(p.shape)
    R[:2, 1:3] = 1
    assert pairing(p, R, R) == 4.0
    assert pairing(p, R, np.zeros(p.shape)) == 0.0


def test_h1_warns_without_cancellation():
    p = cases.product4()
    _, _, ph = setup(p)
    with pytest.warns(UserWarning):
        h1_norm(p, np.ones(p.shape), ph)


def test_expectation_examples():
    p = ProductInstance(grid1d(8), grid1d(8))
    F = cases.func(p.shape)

    def constant_builder(s):
        return random_lattice(p.factor1, 0.5, s), random_lattice(p.factor2, 0.5, s + 1), F

    rep = expectation_bmo(p, constant_builder, [1, 2, 3], "sampled:256:seed7")
    np.testing.assert_allclose(rep.values["average"], F)

    def tensor_builder(s):
        l1, l2 = random_lattice(p.factor1, 0.5, s), random_lattice(p.factor2, 0.5, s + 1)
        ph = ProductHaar.build(p, l1, l2)
        return l1, l2, tensor(ph, int(np.nonzero(ph.first.cancellative)[0][-1]),
                              int(np.nonzero(ph.second.cancellative)[0][-1]))

    rep = expectation_bmo(p, tensor_builder, range(16), "sampled:256:seed7")
    assert 0 < rep.values["ratio"] < 1

    other = ProductInstance(grid1d(8), grid1d(8))
    with pytest.raises(InconsistentSpaces):
        expectation_bmo(p, lambda s: (random_lattice(other.factor1, 0.5, s),
                                      random_lattice(other.factor2, 0.5, s), F), [1], "exhaustive")
    with pytest.raises(ValueError):
        expectation_bmo(p, constant_builder, [1], "exhaustive", heldout_seeds=[1])


products = st.builds(
    lambda a, b, s: ProductInstance(random_cloud(a, s, mass="random"), random_cloud(b, s + 3, mass="random")),
    st.integers(2, 5), st.integers(2, 5), st.integers(0, 500))


@settings(max_examples=20, deadline=None)
@given(products, st.integers(0, 99))
def test_two_routes_and_loop_oracle_agree(p, seed):
    l1, l2, ph = setup(p)
    F = np.random.default_rng(seed).standard_normal(p.shape)
    fam = realize_family("exhaustive", p, l1, l2)
    a = carleson_bmo_norm(p, F, ph, fam).values["value"]
    b = dyadic_product_bmo_norm(p, F, l1, l2, fam).values["value"]
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
    assert a == pytest.approx(oracles.carleson_bmo(l1, l2, F, oracles.rectangle_unions(l1, l2)), rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(products, st.integers(0, 99), st.floats(-3, 3))
def test_homogeneity_and_shift(p, seed, c):
    l1, l2, ph = setup(p)
    F = np.random.default_rng(seed).standard_normal(p.shape)
    fam = realize_family("exhaustive", p, l1, l2)
    for norm in (lambda G: carleson_bmo_norm(p, G, ph, fam).values["value"],
                 lambda G: little_bmo_norm(p, G).values["value"]):
        assert norm(c * F) == pytest.approx(abs(c) * norm(F), rel=1e-9, abs=1e-12)
        assert norm(F + 2.0) == pytest.approx(norm(F), rel=1e-9, abs=1e-12)
    assert little_bmo_norm(p, F).values["value"] == pytest.approx(
        oracles.little_bmo(p.factor1.dist, p.factor1.mass, p.factor2.dist, p.factor2.mass, F), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(products, st.integers(0, 99))
def test_h1_triangle_and_loop_oracle(p, seed):
    _, _, ph = setup(p)
    rng = np.random.default_rng(seed)

    def cancellative():
        C = np.where(np.outer(ph.first.cancellative, ph.second.cancellative),
                     rng.standard_normal(ph.shape), 0.0)
        return ph.reconstruct(type(ph.expand(np.zeros(p.shape)))(ph, C))

    f, g = cancellative(), cancellative()
    nf, ng = h1_norm(p, f, ph).values["value"], h1_norm(p, g, ph).values["value"]
    assert h1_norm(p, f + g, ph).values["value"] <= nf + ng + 1e-12
    assert nf == pytest.approx(oracles.h1_norm(ph.first.lattice, ph.second.lattice, f), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(products, st.integers(0, 99))
def test_max_closure(p, seed):
    rng = np.random.default_rng(seed)
    rep = little_bmo_max_closure(p, rng.standard_normal(p.shape), rng.standard_normal(p.shape))
    assert rep.passed


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 9), st.integers(0, 999))
def test_ball_bmo_matches_loop_oracle(n, seed):
    sp = random_cloud(n, seed, mass="random")
    f = np.random.default_rng(seed).standard_normal(n)
    assert bmo_ball_norm(sp, f).values["value"] == pytest.approx(oracles.ball_bmo(sp.dist, sp.mass, f),
                                                                 rel=1e-12, abs=1e-15)
