"""Library results against brute-force oracles, both live and frozen."""
import warnings

import numpy as np
import pytest

import cases
from homotype import maximal, norms, space, weights
from homotype.haar import ProductHaar
from homotype.lattice import AdmissibilityWarning
from homotype.space import grid1d, grid2d, snowflake


def _product_pair():
    p = cases.product4()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        l1, l2 = cases.natural_lattice(p.factor1), cases.natural_lattice(p.factor2)
    return p, l1, l2, ProductHaar.build(p, l1, l2)


def _carleson():
    p, l1, l2, ph = _product_pair()
    fam = norms.realize_family("exhaustive", p, l1, l2)
    return norms.carleson_bmo_norm(p, cases.func(p.shape, seed=17), ph, fam).values["value"]


def _h1():
    p, _, _, ph = _product_pair()
    with pytest.warns(UserWarning, match="mean-zero"):
        return norms.h1_norm(p, cases.func(p.shape, seed=17), ph).values["value"]


def _strong(F):
    p = cases.product4()
    return maximal.maximal_strong(p, F(p)).values


def _point(p):
    E = np.zeros(p.shape)
    E[1, 2] = 1.0
    return E


LIBRARY = {
    "a0_squared_grid3": lambda: space.verify_quasi_metric(cases.squared_grid3()).values["a0"],
    "a0_snowflake_grid8": lambda: space.verify_quasi_metric(snowflake(grid1d(8), 2.0)).values["a0"],
    "cmu_grid1d16": lambda: space.doubling_constant(grid1d(16)).values["c_mu"],
    "cmu_grid2d8": lambda: space.doubling_constant(grid2d(8)).values["c_mu"],
    "cmu_cloud10": lambda: space.doubling_constant(cases.cloud()).values["c_mu"],
    "centered_chi_grid4": lambda: maximal.maximal_centered(grid1d(4), cases.chi(4, 1)).values,
    "uncentered_chi_grid4": lambda: maximal.maximal_uncentered(grid1d(4), cases.chi(4, 1)).values,
    "centered_cloud10": lambda: maximal.maximal_centered(cases.cloud(), cases.func(10)).values,
    "uncentered_cloud10": lambda: maximal.maximal_uncentered(cases.cloud(), cases.func(10)).values,
    "strong_point_4x4": lambda: _strong(_point),
    "strong_random_4x4": lambda: _strong(lambda p: cases.func(p.shape)),
    "subset_grid8_unit_p2": lambda: weights.check_subset_inequality(grid1d(8), np.ones(8), 2).values["constant"],
    "subset_grid8_weight_p2": lambda: weights.check_subset_inequality(
        grid1d(8), cases.weight(8), 2).values["constant"],
    "ball_bmo_cloud10": lambda: norms.bmo_ball_norm(cases.cloud(), cases.func(10)).values["value"],
    "little_bmo_4x4": lambda: norms.little_bmo_norm(
        cases.product4(), cases.func((4, 4))).values["value"],
    "weak11_grid8": lambda: maximal.verify_weak11(
        grid1d(8), cases.chi(8, 3), np.ones(8), cases.WEAK_LAMBDAS).values["ratios"],
    "carleson_4x4": _carleson,
    "h1_4x4": _h1,
}
for _q in (1, 1.5, 2, 3):
    LIBRARY[f"ap{_q:g}_cloud10"] = (
        lambda q=_q: weights.ap_constant(cases.cloud(), cases.weight(10), q).values["constant"])


def test_every_frozen_case_has_a_library_route(frozen):
    assert set(frozen) == set(LIBRARY)


@pytest.mark.parametrize("name", sorted(LIBRARY))
def test_library_matches_frozen_oracle(name, frozen):
    np.testing.assert_allclose(np.asarray(LIBRARY[name](), dtype=float), frozen[name], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", sorted(LIBRARY))
def test_live_oracle_reproduces_fixture(name, frozen, live):
    np.testing.assert_allclose(np.asarray(live[name], dtype=float), frozen[name], rtol=1e-12, atol=1e-14)


def test_hand_values(frozen):
    assert frozen["a0_squared_grid3"] == pytest.approx(2.0)
    assert frozen["a0_snowflake_grid8"] == pytest.approx(2.0)
    assert frozen["cmu_grid1d16"] == pytest.approx(3.0)
    assert frozen["cmu_grid2d8"] == pytest.approx(9.0)
    assert frozen["centered_chi_grid4"] == pytest.approx([0.5, 1, 1 / 3, 1 / 3])
