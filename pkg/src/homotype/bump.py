"""Bump functions built from maximal functions of indicators.

One parameter: ``tau = max(0, 1 + delta log M chi_E)`` with the centered
maximal operator. Product: ``tau = max(0, 1 + delta log m)`` where ``m`` is a
normalized geometric series of iterated strong maximal functions of
``chi_E``. Both equal 1 on ``E`` exactly and lie in ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTarget, SeriesNotConverging
from .haar import ProductHaar
from .lattice import DyadicLattice
from .maximal import _strong, maximal_centered, maximal_uncentered, strong_operator_norm
from .norms import (
    OpenSetFamily, _Pooler, bmo_ball_norm, carleson_energies, little_bmo_norm, realize_family,
)
from .report import Report
from .space import FiniteSpace, ProductInstance

DEFAULT_TOL = 1e-10
DEFAULT_FAMILY = "sampled:1024:seed7"


@dataclass
class BumpResult:
    tau: np.ndarray
    support: np.ndarray
    target: np.ndarray
    m: np.ndarray | None = None
    measured: dict = field(default_factory=dict)
    report: Report | None = None


def _target_1d(space: FiniteSpace, E) -> np.ndarray:
    mask = np.zeros(space.n, dtype=bool)
    E = np.asarray(E)
    if E.dtype == bool:
        mask[:] = E
    elif E.size:
        mask[E.astype(int)] = True
    if not mask.any():
        raise EmptyTarget("bump target set is empty")
    return mask


def _target_2d(product: ProductInstance, E) -> np.ndarray:
    E = np.asarray(E)
    if E.dtype == bool and E.shape == product.shape:
        mask = E.copy()
    else:
        mask = np.zeros(product.shape, dtype=bool)
        if E.size:
            E = E.reshape(-1, 2).astype(int)
            mask[E[:, 0], E[:, 1]] = True
    if not mask.any():
        raise EmptyTarget("bump target set is empty")
    return mask


def _tau(weight: np.ndarray, delta: float) -> np.ndarray:
    # weight <= 1 by construction; the clip only guards the log against rounding
    return np.maximum(0.0, 1.0 + delta * np.log(np.minimum(weight, 1.0)))


def _common_checks(rep: Report, tau, target, support, weight, delta) -> None:
    rep.check("tau_one_on_target", bool(np.all(tau[target] == 1.0)),
              float(np.min(tau[target])), 1.0, anchor="tau = 1 on E")
    rep.check("tau_in_unit_interval", bool(np.all((tau >= 0) & (tau <= 1))),
              [float(tau.min()), float(tau.max())], [0, 1], anchor="0 <= tau <= 1")
    expected = weight > np.exp(-1.0 / delta)
    rep.check("support_identity", bool(np.array_equal(support, expected)),
              anchor="supp tau = {weight > exp(-1/delta)}")


def bump_one_param(space: FiniteSpace, E, delta: float) -> BumpResult:
    """``tau = max(0, 1 + delta log M chi_E)`` with measured norm and support ratios."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    target = _target_1d(space, E)
    chi = target.astype(float)
    Mchi = maximal_centered(space, chi).values
    tau = _tau(Mchi, delta)
    support = tau > 0
    muE = float(space.mass[target].sum())
    supp_mass = float(space.mass[support].sum())
    bmo = bmo_ball_norm(space, tau).values["value"]
    tau_u = _tau(maximal_uncentered(space, chi).values, delta)
    bmo_u = bmo_ball_norm(space, tau_u).values["value"]
    rep = Report("bump_one_param", oracle="centered maximal function of the indicator")
    rep.values.update(delta=delta, target_mass=muE, support_mass=supp_mass,
                      support_ratio=supp_mass / (np.exp(1.0 / delta) * muE),
                      bmo=bmo, bmo_ratio=bmo / delta, bmo_uncentered=bmo_u,
                      bmo_uncentered_ratio=bmo_u / delta)
    _common_checks(rep, tau, target, support, Mchi, delta)
    measured = {k: rep.values[k] for k in ("support_mass", "support_ratio", "bmo", "bmo_ratio")}
    return BumpResult(tau, support, target, Mchi, measured, rep)


def series_terms(c: float, norm: float, chi_norm: float, total_mass: float, tol: float) -> int:
    """Number of terms ``L`` after which both tail bounds fall below ``tol``.

    L^2 tail: ``(c N)^(L+1) / (1 - c N) * ||chi_E||_2``. Sup-norm tail, valid
    because ``M_s`` never increases the sup norm:
    ``c^(L+1) / (1 - c) * mu(X)^(1/2)``.
    """
    q = c * norm
    if q >= 1:
        raise SeriesNotConverging(f"c * ||M_s|| = {q} >= 1")
    L = 1
    while (q ** (L + 1) / (1 - q) * chi_norm >= tol
           or c ** (L + 1) / (1 - c) * np.sqrt(total_mass) >= tol):
        L += 1
    return L


def strong_series(product: ProductInstance, target: np.ndarray, tol: float = DEFAULT_TOL):
    """``(m, info)`` for ``m = K^-1 sum_{l <= L} c^l M_s^(l) chi_E``.

    ``K`` is the truncated sum of ``c^l`` accumulated in the same order as
    the terms, so ``m`` is exactly 1 wherever every iterate equals 1 (on
    ``E``) and at most 1 elsewhere.
    """
    norm = strong_operator_norm(product).values["norm"]
    c = 1.0 / (2.0 * norm)
    chi = target.astype(float)
    chi_norm = float(np.sqrt(product.measure(target)))
    L = series_terms(c, norm, chi_norm, product.total_mass, tol)
    g = chi
    S = chi.copy()
    K = 1.0
    w = 1.0
    for _ in range(L):
        # M_s cannot exceed the sup norm; clip away rounding above 1
        g = np.minimum(_strong(product, g), 1.0)
        w *= c
        S += w * g
        K += w
    m = S / K
    info = {"norm": norm, "c": c, "terms": L + 1, "K": K,
            "tail_l2": (c * norm) ** (L + 1) / (1 - c * norm) * chi_norm,
            "tail_sup": c ** (L + 1) / (1 - c) * np.sqrt(product.total_mass),
            "m_l2_ratio": float(np.sqrt(np.sum(m * m * product.mass)) / chi_norm)}
    return m, info


def bump_product(product: ProductInstance, E, delta: float, tol: float = DEFAULT_TOL,
                 family=DEFAULT_FAMILY) -> BumpResult:
    """Product bump with measured support ratio and little-bmo ratio."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    target = _target_2d(product, E)
    m, info = strong_series(product, target, tol)
    tau = _tau(m, delta)
    support = tau > 0
    muE = product.measure(target)
    supp_mass = product.measure(support)
    lb = little_bmo_norm(product, tau, family)
    rep = Report("bump_product", oracle="iterated strong maximal series")
    rep.values.update(delta=delta, target_mass=muE, support_mass=supp_mass,
                      support_ratio=supp_mass / (np.exp(2.0 / delta) * muE),
                      bmo=lb.values["value"], bmo_ratio=lb.values["value"] / delta,
                      bmo_family=lb.values["family"], **info)
    _common_checks(rep, tau, target, support, m, delta)
    rep.check("m_at_most_one", bool(np.all(m <= 1.0)), float(m.max()), 1.0, anchor="m <= 1")
    rep.check("series_tail", max(info["tail_l2"], info["tail_sup"]) < tol,
              max(info["tail_l2"], info["tail_sup"]), tol, anchor="series truncation")
    measured = {k: rep.values[k] for k in ("support_mass", "support_ratio", "bmo", "bmo_ratio",
                                          "m_l2_ratio", "tail_l2", "tail_sup")}
    return BumpResult(tau, support, target, m, measured, rep)


def _cube_diameters(lat: DyadicLattice) -> np.ndarray:
    D = lat.space.dist
    out = []
    for q in lat.iter_cubes():
        out.append(float(D[np.ix_(q.members, q.members)].max()))
    return np.array(out)


def check_rectangle_sum_bound(product: ProductInstance, ph: ProductHaar, phi, b, alpha: float,
                              family, b_norm: float | None = None) -> Report:
    """Max over a family of ``sum_{R in Omega, diam R <= alpha} ||Delta_R(phi b)||^2``
    divided by ``(||b||_bmo + alpha) mu(Omega)``.

    ``diam R`` is the larger of the two cube diameters. ``||b||_bmo`` is the
    little-bmo norm (computed over the default rectangle family unless given).
    """
    b = np.asarray(b, dtype=float)
    if np.abs(b).max() > 1 + 1e-12:
        raise ValueError("b must satisfy ||b||_inf <= 1")
    F = np.asarray(phi, dtype=float) * b
    lat1, lat2 = ph.first.lattice, ph.second.lattice
    if not isinstance(family, OpenSetFamily):
        family = realize_family(family, product, lat1, lat2, F)
    if b_norm is None:
        b_norm = little_bmo_norm(product, b, DEFAULT_FAMILY).values["value"]
    e = carleson_energies(ph, F)
    small = np.outer(_cube_diameters(lat1) <= alpha, _cube_diameters(lat2) <= alpha)
    e = np.where(small, e, 0.0)
    p1, p2 = _Pooler(lat1), _Pooler(lat2)
    sums = np.empty(len(family))
    for a in range(0, len(family), 64):
        masks = family.masks[a:a + 64]
        inner = p2.all_within(masks)
        both = p1.all_within(np.swapaxes(inner, 1, 2))
        sums[a:a + len(masks)] = np.einsum("bji,ij->b", both, e)
    mu = np.array([product.measure(s) for s in family.masks])
    ratios = sums / ((b_norm + alpha) * mu)
    i = int(np.argmax(ratios))
    rep = Report("rectangle_sum_bound", oracle="Haar energies of small dyadic rectangles")
    rep.values.update(ratio=float(ratios[i]), alpha=alpha, b_bmo=b_norm,
                      family=family.descriptor, sums=sums, sets=len(family))
    rep.witness = {"set": i, "label": family.labels[i] if family.labels else None}
    return rep
