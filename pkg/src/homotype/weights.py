"""Muckenhoupt constants and numerical checks of the weight lemmas.

All suprema run over every distinct ball, enumerated as distance-sorted
prefixes around each center. On a finite space with positive masses the
essential supremum is a plain maximum.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import NonPositiveWeight
from .maximal import maximal_centered
from .report import Report
from .space import FiniteSpace

EXHAUSTIVE_MAX = 12
SUBSET_SAMPLES = 1 << 10


def _weight(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("weights must be finite and strictly positive")
    return w


def _prefix_mean(space: FiniteSpace, g) -> np.ndarray:
    order = space.order
    return np.cumsum(g[order] * space.mass[order], axis=1) / space.cum_mass


def ap_constant(space: FiniteSpace, weight, p: float) -> Report:
    """``[w]_{A_p}`` as an exhaustive maximum over balls.

    For ``p > 1``: avg(w) * avg(w^(-1/(p-1)))^(p-1). For ``p = 1``:
    avg(w) * max over the ball of 1/w.
    """
    w = _weight(weight)
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    mean_w = _prefix_mean(space, w)
    if p == 1:
        dual = 1.0 / np.minimum.accumulate(w[space.order], axis=1)
    else:
        dual = _prefix_mean(space, w ** (-1.0 / (p - 1))) ** (p - 1)
    prod = np.where(space.valid_end, mean_w * dual, -np.inf)
    c, L = np.unravel_index(np.argmax(prod), prod.shape)
    rep = Report("ap_constant", oracle="exhaustive scan over balls")
    rep.values.update(constant=float(prod[c, L]), p=p)
    rep.witness = {"center": int(c), "radius": space.ball_radius(int(c), int(L) + 1),
                   "size": int(L) + 1}
    return rep


def _subset_masks(size: int, rng) -> np.ndarray:
    if size <= EXHAUSTIVE_MAX:
        bits = np.array(list(itertools.product((False, True), repeat=size))[1:], dtype=bool)
        return bits
    draws = rng.random((SUBSET_SAMPLES, size)) < 0.5
    singles = np.eye(size, dtype=bool)
    masks = np.vstack([singles, draws])
    return masks[masks.any(axis=1)]


def check_subset_inequality(space: FiniteSpace, weight, p: float, seed: int = 0) -> Report:
    """Smallest ``C`` with ``(mu(E)/mu(B))^p <= C w(E)/w(B)`` over balls ``B`` and ``E`` in ``B``.

    Subsets are exhaustive for balls with at most 12 points; larger balls use
    all singletons plus 1024 seeded random subsets.
    """
    w = _weight(weight)
    rng = np.random.default_rng(seed)
    table = space.ball_table
    wm = w * space.mass
    best, wit, exhaustive = 0.0, None, True
    for b in range(len(table)):
        idx = np.nonzero(table.members[b])[0]
        masks = _subset_masks(len(idx), rng)
        exhaustive &= len(idx) <= EXHAUSTIVE_MAX
        muE = masks @ space.mass[idx]
        wE = masks @ wm[idx]
        ratio = (muE / table.mass[b]) ** p * wm[idx].sum() / wE
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            wit = {"ball": idx.tolist(), "subset": idx[masks[i]].tolist()}
    rep = Report("subset_inequality", oracle="subset scan over all balls")
    rep.values.update(constant=best, p=float(p), exhaustive=bool(exhaustive))
    rep.witness = wit
    return rep


def a1_pointwise(space: FiniteSpace, weight) -> Report:
    """Smallest ``C`` with ``M w <= C w`` (centered ``M``), cross-checked with ``[w]_{A_1}``."""
    w = _weight(weight)
    ratio = maximal_centered(space, w).values / w
    x = int(np.argmax(ratio))
    a1 = ap_constant(space, w, 1).values["constant"]
    rep = Report("a1_pointwise", oracle="centered maximal function")
    rep.values.update(constant=float(ratio[x]), a1_constant=a1,
                      agreement=float(max(ratio[x], a1) / min(ratio[x], a1)))
    rep.witness = {"point": x}
    # the centered pointwise constant never exceeds the ball constant
    rep.check("pointwise_le_a1", ratio[x] <= a1 * (1 + 1e-12), float(ratio[x]), a1)
    return rep


def maximal_power_a1(space: FiniteSpace, f, exponent: float) -> Report:
    """``[(M f)^s]_{A_1}`` for ``0 <= s < 1`` (``s = 1`` is allowed as a contrast)."""
    if not 0 <= exponent <= 1:
        raise ValueError("exponent must lie in [0, 1]")
    Mf = maximal_centered(space, f).values
    w = Mf ** exponent if exponent > 0 else np.ones(space.n)
    inner = ap_constant(space, w, 1)
    rep = Report("maximal_power_a1", oracle="exhaustive A_1 scan")
    rep.values.update(constant=inner.values["constant"], exponent=float(exponent), n=space.n)
    rep.witness = inner.witness
    return rep


def log_weight_bmo(space: FiniteSpace, weight) -> Report:
    from .norms import bmo_ball_norm

    w = _weight(weight)
    bmo = bmo_ball_norm(space, np.log(w))
    a2 = ap_constant(space, w, 2)
    rep = Report("log_weight_bmo", oracle="exhaustive ball oscillation")
    rep.values.update(bmo=bmo.values["value"], a2_constant=a2.values["constant"])
    rep.witness = bmo.witness
    return rep


def two_point_oracle(t: float) -> dict:
    """Closed forms on the uniform two-point space with ``w = (1, t)``."""
    return {"a2": (1 + t) * (1 + 1 / t) / 4, "bmo_log": abs(np.log(t)) / 2}
