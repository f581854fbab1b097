"""Acceptance measurements, shared by calibration, the test suite and ``verify-all``.

Every function returns a :class:`Report` whose values are deterministic (no
timings) and whose checks compare against the frozen thresholds in
:mod:`homotype.constants`. ``scale="tiny"`` shrinks every instance for quick
end-to-end runs; ``scale="full"`` uses the acceptance sizes.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from . import constants as K
from .bump import bump_one_param, bump_product
from .haar import HaarSystem, ProductHaar, verify_haar
from .harness import random_open_set, run_weak_star_experiment, unit_grid, vitali_cover
from .lattice import AdmissibilityWarning, build_lattice, build_reference_nets, random_lattice
from .norms import (
    carleson_bmo_norm, dyadic_product_bmo_norm, expectation_bmo, h1_norm, pairing, realize_family,
)
from .report import Report
from .space import FiniteSpace, ProductInstance, generate, grid1d, grid2d, random_cloud, snowflake
from .weights import log_weight_bmo, maximal_power_a1, two_point_oracle

SCALES = ("tiny", "full")
FAMILY = "sampled:1024:seed7"
ONE_PARAMETER = {"parameters": 1, "sizes": [32, 64, 128], "schedule": [1, 2, 3, 4]}


def _scale(scale):
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    return scale == "full"


def _lattice(space, delta=0.5, seed=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        return build_lattice(build_reference_nets(space, delta, seed))


def lattice_instances(scale="full") -> list:
    if _scale(scale):
        spaces = [("grid1d(8)", grid1d(8)), ("grid1d(64)", grid1d(64)), ("grid1d(512)", grid1d(512)),
                  ("grid2d(16)", grid2d(16)), ("snowflake(64, 2)", snowflake(grid1d(64), 2.0))]
        spaces += [(f"cloud(128, seed={s})", random_cloud(128, s)) for s in range(1, 5)]
    else:
        spaces = [("grid1d(8)", grid1d(8)), ("grid2d(4)", grid2d(4)),
                  ("snowflake(8, 2)", snowflake(grid1d(8), 2.0)), ("cloud(16, seed=1)", random_cloud(16, 1))]
    return spaces


def lattice_axioms(scale="full") -> Report:
    rep = Report("lattice_axioms", oracle="exhaustive member-list checks")
    rows = []
    for name, sp in lattice_instances(scale):
        lat = _lattice(sp)
        r = lat.report
        bound = 2 * sp.a0**2
        rows.append({"instance": name, "c1": lat.c1, "C1": lat.C1, "bound": bound,
                     "linear_bound": 2 * sp.a0, "cubes": lat.n_cubes})
        rep.check(f"{name}: properties", r.passed, witness=[c.name for c in r.failures()],
                  anchor="nesting, covering, sandwich, ancestry, bounded children")
        rep.check(f"{name}: C1 <= 2 A0^2", lat.C1 <= bound, lat.C1, bound, anchor="sandwich upper constant")
        rep.check(f"{name}: c1 > 0", lat.c1 > 0, lat.c1, 0.0, anchor="sandwich lower constant")
    rep.values["instances"] = rows
    return rep


def haar_exactness(scale="full") -> Report:
    rep = Report("haar_exactness", oracle="Gram matrices and seeded round trips")
    rows = []
    targets = [(name, HaarSystem(_lattice(sp))) for name, sp in lattice_instances(scale)]
    for n in ((8, 16) if _scale(scale) else (4, 8)):
        a, b = grid1d(n), grid1d(n)
        prod = ProductInstance(a, b)
        targets.append((f"grid1d({n})^2", ProductHaar.build(prod, _lattice(a), _lattice(b))))
    for name, system in targets:
        r = verify_haar(system, seed=0)
        rows.append({"instance": name, **{k: r.values[k] for k in
                                          ("gram_error", "cancellation", "roundtrip", "parseval")}})
        for c in r.checks:
            rep.check(f"{name}: {c.name}", c.passed, c.value, c.bound, anchor=c.anchor)
    rep.values["instances"] = rows
    return rep


def weight_lemmas(scale="full") -> Report:
    sizes = (8, 16, 32, 64, 128) if _scale(scale) else (8, 16, 32)
    half, full = [], []
    for n in sizes:
        sp = grid1d(n)
        chi = np.zeros(n)
        chi[n // 2] = 1.0
        half.append(maximal_power_a1(sp, chi, 0.5).values["constant"])
        full.append(maximal_power_a1(sp, chi, 1.0).values["constant"])
    rep = Report("weight_lemmas", oracle="exhaustive A_1 and BMO scans")
    spread = max(half) / min(half)
    rep.check("A1 of (M chi)^1/2 bounded", max(half) <= K.A1_HALF_POWER, max(half), K.A1_HALF_POWER,
              anchor="(M f)^s in A_1 for s < 1")
    rep.check("A1 of (M chi)^1/2 spread < 2", spread < 2.0, spread, 2.0, anchor="no growth in n")
    rep.check("A1 of M chi grows", all(b > a for a, b in zip(full, full[1:])), full,
              anchor="s = 1 is not uniformly A_1")
    two = FiniteSpace([[0.0, 1.0], [1.0, 0.0]], [1.0, 1.0])
    bmo = []
    for t in (2.0, 4.0, 8.0):
        r = log_weight_bmo(two, [1.0, t])
        exact = two_point_oracle(t)
        bmo.append(r.values["bmo"])
        err = abs(r.values["bmo"] - exact["bmo_log"])
        rep.check(f"two-point t={t:g}: bmo of log w", err <= 1e-12, err, 1e-12, anchor="|log t| / 2")
        err2 = abs(r.values["a2_constant"] - exact["a2"])
        rep.check(f"two-point t={t:g}: A2", err2 <= 1e-12, err2, 1e-12, anchor="(1+t)(1+1/t)/4")
    rep.check("two-point bmo increasing", all(b > a for a, b in zip(bmo, bmo[1:])), bmo)
    rep.values.update(sizes=list(sizes), a1_half=half, a1_full=full, spread=spread, two_point_bmo=bmo)
    return rep


def _bump_space(rng, n):
    kind = ("grid1d", "cloud", "graph")[int(rng.integers(3))]
    seed = int(rng.integers(2**31))
    params = {"n": n} if kind != "cloud" else {"n": n, "dim": 1 + int(rng.integers(2))}
    return generate(kind, params, seed), kind


def bump_instances(scale="full", count=None, seed=2024) -> list:
    """Seeded instance descriptions: half one-parameter, half products."""
    count = (100 if _scale(scale) else 8) if count is None else count
    sizes = (16, 32, 64) if _scale(scale) else (8, 16)
    psizes = (16, 32, 64) if _scale(scale) else (8,)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        product = i % 2 == 1
        n = int((psizes if product else sizes)[(i // 2) % len(psizes if product else sizes)])
        out.append({"index": i, "product": product, "n": n,
                    "fraction": (None, 0.05, 0.2)[(i // 6) % 3],
                    "delta": (0.05, 0.1, 0.2)[i % 3],
                    "seed": int(rng.integers(2**31))})
    return out


def _target(rng, total, fraction):
    size = 1 if fraction is None else max(1, math.ceil(fraction * total))
    return np.sort(rng.choice(total, size=size, replace=False))


def bump_estimates(scale="full", count=None) -> Report:
    rows = []
    products = {}
    for inst in bump_instances(scale, count):
        rng = np.random.default_rng(inst["seed"])
        n = inst["n"]
        if inst["product"]:
            if n not in products:
                # one product per resolution keeps the operator norm cached
                a, _ = _bump_space(np.random.default_rng([n, 1]), n)
                b, _ = _bump_space(np.random.default_rng([n, 2]), n)
                products[n] = ProductInstance(a, b)
            prod = products[n]
            flat = _target(rng, n * n, inst["fraction"])
            E = np.zeros(n * n, dtype=bool)
            E[flat] = True
            res = bump_product(prod, E.reshape(n, n), inst["delta"], family=FAMILY)
            target, tau = res.target, res.tau
        else:
            sp, _ = _bump_space(rng, n)
            res = bump_one_param(sp, _target(rng, n, inst["fraction"]), inst["delta"])
            target, tau = res.target, res.tau
        rows.append({**inst, "tau_one": bool(np.all(tau[target] == 1.0)),
                     "tau_range": bool(tau.min() >= 0.0 and tau.max() <= 1.0),
                     "support_ratio": res.measured["support_ratio"], "bmo_ratio": res.measured["bmo_ratio"],
                     "passed": res.report.passed})
    rep = Report("bump_estimates", oracle="maximal-function bumps on seeded instances")
    one = [r for r in rows if not r["product"]]
    two = [r for r in rows if r["product"]]
    rep.check("tau = 1 on E", all(r["tau_one"] for r in rows), anchor="tau = 1 on E exactly")
    rep.check("0 <= tau <= 1", all(r["tau_range"] for r in rows), anchor="tau in [0, 1] exactly")
    rep.check("bump reports", all(r["passed"] for r in rows), anchor="series tail, m <= 1, support identity")
    for label, group, sup_c, bmo_c in (("one-parameter", one, K.BUMP_SUPPORT_ONE, K.BUMP_BMO_ONE),
                                       ("product", two, K.BUMP_SUPPORT_PRODUCT, K.BUMP_BMO_PRODUCT)):
        if not group:
            continue
        s = max(r["support_ratio"] for r in group)
        b = max(r["bmo_ratio"] for r in group)
        rep.check(f"{label}: support ratio", s <= sup_c, s, sup_c, anchor="mu(supp tau) <= C exp(p/delta) mu(E)")
        rep.check(f"{label}: bmo ratio", b <= bmo_c, b, bmo_c, anchor="||tau||_bmo <= C delta")
        per_n = {}
        for r in group:
            per_n[r["n"]] = max(per_n.get(r["n"], 0.0), r["bmo_ratio"])
        ns = sorted(per_n)
        growth = per_n[ns[-1]] / per_n[ns[0]]
        rep.check(f"{label}: no growth in resolution", growth <= K.BUMP_GROWTH, growth, K.BUMP_GROWTH,
                  anchor="finest over coarsest maximal bmo ratio")
        rep.values[f"{label}_per_n"] = {str(k): per_n[k] for k in ns}
        rep.values[f"{label}_support_max"] = s
        rep.values[f"{label}_bmo_max"] = b
    rep.values["instances"] = rows
    return rep


def _cancellative_function(ph: ProductHaar, rng) -> np.ndarray:
    from .haar import CoefficientTable

    keep = np.outer(ph.first.cancellative, ph.second.cancellative)
    # sparse in scale so that both norms see structure
    mask = keep & (rng.random(ph.shape) < 0.3)
    if not mask.any():
        mask.flat[rng.choice(np.flatnonzero(keep))] = True
    C = np.where(mask, rng.standard_normal(ph.shape), 0.0)
    return ph.reconstruct(CoefficientTable(ph, C))


def norm_identities(scale="full") -> Report:
    full = _scale(scale)
    rep = Report("norm_identities", oracle="level-difference route against Haar route")
    diffs = []
    rng = np.random.default_rng(5)
    sizes = (4, 8, 16) if full else (4,)
    for t in range(20 if full else 4):
        n = sizes[t % len(sizes)]
        a, b = grid1d(n) if t % 2 else random_cloud(n, 100 + t), grid1d(n)
        prod = ProductInstance(a, b)
        l1 = random_lattice(a, 0.5, 1000 + t)
        l2 = random_lattice(b, 0.5, 2000 + t)
        ph = ProductHaar.build(prod, l1, l2)
        F = rng.standard_normal(prod.shape)
        fam = realize_family("exhaustive" if n <= 4 else FAMILY, prod, l1, l2)
        u = carleson_bmo_norm(prod, F, ph, fam).values["value"]
        v = dyadic_product_bmo_norm(prod, F, l1, l2, fam).values["value"]
        diffs.append(abs(u - v))
    worst = max(diffs)
    rep.check("dyadic = Carleson", worst <= 1e-10, worst, 1e-10, anchor="two routes to product BMO")
    ratios = []
    for n in ((4, 8) if full else (4,)):
        a, b = grid1d(n), grid1d(n)
        prod = ProductInstance(a, b)
        l1, l2 = _lattice(a), _lattice(b)
        ph = ProductHaar.build(prod, l1, l2)
        fam = realize_family("exhaustive", prod, l1, l2)
        for _ in range(50 if full else 10):
            f = _cancellative_function(ph, rng)
            phi = rng.standard_normal(prod.shape)
            h1 = h1_norm(prod, f, ph).values["value"]
            bmo = carleson_bmo_norm(prod, phi, ph, fam).values["value"]
            ratios.append(abs(pairing(prod, f, phi)) / (h1 * bmo))
    top = max(ratios)
    rep.check("H1-BMO pairing bounded", top <= K.PAIRING, top, K.PAIRING, anchor="|<f, phi>| <= C ||f||_H1 ||phi||_BMO")
    rep.values.update(identity_errors=diffs, pairing_ratios=ratios, pairing_max=top)
    return rep


def _builder(product, seed):
    def build(omega):
        rng = np.random.default_rng([seed, omega])
        l1 = random_lattice(product.factor1, 0.5, omega)
        l2 = random_lattice(product.factor2, 0.5, omega + 7919)
        ph = ProductHaar.build(product, l1, l2)
        f = _cancellative_function(ph, rng)
        return l1, l2, f
    return build


def expectation_average(scale="full") -> Report:
    # the ratio depends on how many lattices are averaged, so tiny keeps 16 of them
    n = 8
    prod = ProductInstance(grid1d(n), grid1d(n))
    omegas = list(range(1, 17))
    builders = range(10 if _scale(scale) else 1)
    ratios = []
    for b in builders:
        r = expectation_bmo(prod, _builder(prod, b), omegas, FAMILY)
        ratios.append(r.values["ratio"])
    top = max(ratios)
    rep = Report("expectation_average", oracle="held-out lattice pairs")
    rep.check("expectation bounded", top <= K.EXPECTATION, top, K.EXPECTATION,
              anchor="||E_omega f^omega||_BMO <= C sup ||f^omega||")
    rep.values.update(ratios=ratios, max_ratio=top, omegas=omegas, n=n)
    return rep


def weak_star(scale="full") -> Report:
    cfg = {"sizes": [128], "schedule": [1, 2, 3, 4, 5]} if _scale(scale) else \
        {"sizes": [16], "schedule": [1, 2, 3], "bmo_family": "sampled:128:seed7"}
    ledger = run_weak_star_experiment(cfg)
    rep = Report("weak_star", oracle="proof-step replay")
    for row in ledger.rows:
        if row["asserted"]:
            k = "" if row["k"] is None else f" k={row['k']}"
            rep.check(f"{row['member']}{k}: {row['check']}", row["passed"], row["value"], row["bound"],
                      anchor=row["anchor"])
    rep.values["ledger"] = ledger.to_dict()
    return rep


def vitali_instances(scale="full") -> list:
    if _scale(scale):
        return [("unit grid1d(64)", unit_grid(64)), ("cloud(64, seed=3)", random_cloud(64, 3)),
                ("snowflake(unit grid1d(32), 2)", snowflake(unit_grid(32), 2.0)),
                ("unit grid1d(16)^2", ProductInstance(unit_grid(16), unit_grid(16)))]
    return [("unit grid1d(16)", unit_grid(16)), ("unit grid1d(8)^2", ProductInstance(unit_grid(8), unit_grid(8)))]


def vitali_covers(scale="full", delta=0.5) -> Report:
    rep = Report("vitali_covers", oracle="greedy selection with exact checks")
    rows = []
    for name, obj in vitali_instances(scale):
        for s in range(20 if _scale(scale) else 4):
            A = random_open_set(obj, s)
            c = vitali_cover(obj, A, delta)
            rows.append({"instance": name, "seed": s, "ratio": c.values["ratio"], "count": c.values["count"],
                         "bound": c.values["doubling_bound"]})
            rep.check(f"{name} seed={s}: disjoint", c.get("disjoint").passed, anchor="pairwise disjoint")
            rep.check(f"{name} seed={s}: contained", c.get("dilates_contain_balls").passed,
                      anchor="every ball inside a dilate")
    top = max(r["ratio"] for r in rows)
    rep.check("dilate-sum ratio", top <= K.VITALI, top, K.VITALI, anchor="sum mu(3 A0 B_i) <= C mu(A)")
    rep.values.update(covers=rows, max_ratio=top, delta=delta)
    return rep


CRITERIA = {
    "lattice": lattice_axioms,
    "haar": haar_exactness,
    "weights": weight_lemmas,
    "bump": bump_estimates,
    "norms": norm_identities,
    "expectation": expectation_average,
    "weakstar": weak_star,
    "vitali": vitali_covers,
}


def run_suite(scale="tiny", only=None) -> dict:
    names = list(CRITERIA) if only is None else list(only)
    return {name: CRITERIA[name](scale) for name in names}
