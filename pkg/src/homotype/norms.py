"""BMO-type norms, H^1 norms, VMO defects, pairings and lattice averaging.

Open sets in the product are replaced by explicit families of point sets
(see :class:`OpenSetFamily`), so every product BMO value is a lower bound
relative to the family in use. Unions of dyadic rectangles are the natural
choice: the Carleson sum only sees which dyadic rectangles an open set
contains, so a union of rectangles is as strong as any set containing
exactly those rectangles.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFamily, InconsistentSpaces
from .haar import HaarSystem, ProductHaar, level_average, level_difference
from .lattice import DyadicLattice, random_lattice
from .report import Report
from .space import FiniteSpace, ProductInstance

_SET_BATCH = 64
_BALL_CHUNK = 1 << 22
EXHAUSTIVE_UNION = 2


# -- ball BMO --------------------------------------------------------------------


def bmo_ball_norm(space: FiniteSpace, f) -> Report:
    """``sup_B mu(B)^-1 int_B |f - f_B|`` over every distinct ball."""
    f = np.asarray(f, dtype=float)
    t = space.ball_table
    m = space.mass
    step = max(1, _BALL_CHUNK // space.n)
    best, arg = -1.0, 0
    for a in range(0, len(t), step):
        mem = t.members[a:a + step]
        means = (mem @ (f * m)) / t.mass[a:a + step]
        osc = (mem * np.abs(f[None, :] - means[:, None])) @ m / t.mass[a:a + step]
        i = int(np.argmax(osc))
        if osc[i] > best:
            best, arg = float(osc[i]), a + i
    rep = Report("bmo_ball_norm", oracle="exhaustive ball oscillation")
    rep.values["value"] = max(best, 0.0)
    rep.witness = {"center": int(t.center[arg]), "radius": float(t.radius[arg])}
    return rep


# -- open-set families -----------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """Descriptor of an open-set family: ``exhaustive``, ``sampled:BUDGET:seedS`` or ``levelsets``."""

    kind: str
    budget: int = 0
    seed: int = 0
    union: int = EXHAUSTIVE_UNION

    @classmethod
    def parse(cls, text) -> "FamilySpec":
        if isinstance(text, FamilySpec):
            return text
        text = str(text).strip()
        if text == "exhaustive":
            return cls("exhaustive")
        if text == "levelsets":
            return cls("levelsets")
        m = re.fullmatch(r"sampled:(\d+):seed(\d+)", text)
        if m:
            return cls("sampled", int(m.group(1)), int(m.group(2)))
        raise ValueError(f"unknown family descriptor {text!r}")

    def __str__(self) -> str:
        if self.kind == "sampled":
            return f"sampled:{self.budget}:seed{self.seed}"
        return self.kind


@dataclass
class OpenSetFamily:
    """Realized family: boolean masks of shape ``(K, n1, n2)`` with descriptions."""

    spec: FamilySpec
    masks: np.ndarray
    labels: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def descriptor(self) -> str:
        return str(self.spec)


def distinct_cubes(lat: DyadicLattice) -> list:
    """Member arrays of the lattice cubes with duplicates (across levels) removed."""
    seen, out = set(), []
    for q in lat.iter_cubes():
        key = q.members.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(q.members)
    return out


def _rect_masks(product, cubes1, cubes2, pairs) -> np.ndarray:
    masks = np.zeros((len(pairs), *product.shape), dtype=bool)
    for t, (i, j) in enumerate(pairs):
        masks[t][np.ix_(cubes1[i], cubes2[j])] = True
    return masks


def realize_family(spec, product: ProductInstance, lat1: DyadicLattice, lat2: DyadicLattice,
                   f=None, lambdas=None) -> OpenSetFamily:
    """Build the concrete sets of a family for a lattice pair.

    ``exhaustive``: every union of at most two dyadic rectangles.
    ``sampled``: every single rectangle if they fit in half the budget
    (otherwise a seeded sample), topped up with seeded random pairs; if the
    exhaustive family fits in the budget it is returned instead.
    ``levelsets``: ``{|f| > lam}`` for each ``lam`` (default: quantiles of ``|f|``).
    """
    spec = FamilySpec.parse(spec)
    if spec.kind == "levelsets":
        if f is None:
            raise ValueError("levelsets family needs a function")
        g = np.abs(np.asarray(f, dtype=float))
        if lambdas is None:
            lambdas = np.unique(np.quantile(g, [0.0, 0.5, 0.75, 0.9, 0.99]))
        masks = np.array([g > lam for lam in lambdas])
        keep = masks.reshape(len(masks), -1).any(axis=1)
        fam = OpenSetFamily(spec, masks[keep], [{"lambda": float(l)} for l, k in zip(lambdas, keep) if k])
        if len(fam) == 0:
            raise EmptyFamily("every level set is empty")
        return fam
    c1, c2 = distinct_cubes(lat1), distinct_cubes(lat2)
    rects = [(i, j) for i in range(len(c1)) for j in range(len(c2))]
    R = len(rects)
    n_exh = R + R * (R - 1) // 2
    if spec.kind == "exhaustive" or (spec.kind == "sampled" and n_exh <= spec.budget):
        chosen = [(a,) for a in range(R)] + [(a, b) for a in range(R) for b in range(a + 1, R)]
    else:
        rng = np.random.default_rng(spec.seed)
        half = spec.budget // 2
        if R <= half:
            singles = list(range(R))
        else:
            singles = sorted(rng.choice(R, size=half, replace=False).tolist())
        chosen = [(a,) for a in singles]
        seen = set()
        while len(chosen) < spec.budget:
            a, b = sorted(rng.choice(R, size=2, replace=False).tolist())
            if (a, b) not in seen:
                seen.add((a, b))
                chosen.append((a, b))
    base = _rect_masks(product, c1, c2, rects)
    masks = np.array([np.logical_or.reduce(base[list(u)]) for u in chosen])
    labels = [[list(rects[a]) for a in u] for u in chosen]
    return OpenSetFamily(spec, masks, labels)


# -- Carleson route (Haar coefficients) ------------------------------------------


def _cube_ids(lat: DyadicLattice) -> dict:
    ids, g = {}, 0
    for k in lat.levels:
        for q in lat.cubes[k]:
            ids[(k, q.index)] = g
            g += 1
    return ids


class _Pooler:
    """AND-pools a boolean array over every cube of a lattice, finest level first."""

    def __init__(self, lat: DyadicLattice):
        self.lat = lat
        self.leaf = lat.centers(lat.k_max)
        self.steps = []
        for k in range(lat.k_max - 1, lat.k_min - 1, -1):
            parents = np.array([q.parent for q in lat.cubes[k + 1]])
            perm = np.argsort(parents, kind="stable")
            starts = np.searchsorted(parents[perm], np.arange(len(lat.cubes[k])))
            self.steps.append((perm, starts))

    def all_within(self, values: np.ndarray) -> np.ndarray:
        """``values[..., x]`` -> ``out[..., cube]``: whether all members are True.

        Output cubes are ordered as in :func:`_cube_ids` (coarsest level first).
        """
        cur = values[..., self.leaf]
        levels = [cur]
        for perm, starts in self.steps:
            cur = np.logical_and.reduceat(cur[..., perm], starts, axis=-1)
            levels.append(cur)
        return np.concatenate(levels[::-1], axis=-1)


def _row_to_cube(system: HaarSystem) -> np.ndarray:
    ids = _cube_ids(system.lattice)
    out = np.full(len(system), -1)
    for r, (k, c, _) in enumerate(system.keys):
        if c >= 0:
            out[r] = ids[(k, c)]
    return out


def carleson_energies(ph: ProductHaar, F) -> np.ndarray:
    """``e[Q1, Q2] = sum_j <F, h_{Q1 x Q2, j}>^2`` over cancellative tensor functions."""
    C = ph.expand(F).coeffs
    r1, r2 = _row_to_cube(ph.first), _row_to_cube(ph.second)
    n1 = len(_cube_ids(ph.first.lattice))
    n2 = len(_cube_ids(ph.second.lattice))
    keep1, keep2 = r1 >= 0, r2 >= 0
    C2 = (C * C)[np.ix_(keep1, keep2)]
    e = np.zeros((n1, n2))
    tmp = np.zeros((n1, C2.shape[1]))
    np.add.at(tmp, r1[keep1], C2)
    np.add.at(e.T, r2[keep2], tmp.T)
    return e


def _family_ratios(energies, pool1, pool2, product, family: OpenSetFamily) -> np.ndarray:
    out = np.empty(len(family))
    mu = np.array([product.measure(m) for m in family.masks])
    for a in range(0, len(family), _SET_BATCH):
        masks = family.masks[a:a + _SET_BATCH]
        inner = pool2.all_within(masks)                      # (b, n1, c2)
        both = pool1.all_within(np.swapaxes(inner, 1, 2))    # (b, c2, c1)
        out[a:a + len(masks)] = np.einsum("bji,ij->b", both, energies)
    return np.sqrt(np.maximum(out, 0.0) / mu)


def _norm_report(name, ratios, family, oracle) -> Report:
    if len(ratios) == 0:
        raise EmptyFamily("open-set family is empty")
    i = int(np.argmax(ratios))
    rep = Report(name, oracle=oracle)
    rep.values.update(value=float(ratios[i]), family=family.descriptor, sets=len(family))
    rep.witness = {"set": i, "label": family.labels[i] if family.labels else None}
    return rep


def carleson_ratios(product, F, ph: ProductHaar, family: OpenSetFamily) -> np.ndarray:
    e = carleson_energies(ph, F)
    return _family_ratios(e, _Pooler(ph.first.lattice), _Pooler(ph.second.lattice), product, family)


def carleson_bmo_norm(product: ProductInstance, F, ph: ProductHaar, family) -> Report:
    """``sup_Omega (mu(Omega)^-1 sum_{R in Omega} |<F, h_R>|^2)^(1/2)`` over a family."""
    if not isinstance(family, OpenSetFamily):
        family = realize_family(family, product, ph.first.lattice, ph.second.lattice, F)
    if len(family) == 0:
        raise EmptyFamily("open-set family is empty")
    return _norm_report("carleson_bmo_norm", carleson_ratios(product, F, ph, family), family,
                        "Haar coefficients and cube containment pooling")


# -- dyadic route (averaging operators) ------------------------------------------


def dyadic_product_bmo_norm(product: ProductInstance, F, lat1: DyadicLattice,
                            lat2: DyadicLattice, family) -> Report:
    """Same supremum with energies ``||Delta_{Q1} Delta_{Q2} F||_2^2`` from averaging operators.

    Containment of a rectangle in a set is read off the double level average
    of the set's indicator (it equals 1 exactly on contained rectangles).
    This route shares nothing with the Haar coefficients.
    """
    if not isinstance(family, OpenSetFamily):
        family = realize_family(family, product, lat1, lat2, F)
    if len(family) == 0:
        raise EmptyFamily("open-set family is empty")
    F = np.asarray(F, dtype=float)
    m = product.mass
    mu = np.array([product.measure(s) for s in family.masks])
    ind = family.masks.astype(float)
    total = np.zeros(len(family))
    for k1 in range(lat1.k_min, lat1.k_max):
        D1 = level_difference(lat1, F, k1, axis=0)
        A1 = level_average(lat1, np.moveaxis(ind, 0, -1), k1, axis=0)
        lab1 = lat1.labels[k1]
        for k2 in range(lat2.k_min, lat2.k_max):
            G = level_difference(lat2, D1, k2, axis=1)
            lab2 = lat2.labels[k2]
            nc1, nc2 = len(lat1.cubes[k1]), len(lat2.cubes[k2])
            energy = np.zeros((nc1, nc2))
            np.add.at(energy, (lab1[:, None], lab2[None, :]), G * G * m)
            avg = level_average(lat2, A1, k2, axis=1)          # (n1, n2, K)
            c1 = lat1.centers(k1)
            c2 = lat2.centers(k2)
            inside = avg[np.ix_(c1, c2)] >= 1.0 - 1e-9          # (nc1, nc2, K)
            total += np.einsum("ijk,ij->k", inside, energy)
    ratios = np.sqrt(np.maximum(total, 0.0) / mu)
    return _norm_report("dyadic_product_bmo_norm", ratios, family,
                        "martingale differences and indicator averages")


# -- little bmo ------------------------------------------------------------------


def _ball_lists(space: FiniteSpace) -> list:
    t = space.ball_table
    return [np.nonzero(t.members[b])[0] for b in range(len(t))]


def rectangle_family(product: ProductInstance, family="exhaustive") -> tuple[list, str]:
    """Ball-pair rectangles: all of them, or ``sampled:BUDGET:seedS`` drawn uniformly."""
    spec = FamilySpec.parse(family)
    b1, b2 = _ball_lists(product.factor1), _ball_lists(product.factor2)
    total = len(b1) * len(b2)
    if spec.kind == "exhaustive" or (spec.kind == "sampled" and total <= spec.budget):
        pairs = [(i, j) for i in range(len(b1)) for j in range(len(b2))]
    elif spec.kind == "sampled":
        rng = np.random.default_rng(spec.seed)
        flat = np.sort(rng.choice(total, size=spec.budget, replace=False))
        pairs = [(int(t // len(b2)), int(t % len(b2))) for t in flat]
    else:
        raise ValueError(f"family {spec} does not apply to rectangles")
    return [(b1[i], b2[j]) for i, j in pairs], str(spec)


def little_bmo_norm(product: ProductInstance, F, family="exhaustive") -> Report:
    """``sup_R mu(R)^-1 int_R |F - F_R|`` over ball-pair rectangles ``R``."""
    F = np.asarray(F, dtype=float)
    rects, desc = rectangle_family(product, family)
    m1, m2 = product.factor1.mass, product.factor2.mass
    best, arg = 0.0, 0
    for t, (i, j) in enumerate(rects):
        w = np.outer(m1[i], m2[j])
        sub = F[np.ix_(i, j)]
        mass = w.sum()
        mean = (sub * w).sum() / mass
        osc = (np.abs(sub - mean) * w).sum() / mass
        if osc > best:
            best, arg = float(osc), t
    rep = Report("little_bmo_norm", oracle="scan over ball-pair rectangles")
    rep.values.update(value=best, family=desc, rectangles=len(rects))
    i, j = rects[arg]
    rep.witness = {"rows": i.tolist(), "cols": j.tolist()}
    return rep


MAX_CLOSURE_FACTOR = 2.0


def little_bmo_max_closure(product: ProductInstance, F, G, family="exhaustive") -> Report:
    """Little-bmo norm of ``max(F, G)`` against ``2 (||F|| + ||G||)``.

    Comparing ``max(F, G)`` with the constant ``max(F_R, G_R)`` and using
    ``|max(a, b) - max(c, d)| <= |a - c| + |b - d|`` bounds the oscillation on
    each rectangle by the sum of the two oscillations; replacing the best
    constant by the mean costs the factor 2.
    """
    nf = little_bmo_norm(product, F, family).values["value"]
    ng = little_bmo_norm(product, G, family).values["value"]
    nm = little_bmo_norm(product, np.maximum(F, G), family).values["value"]
    bound = MAX_CLOSURE_FACTOR * (nf + ng)
    rep = Report("little_bmo_max_closure", oracle="three rectangle scans")
    rep.values.update(f=nf, g=ng, max=nm, bound=bound, ratio=nm / max(nf, ng) if max(nf, ng) > 0 else 0.0)
    rep.check("max_closure", nm <= bound * (1 + 1e-12) + 1e-15, nm, bound,
              anchor="max of two bmo functions stays in bmo")
    return rep


# -- H^1, pairing ----------------------------------------------------------------


def h1_norm(space_or_product, f, system) -> Report:
    """``||S f||_{L^1}`` with the Haar square function (one or two parameters)."""
    f = np.asarray(f, dtype=float)
    rep = Report("h1_norm", oracle="square function")
    if isinstance(space_or_product, ProductInstance):
        m = space_or_product.mass
        row = (f * space_or_product.factor2.mass[None, :]).sum(axis=1)
        col = (f * space_or_product.factor1.mass[:, None]).sum(axis=0)
        scale = max(np.abs(f).max(initial=0.0), 1.0)
        mean_zero = np.abs(row).max() <= 1e-9 * scale and np.abs(col).max() <= 1e-9 * scale
    else:
        m = space_or_product.mass
        mean_zero = abs(float(np.dot(f, m))) <= 1e-9 * max(np.abs(f).max(initial=0.0), 1.0)
    if not mean_zero:
        warnings.warn("function is not mean-zero in each parameter; "
                      "the coarse terms are excluded from the square function", stacklevel=2)
    S = system.square_function(f)
    rep.values.update(value=float(np.sum(S * m)), mean_zero=bool(mean_zero))
    return rep


def pairing(space_or_product, f, phi) -> float:
    """``int f phi dmu``."""
    m = space_or_product.mass
    return float(np.sum(np.asarray(f, dtype=float) * np.asarray(phi, dtype=float) * m))


# -- VMO defects -----------------------------------------------------------------


def _projection_diameters(product: ProductInstance, masks) -> np.ndarray:
    d1, d2 = product.factor1.dist, product.factor2.dist
    out = np.empty(len(masks))
    for t, s in enumerate(masks):
        rows = np.nonzero(s.any(axis=1))[0]
        cols = np.nonzero(s.any(axis=0))[0]
        out[t] = max(d1[np.ix_(rows, rows)].max(), d2[np.ix_(cols, cols)].max())
    return out


def vmo_defects(product: ProductInstance, F, ph: ProductHaar, family, delta_grid, N_grid,
                basepoints=((0, 0),)) -> Report:
    """Carleson ratios restricted to small, large and far-away sets of a family.

    (a) sets with measure below each ``delta``; (b) sets whose diameter (the
    larger projection diameter) exceeds ``N``; (c) sets disjoint from
    ``B(x1, N) x B(x2, N)`` for some basepoint. Empty suprema are reported as 0.
    """
    if not isinstance(family, OpenSetFamily):
        family = realize_family(family, product, ph.first.lattice, ph.second.lattice, F)
    ratios = carleson_ratios(product, F, ph, family)
    mu = np.array([product.measure(s) for s in family.masks])
    diam = _projection_diameters(product, family.masks)
    d1, d2 = product.factor1.dist, product.factor2.dist

    def sup(sel):
        return float(ratios[sel].max()) if np.any(sel) else 0.0

    small = [sup(mu < d) for d in delta_grid]
    large = [sup(diam > N) for N in N_grid]
    far = []
    for N in N_grid:
        sel = np.zeros(len(family), dtype=bool)
        for x1, x2 in basepoints:
            box = np.outer(d1[x1] < N, d2[x2] < N)
            sel |= ~np.any(family.masks & box[None], axis=(1, 2))
        far.append(sup(sel))
    rep = Report("vmo_defects", oracle="Carleson ratios over a family")
    rep.values.update(small=small, large=large, far=far, delta_grid=list(delta_grid),
                      N_grid=list(N_grid), family=family.descriptor,
                      basepoints=[list(b) for b in basepoints])
    return rep


# -- expectation over random lattices --------------------------------------------


def expectation_bmo(product: ProductInstance, builder, omega_seeds, family,
                    heldout_seeds=None) -> Report:
    """Average ``f^omega`` over random lattice pairs and measure it on held-out lattices.

    ``builder(seed) -> (lat1, lat2, f)``. Each ``f^omega`` is measured in the
    dyadic product BMO of its own lattice pair; the average is measured with
    the Carleson norm, maximized over lattice pairs drawn from
    ``heldout_seeds`` (none of which is used in the average).
    """
    omega_seeds = [int(s) for s in omega_seeds]
    if heldout_seeds is None:
        rng = np.random.default_rng([17, *omega_seeds])
        heldout_seeds = []
        while len(heldout_seeds) < 4:
            s = int(rng.integers(2**31))
            if s not in omega_seeds:
                heldout_seeds.append(s)
    if set(heldout_seeds) & set(omega_seeds):
        raise ValueError("held-out seeds must differ from the averaged seeds")
    total = np.zeros(product.shape)
    dyadic, delta = [], None
    for s in omega_seeds:
        lat1, lat2, f = builder(s)
        if lat1.space is not product.factor1 or lat2.space is not product.factor2:
            raise InconsistentSpaces(f"builder lattices for seed {s} live on other spaces")
        f = np.asarray(f, dtype=float)
        if f.shape != product.shape:
            raise InconsistentSpaces(f"builder function for seed {s} has shape {f.shape}")
        dyadic.append(dyadic_product_bmo_norm(product, f, lat1, lat2, family).values["value"])
        total += f
        delta = (lat1.delta, lat2.delta)
    mean = total / len(omega_seeds)
    held = []
    for h in heldout_seeds:
        l1 = random_lattice(product.factor1, delta[0], h)
        l2 = random_lattice(product.factor2, delta[1], h + 1)
        ph = ProductHaar.build(product, l1, l2)
        held.append(carleson_bmo_norm(product, mean, ph, family).values["value"])
    cd = max(dyadic)
    rep = Report("expectation_bmo", oracle="held-out lattice Carleson norm")
    rep.values.update(dyadic=dyadic, max_dyadic=cd, heldout=held, heldout_norm=max(held),
                      ratio=float(max(held) / cd) if cd > 0 else 0.0,
                      omega_seeds=omega_seeds, heldout_seeds=list(heldout_seeds),
                      family=str(FamilySpec.parse(family)) if not isinstance(family, OpenSetFamily)
                      else family.descriptor)
    rep.values["average"] = mean
    return rep
