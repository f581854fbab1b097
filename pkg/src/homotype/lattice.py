"""Nested reference nets and dyadic cube systems on finite spaces.

Levels run over ``k_min..k_max``. Level ``k`` works at scale ``delta**k``: the
coarsest level holds the single cube ``X`` and the finest level holds
singletons, so every sum over levels is exact once truncated to this range.

Cubes are built as a tree of centers. Each new net point at level ``k`` is
attached to its nearest level ``k-1`` net point (ties broken by a seeded
order), and a cube is the set of finest-level descendants of its center.
Nesting, disjointness and covering hold by construction; the ball sandwich
and ancestry properties are measured and then verified exhaustively.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .errors import InvalidDelta, PropertyViolation
from .report import Report
from .space import FiniteSpace

_CHUNK = 1 << 22


class AdmissibilityWarning(UserWarning):
    """delta is larger than the bound under which the continuum construction is proved."""


def admissible_delta(a0: float) -> float:
    return 1e-3 * a0**-10


# -- reference nets ------------------------------------------------------------


@dataclass
class ReferenceNets:
    space: FiniteSpace
    delta: float
    k_min: int
    k_max: int
    nets: dict
    order: np.ndarray
    seed: int | None = None

    @property
    def levels(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def scale(self, k: int) -> float:
        return self.delta ** k

    def new_points(self, k: int) -> np.ndarray:
        """Points of the level ``k+1`` net that are not in the level ``k`` net."""
        if k >= self.k_max:
            return np.empty(0, dtype=int)
        return self.nets[k + 1][len(self.nets[k]):]

    def verify(self) -> Report:
        return verify_nets(self)


def _check_delta(delta) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    return delta


def level_range(space: FiniteSpace, delta: float) -> tuple[int, int]:
    """``(k_min, k_max)``: delta**k_min > A0 diam(X) and delta**k_max < min distance."""
    if space.n == 1:
        return 0, 0
    lo = space.min_distance
    hi = space.a0 * space.diameter
    ld = np.log(delta)
    k_max = int(np.floor(np.log(lo) / ld)) + 1
    while delta ** (k_max - 1) < lo:
        k_max -= 1
    while delta ** k_max >= lo:
        k_max += 1
    k_min = int(np.ceil(np.log(hi) / ld)) - 1
    while delta ** (k_min + 1) > hi:
        k_min += 1
    while delta ** k_min <= hi:
        k_min -= 1
    return k_min, k_max


def build_reference_nets(space: FiniteSpace, delta: float, seed: int | None = None) -> ReferenceNets:
    """Greedy maximal nested nets, inserting points in a seeded order.

    ``seed=None`` inserts points in index order.
    """
    delta = _check_delta(delta)
    if delta > admissible_delta(space.a0):
        warnings.warn(
            f"delta={delta} exceeds 1e-3 * A0**-10 = {admissible_delta(space.a0):.3g}; "
            "the finite construction is still verified exhaustively",
            AdmissibilityWarning,
            stacklevel=2,
        )
    n = space.n
    if seed is None:
        order = np.arange(n)
    else:
        order = np.random.default_rng(seed).permutation(n)
    return _greedy_nets(space, delta, order, seed)


def _greedy_nets(space, delta, order, seed) -> ReferenceNets:
    k_min, k_max = level_range(space, delta)
    D = space.dist
    first = int(order[0])
    current = [first]
    in_net = np.zeros(space.n, dtype=bool)
    in_net[first] = True
    mind = D[first].copy()
    nets = {k_min: np.array(current)}
    for k in range(k_min + 1, k_max + 1):
        r = delta ** k
        for p in order:
            if not in_net[p] and mind[p] >= r:
                current.append(int(p))
                in_net[p] = True
                np.minimum(mind, D[p], out=mind)
        nets[k] = np.array(current)
    return ReferenceNets(space, delta, k_min, k_max, nets, np.asarray(order), seed)


def verify_nets(nets: ReferenceNets) -> Report:
    """Exhaustive separation, covering and nesting checks."""
    sp = nets.space
    D = sp.dist
    rep = Report("reference_nets", oracle="exhaustive pairwise scan")
    sep_ok, cov_ok, nest_ok = True, True, True
    sep_w = cov_w = nest_w = None
    worst_cov = 0.0
    prev = None
    for k in nets.levels:
        net = nets.nets[k]
        s = nets.scale(k)
        sub = D[np.ix_(net, net)]
        off = sub + np.diag(np.full(len(net), np.inf))
        if len(net) > 1 and off.min() < s:
            i, j = np.unravel_index(np.argmin(off), off.shape)
            sep_ok, sep_w = False, {"level": k, "x": int(net[i]), "y": int(net[j])}
        cover = D[net].min(axis=0)
        worst_cov = max(worst_cov, float(cover.max() / s))
        if cover.max() >= 2 * sp.a0 * s:
            cov_ok, cov_w = False, {"level": k, "x": int(np.argmax(cover))}
        if prev is not None and not np.all(np.isin(prev, net)):
            nest_ok, nest_w = False, {"level": k}
        prev = net
    finest = nets.nets[nets.k_max]
    rep.values["covering_ratio"] = worst_cov
    rep.values["net_sizes"] = {int(k): len(nets.nets[k]) for k in nets.levels}
    rep.check("separation", sep_ok, witness=sep_w, anchor="net separation")
    rep.check("covering", cov_ok, worst_cov, 2 * sp.a0, cov_w, anchor="net covering")
    rep.check("nesting", nest_ok, witness=nest_w, anchor="net nesting")
    rep.check("finest_is_all", len(finest) == sp.n, len(finest), sp.n)
    return rep


# -- dyadic cubes --------------------------------------------------------------


@dataclass
class DyadicCube:
    level: int
    index: int
    center: int
    members: np.ndarray
    parent: int | None = None
    children: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, x) -> bool:
        i = np.searchsorted(self.members, x)
        return i < len(self.members) and self.members[i] == x


@dataclass
class DyadicLattice:
    space: FiniteSpace
    nets: ReferenceNets
    cubes: dict
    labels: dict
    c1: float = 0.0
    C1: float = 0.0
    C1_sandwich: float = 0.0
    max_children: int = 0
    seed: int | None = None
    tie_order: np.ndarray | None = None

    @property
    def delta(self) -> float:
        return self.nets.delta

    @property
    def k_min(self) -> int:
        return self.nets.k_min

    @property
    def k_max(self) -> int:
        return self.nets.k_max

    @property
    def levels(self) -> range:
        return self.nets.levels

    def scale(self, k: int) -> float:
        return self.nets.scale(k)

    def centers(self, k: int) -> np.ndarray:
        return np.array([q.center for q in self.cubes[k]])

    def cube_of(self, x: int, k: int) -> DyadicCube:
        return self.cubes[k][self.labels[k][x]]

    def iter_cubes(self):
        for k in self.levels:
            yield from self.cubes[k]

    @property
    def n_cubes(self) -> int:
        return sum(len(self.cubes[k]) for k in self.levels)

    def incidence(self, k: int) -> csr_matrix:
        """Sparse (n_cubes_k, n) membership matrix built from the member lists."""
        rows, cols = [], []
        for q in self.cubes[k]:
            rows.append(np.full(len(q.members), q.index))
            cols.append(q.members)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        return csr_matrix((np.ones(len(rows)), (rows, cols)),
                          shape=(len(self.cubes[k]), self.space.n))

    def cube_mass(self, cube: DyadicCube) -> float:
        return float(self.space.mass[cube.members].sum())


def _tie_rank(nets: ReferenceNets, seed) -> np.ndarray:
    n = nets.space.n
    if seed is None:
        return np.arange(n)
    return np.random.default_rng(seed).permutation(n)


def _tree_labels(nets: ReferenceNets, tie_rank: np.ndarray) -> dict:
    """Point -> cube index at every level, from the nearest-parent tree of centers."""
    D = nets.space.dist
    n = nets.space.n
    parent_of = {}
    for k in range(nets.k_min + 1, nets.k_max + 1):
        prev, cur = nets.nets[k - 1], nets.nets[k]
        sub = D[np.ix_(cur, prev)]
        near = sub.min(axis=1, keepdims=True)
        keyed = np.where(sub == near, tie_rank[prev][None, :], np.iinfo(np.int64).max)
        pmap = np.full(n, -1)
        pmap[cur] = prev[np.argmin(keyed, axis=1)]
        parent_of[k] = pmap
    center = np.arange(n)
    labels = {}
    for k in range(nets.k_max, nets.k_min - 1, -1):
        pos = np.full(n, -1)
        pos[nets.nets[k]] = np.arange(len(nets.nets[k]))
        labels[k] = pos[center]
        if k > nets.k_min:
            center = parent_of[k][center]
    return labels


def _assemble(nets: ReferenceNets, labels: dict) -> dict:
    cubes = {}
    for k in nets.levels:
        lab = labels[k]
        order = np.argsort(lab, kind="stable")
        counts = np.bincount(lab, minlength=len(nets.nets[k]))
        groups = np.split(order, np.cumsum(counts)[:-1])
        cubes[k] = [DyadicCube(k, i, int(c), np.sort(g))
                    for i, (c, g) in enumerate(zip(nets.nets[k], groups))]
    for k in range(nets.k_min + 1, nets.k_max + 1):
        for q in cubes[k]:
            p = int(labels[k - 1][q.center])
            q.parent = p
            cubes[k - 1][p].children.append(q.index)
    return cubes


def _rows(space, centers, scale):
    """Yield ``(slice, D[centers[slice]] / scale)`` in memory-bounded chunks."""
    step = max(1, _CHUNK // max(space.n, 1))
    for a in range(0, len(centers), step):
        yield slice(a, a + step), space.dist[centers[a:a + step]] / scale


def _sandwich_constants(lat: DyadicLattice) -> tuple[float, float, dict, dict]:
    sp = lat.space
    c1, C1 = np.inf, 0.0
    wl = wu = None
    for k in lat.levels:
        cent = lat.centers(k)
        lab = lat.labels[k]
        for sl, R in _rows(sp, cent, lat.scale(k)):
            idx = np.arange(sl.start, sl.start + R.shape[0])
            inside = lab[None, :] == idx[:, None]
            up = np.where(inside, R, -np.inf)
            i, j = np.unravel_index(np.argmax(up), up.shape)
            if up[i, j] > C1:
                C1, wu = float(up[i, j]), {"level": k, "cube": int(idx[i]), "point": int(j)}
            lo = np.where(inside, np.inf, R)
            i, j = np.unravel_index(np.argmin(lo), lo.shape)
            if lo[i, j] < c1:
                c1, wl = float(lo[i, j]), {"level": k, "cube": int(idx[i]), "point": int(j)}
    return c1, C1, wl, wu


def _ancestry_failure(lat: DyadicLattice, C: float):
    """Largest ancestor ratio among points that break ancestry containment at C.

    Balls are taken closed at ratio ``C`` (equivalently open at any larger
    constant): the child ball {d(x_Q, y) <= C delta^k} must sit inside the
    ancestor ball {d(x_P, y) <= C delta^l}. Returns ``(None, None)`` when
    containment holds for every cube/ancestor pair.
    """
    sp = lat.space
    worst, wit = None, None
    for k in range(lat.k_min + 1, lat.k_max + 1):
        cent = lat.centers(k)
        for sl, A in _rows(sp, cent, lat.scale(k)):
            inner = A <= C
            ck = cent[sl]
            for l in range(lat.k_min, k):
                anc = lat.labels[l][ck]
                cl = lat.centers(l)[anc]
                B = sp.dist[cl] / lat.scale(l)
                fail = inner & (B > C)
                if fail.any():
                    b = B[fail]
                    j = int(np.argmax(b))
                    if worst is None or b[j] > worst:
                        rows, cols = np.nonzero(fail)
                        worst = float(b[j])
                        wit = {"level": k, "cube": int(sl.start + rows[j]),
                               "ancestor_level": l, "point": int(cols[j])}
    return worst, wit


def _joint_upper_constant(lat: DyadicLattice, start: float) -> float:
    C = start
    for _ in range(10_000):
        worst, _ = _ancestry_failure(lat, C)
        if worst is None:
            return C
        C = worst
    raise PropertyViolation("ancestry constant search did not terminate")


def _measure(lat: DyadicLattice) -> None:
    c1, C1s, _, _ = _sandwich_constants(lat)
    lat.c1 = c1
    lat.C1_sandwich = C1s
    lat.C1 = _joint_upper_constant(lat, C1s)
    lat.max_children = max((len(q.children) for q in lat.iter_cubes()), default=0)


def sandwich_bound(space: FiniteSpace) -> float:
    """Admissibility cap on the measured upper sandwich constant: 2 A0**2."""
    return 2.0 * space.a0**2


def build_lattice(nets: ReferenceNets, seed: int | None = None, *, verify: bool = True,
                  max_retries: int = 8) -> DyadicLattice:
    """Dyadic cubes from reference nets.

    ``seed`` permutes the tie-break order among equidistant parents
    (``None`` prefers the lowest point index, which yields the standard
    dyadic intervals on evenly spaced grids). When verification fails the
    construction is retried with fresh tie-break orders before raising
    :class:`PropertyViolation`.
    """
    attempt_seed = seed
    first_failure = None
    for attempt in range(max_retries + 1):
        tie = _tie_rank(nets, attempt_seed)
        labels = _tree_labels(nets, tie)
        lat = DyadicLattice(nets.space, nets, _assemble(nets, labels), labels,
                            seed=attempt_seed, tie_order=tie)
        _measure(lat)
        if not verify:
            return lat
        rep = verify_lattice(lat)
        if rep.passed:
            lat.report = rep
            return lat
        if first_failure is None:
            first_failure = rep.failures()[0]
        base = 0 if seed is None else int(seed)
        attempt_seed = int(np.random.default_rng([base, attempt + 1]).integers(2**31))
    raise PropertyViolation(f"lattice property {first_failure.name} failed",
                            witness=first_failure.witness)


def random_lattice(space: FiniteSpace, delta: float, omega_seed: int, *,
                   verify: bool = True) -> DyadicLattice:
    """Lattice indexed by a point of the probability space: seeded net order and ties."""
    rng = np.random.default_rng(omega_seed)
    order = rng.permutation(space.n)
    tie_seed = int(rng.integers(2**31))
    delta = _check_delta(delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        nets = _greedy_nets(space, delta, order, omega_seed)
    return build_lattice(nets, tie_seed, verify=verify)


# -- verification --------------------------------------------------------------


def verify_lattice(lat: DyadicLattice) -> Report:
    """Exhaustive check of the five cube properties, from the member lists.

    Property names: ``nesting`` (either contained or disjoint across levels),
    ``disjoint`` (same level), ``covering`` (each level covers X),
    ``sandwich`` (center balls) and ``ancestry`` (center balls along ancestry).
    """
    sp = lat.space
    n = sp.n
    rep = Report("dyadic_lattice", oracle="exhaustive scan of member lists")
    rep.values.update(c1=lat.c1, C1=lat.C1, C1_sandwich=lat.C1_sandwich,
                      max_children=lat.max_children, a0=sp.a0,
                      C1_bound=sandwich_bound(sp), C1_linear_bound=2 * sp.a0,
                      levels=[lat.k_min, lat.k_max], delta=lat.delta)

    nets_rep = verify_nets(lat.nets)
    for c in nets_rep.checks:
        rep.check("nets_" + c.name, c.passed, c.value, c.bound, c.witness, c.anchor)

    inc = {k: lat.incidence(k) for k in lat.levels}
    sizes = {k: np.asarray(inc[k].sum(axis=1)).ravel() for k in lat.levels}

    # same-level disjointness and covering
    dis_w = cov_w = None
    for k in lat.levels:
        col = np.asarray(inc[k].sum(axis=0)).ravel()
        if dis_w is None and col.max() > 1:
            x = int(np.argmax(col))
            owners = [q.index for q in lat.cubes[k] if x in q]
            dis_w = {"level": k, "point": x, "cubes": owners}
        if cov_w is None and col.min() < 1:
            cov_w = {"level": k, "point": int(np.argmin(col))}
    rep.check("disjoint", dis_w is None, witness=dis_w, anchor="same-level disjointness")
    rep.check("covering", cov_w is None, witness=cov_w, anchor="level covering")

    # nesting: every pair of cubes at levels l <= k is nested or disjoint
    nest_w = None
    for k in lat.levels:
        for l in range(lat.k_min, k):
            inter = (inc[k] @ inc[l].T).tocoo()
            bad = inter.data != sizes[k][inter.row]
            if bad.any():
                i = int(np.argmax(bad))
                nest_w = {"level": k, "cube": int(inter.row[i]),
                          "other_level": l, "other": int(inter.col[i])}
                break
        if nest_w:
            break
    rep.check("nesting", nest_w is None, witness=nest_w, anchor="nested or disjoint")

    # parent/child links partition each cube
    link_w = None
    for k in range(lat.k_min, lat.k_max):
        for q in lat.cubes[k]:
            kids = [lat.cubes[k + 1][i] for i in q.children]
            merged = np.sort(np.concatenate([c.members for c in kids])) if kids else np.empty(0, int)
            if not np.array_equal(merged, q.members) or any(c.parent != q.index for c in kids):
                link_w = {"level": k, "cube": q.index}
                break
        if link_w:
            break
    rep.check("children_partition", link_w is None, witness=link_w, anchor="children partition")

    # sandwich with the lattice's stated constants
    sand_w = None
    D = sp.dist
    for k in lat.levels:
        s = lat.scale(k)
        for q in lat.cubes[k]:
            r = D[q.center] / s
            mem = np.zeros(n, dtype=bool)
            mem[q.members] = True
            if np.any((r < lat.c1) & ~mem):
                sand_w = {"level": k, "cube": q.index, "side": "inner"}
            elif np.any(mem & (r > lat.C1)):
                sand_w = {"level": k, "cube": q.index, "side": "outer"}
            if sand_w:
                break
        if sand_w:
            break
    rep.check("sandwich", sand_w is None and lat.c1 > 0, [lat.c1, lat.C1],
              witness=sand_w, anchor="center-ball sandwich")
    rep.check("sandwich_bound", lat.C1 <= sandwich_bound(sp), lat.C1, sandwich_bound(sp),
              anchor="upper sandwich constant cap")

    # ancestry ball containment, ancestors read off the member lists
    anc_w = None
    for k in range(lat.k_min + 1, lat.k_max + 1):
        for l in range(lat.k_min, k):
            inter = (inc[k] @ inc[l].T).tocoo()
            full = inter.data == sizes[k][inter.row]
            for i, a in zip(inter.row[full], inter.col[full]):
                child = lat.cubes[k][i].center
                anc = lat.cubes[l][a].center
                inner = D[child] / lat.scale(k) <= lat.C1
                outer = D[anc] / lat.scale(l) <= lat.C1
                if np.any(inner & ~outer):
                    anc_w = {"level": k, "cube": int(i), "ancestor_level": l, "ancestor": int(a)}
                    break
            if anc_w:
                break
        if anc_w:
            break
    rep.check("ancestry", anc_w is None, witness=anc_w, anchor="ancestry ball containment")
    rep.check("max_children", lat.max_children >= 1 or lat.k_min == lat.k_max, lat.max_children)
    return rep


# -- smallness -----------------------------------------------------------------


def _omega_seeds(seed: int, trials: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2**31, size=trials)


def random_labels(space: FiniteSpace, delta: float, omega_seed: int) -> dict:
    """Cube labels of the random lattice for one seed, without measuring constants."""
    rng = np.random.default_rng(omega_seed)
    order = rng.permutation(space.n)
    tie_seed = int(rng.integers(2**31))
    nets = _greedy_nets(space, _check_delta(delta), order, omega_seed)
    return _tree_labels(nets, _tie_rank(nets, tie_seed)), nets


def separation_curve(space: FiniteSpace, delta: float, x: int, x_star: int, trials: int,
                     seed: int) -> Report:
    """Monte-Carlo frequency, for every level k, that x and x* lie in different cubes.

    All levels share the same sampled lattices, so the curve is nondecreasing
    in k lattice by lattice.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    k_min, k_max = level_range(space, delta)
    ks = np.arange(k_min, k_max + 1)
    hits = np.zeros(len(ks))
    for s in _omega_seeds(seed, trials):
        labels, _ = random_labels(space, delta, int(s))
        hits += np.array([labels[k][x] != labels[k][x_star] for k in ks])
    p = hits / trials
    rep = Report("separation_curve", oracle="Monte-Carlo over random lattices")
    rep.values.update(levels=ks, probability=p, stderr=np.sqrt(p * (1 - p) / trials),
                      trials=trials, distance=float(space.dist[x, x_star]))
    return rep


def estimate_separation_probability(space: FiniteSpace, delta: float, k: int, x: int,
                                    x_star: int, trials: int, seed: int,
                                    pairs=None) -> Report:
    """Frequency over ``trials`` random lattices that x, x* are in different level-k cubes.

    With ``pairs`` (a list of point pairs, or ``"auto"``) the report also
    carries a least-squares fit of ``P ~ C (d / delta**k)**eta`` across pairs
    and levels.
    """
    delta = _check_delta(delta)
    curve = separation_curve(space, delta, x, x_star, trials, seed)
    ks = curve.values["levels"]
    if k < ks[0]:
        p = 0.0
    elif k > ks[-1]:
        p = 0.0 if x == x_star else 1.0
    else:
        p = float(curve.values["probability"][k - ks[0]])
    rep = Report("separation_probability", oracle="Monte-Carlo over random lattices")
    rep.values.update(probability=p, stderr=float(np.sqrt(p * (1 - p) / trials)),
                      level=k, trials=trials, distance=float(space.dist[x, x_star]),
                      ratio=float(space.dist[x, x_star] / delta**k))
    if pairs is not None:
        rep.values["fit"] = fit_smallness(space, delta, pairs, trials, seed)
    return rep


def _auto_pairs(space: FiniteSpace, count: int = 6) -> list:
    x = 0
    far = space.order[x]
    picks = np.unique(np.linspace(1, space.n - 1, count).astype(int))
    return [(x, int(far[i])) for i in picks]


def fit_smallness(space: FiniteSpace, delta: float, pairs, trials: int, seed: int) -> dict:
    """Fit the separation bound shape ``C (d/delta^k)^eta`` on points with 0 < P < 1."""
    if isinstance(pairs, str):
        pairs = _auto_pairs(space)
    xs, ys = [], []
    for i, (a, b) in enumerate(pairs):
        curve = separation_curve(space, delta, a, b, trials, seed + i)
        d = space.dist[a, b]
        for k, p in zip(curve.values["levels"], curve.values["probability"]):
            if 0 < p < 1:
                xs.append(np.log(d / delta**k))
                ys.append(np.log(p))
    if len(xs) < 2:
        return {"C": float("nan"), "eta": float("nan"), "points": len(xs)}
    eta, logc = np.polyfit(xs, ys, 1)
    return {"C": float(np.exp(logc)), "eta": float(eta), "points": len(xs)}
