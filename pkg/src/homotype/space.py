"""Finite quasi-metric measure spaces.

A :class:`FiniteSpace` is a dense symmetric distance table plus positive point
masses. Points are the integers ``0..n-1``. Balls are open,
``B(x, r) = {y : d(x, y) < r}``, so on a finite space every ball is a prefix
of the points sorted by distance from its center; the sorted tables that make
this cheap are cached on the instance.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    InvalidParams,
    NonSymmetricDistance,
    UnknownPoint,
    ZeroDistanceDistinctPoints,
)
from .report import Report

MAX_POINTS = 2**14


class FiniteSpace:
    """Immutable finite quasi-metric space with a positive measure.

    Parameters
    ----------
    dist : (n, n) array_like
        Symmetric distance table with zero diagonal.
    mass : (n,) array_like, optional
        Measure of each singleton; unit masses by default.
    a0 : float, optional
        Declared quasi-triangle constant. When omitted the minimal constant is
        measured by an exhaustive triple scan on first access.
    coords : array_like, optional
        Embedding coordinates, kept only for generators and plotting.
    meta : dict, optional
        Free-form provenance (generator kind, seed, parameters).
    validate : bool
        Check axioms (1) and (2) eagerly and raise on violation.
    """

    def __init__(self, dist, mass=None, a0=None, coords=None, meta=None, validate=True):
        dist = np.array(dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] == 0:
            raise InvalidParams("distance table must be a non-empty square matrix")
        n = dist.shape[0]
        if n > MAX_POINTS:
            raise InvalidParams(f"spaces are capped at {MAX_POINTS} points, got {n}")
        if mass is None:
            mass = np.ones(n)
        mass = np.array(mass, dtype=float).reshape(-1)
        if mass.shape != (n,):
            raise InvalidParams("mass must have one entry per point")
        if not np.all(np.isfinite(mass)) or np.any(mass <= 0):
            raise InvalidParams("point masses must be finite and strictly positive")
        if not np.all(np.isfinite(dist)):
            raise InvalidParams("distances must be finite")
        dist.setflags(write=False)
        mass.setflags(write=False)
        self.dist = dist
        self.mass = mass
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.meta = dict(meta or {})
        self._declared_a0 = None if a0 is None else float(a0)
        if validate:
            check_axioms(dist)

    def __repr__(self):
        kind = self.meta.get("kind", "custom")
        return f"FiniteSpace(n={self.n}, kind={kind!r})"

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def points(self) -> range:
        return range(self.n)

    @cached_property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max())

    @cached_property
    def min_distance(self) -> float:
        """Smallest positive distance (``inf`` for a single point)."""
        if self.n == 1:
            return np.inf
        off = self.dist[~np.eye(self.n, dtype=bool)]
        return float(off.min())

    @cached_property
    def a0(self) -> float:
        if self._declared_a0 is not None:
            return self._declared_a0
        return _min_quasi_constant(self.dist)[0]

    # -- sorted-ball machinery -------------------------------------------------

    @cached_property
    def order(self) -> np.ndarray:
        """``order[c]`` lists all points sorted by distance from ``c`` (stable)."""
        return np.argsort(self.dist, axis=1, kind="stable")

    @cached_property
    def sorted_dist(self) -> np.ndarray:
        return np.take_along_axis(self.dist, self.order, axis=1)

    @cached_property
    def rank(self) -> np.ndarray:
        """``rank[c, x]`` is the position of ``x`` in ``order[c]``."""
        r = np.empty_like(self.order)
        rows = np.arange(self.n)[:, None]
        r[rows, self.order] = np.arange(self.n)[None, :]
        return r

    @cached_property
    def valid_end(self) -> np.ndarray:
        """``valid_end[c, L-1]`` is True when the first ``L`` points of ``order[c]`` form a ball."""
        sd = self.sorted_dist
        v = np.ones_like(sd, dtype=bool)
        v[:, :-1] = sd[:, 1:] > sd[:, :-1]
        return v

    @cached_property
    def cum_mass(self) -> np.ndarray:
        return np.cumsum(self.mass[self.order], axis=1)

    @cached_property
    def unit_ball_volume(self) -> np.ndarray:
        return np.array([ball_mass(self, x, 1.0) for x in self.points])

    @cached_property
    def ball_table(self) -> "BallTable":
        return BallTable.build(self)

    def ball_radius(self, c: int, length: int) -> float:
        """A realized radius whose ball around ``c`` is the prefix of given length."""
        sd = self.sorted_dist[c]
        if length < self.n:
            return float(sd[length])
        return float(sd[-1]) * 2.0 + 1.0


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: frozenset

    def __contains__(self, y) -> bool:
        return y in self.members

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class BallTable:
    """All distinct balls of a space, deduplicated by member set.

    ``members`` is a boolean (n_balls, n) incidence matrix; ``center`` and
    ``radius`` give one realization of each ball.
    """

    members: np.ndarray
    center: np.ndarray
    radius: np.ndarray
    mass: np.ndarray

    @classmethod
    def build(cls, space: FiniteSpace) -> "BallTable":
        cs, ls = np.nonzero(space.valid_end)
        lengths = ls + 1
        members = space.rank[cs] < lengths[:, None]
        packed = np.packbits(members, axis=1)
        _, first = np.unique(packed, axis=0, return_index=True)
        first = np.sort(first)
        members = members[first]
        centers = cs[first]
        lens = lengths[first]
        radii = np.array([space.ball_radius(c, L) for c, L in zip(centers, lens)])
        mass = members.astype(float) @ space.mass
        return cls(members=members, center=centers, radius=radii, mass=mass)

    def __len__(self) -> int:
        return self.members.shape[0]

    def averaging_matrix(self, mass) -> csr_matrix:
        """Sparse matrix whose rows average a function over each ball."""
        w = self.members * (np.asarray(mass)[None, :] / self.mass[:, None])
        return csr_matrix(w)


class ProductInstance:
    """Product of two finite spaces with the product measure.

    Functions on the product are 2-D arrays of shape ``(n1, n2)``. No product
    distance is defined; geometry is always taken factor by factor.
    """

    def __init__(self, factor1: FiniteSpace, factor2: FiniteSpace, meta=None):
        self.factor1 = factor1
        self.factor2 = factor2
        self.meta = dict(meta or {})
        m = np.outer(factor1.mass, factor2.mass)
        m.setflags(write=False)
        self.mass = m

    def __repr__(self):
        return f"ProductInstance({self.factor1!r}, {self.factor2!r})"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.factor1.n, self.factor2.n)

    @property
    def size(self) -> int:
        return self.factor1.n * self.factor2.n

    @cached_property
    def total_mass(self) -> float:
        return self.factor1.total_mass * self.factor2.total_mass

    @cached_property
    def a0(self) -> float:
        return max(self.factor1.a0, self.factor2.a0)

    def rectangle_mass(self, members1, members2) -> float:
        return float(self.factor1.mass[members1].sum() * self.factor2.mass[members2].sum())

    def measure(self, mask) -> float:
        return float((np.asarray(mask, dtype=bool) * self.mass).sum())

    def integrate(self, f) -> float:
        return float((np.asarray(f) * self.mass).sum())


# -- axioms --------------------------------------------------------------------


def check_axioms(dist: np.ndarray) -> None:
    """Raise on violations of symmetry, nonnegativity or point separation."""
    if np.any(dist < 0):
        i, j = np.argwhere(dist < 0)[0]
        raise NonSymmetricDistance(f"negative distance d({i},{j})={dist[i, j]}")
    if not np.array_equal(dist, dist.T):
        i, j = np.argwhere(dist != dist.T)[0]
        raise NonSymmetricDistance(f"d({i},{j})={dist[i, j]} != d({j},{i})={dist[j, i]}")
    if np.any(np.diag(dist) != 0):
        i = int(np.argwhere(np.diag(dist) != 0)[0][0])
        raise ZeroDistanceDistinctPoints(f"d({i},{i})={dist[i, i]} must be 0")
    off = dist + np.eye(dist.shape[0])
    if np.any(off == 0):
        i, j = np.argwhere(off == 0)[0]
        raise ZeroDistanceDistinctPoints(f"distinct points {i},{j} at distance 0")


def _min_quasi_constant(dist: np.ndarray):
    """Exhaustive scan for the smallest A0 with d(x,y) <= A0 (d(x,z) + d(z,y)).

    Returns ``(a0, (x, y, z))``; O(n^3) time, O(n^2) memory.
    """
    n = dist.shape[0]
    if n == 1:
        return 1.0, None
    best, witness = 1.0, None
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for z in range(n):
            denom = dist[:, z][:, None] + dist[z][None, :]
            ratio = np.where(off, dist / denom, 0.0)
            k = int(np.argmax(ratio))
            if ratio.flat[k] > best:
                best = float(ratio.flat[k])
                witness = (k // n, k % n, z)
    return best, witness


def verify_quasi_metric(space: FiniteSpace) -> Report:
    """Check axioms (1)-(2) and measure the minimal quasi-triangle constant."""
    check_axioms(space.dist)
    a0, witness = _min_quasi_constant(space.dist)
    rep = Report("quasi_metric", oracle="exhaustive triple scan")
    rep.values["a0"] = a0
    rep.values["n"] = space.n
    rep.witness = witness
    rep.check("symmetric", True, anchor="symmetry")
    rep.check("separation", True, anchor="zero distance iff equal")
    if space._declared_a0 is not None:
        rep.check("declared_a0", a0 <= space._declared_a0 * (1 + 1e-12), a0,
                  space._declared_a0, witness, anchor="quasi-triangle inequality")
    else:
        rep.check("quasi_triangle", True, a0, witness=witness,
                  anchor="quasi-triangle inequality")
    return rep


# -- balls and doubling --------------------------------------------------------


def _point(space: FiniteSpace, x) -> int:
    if not isinstance(x, (int, np.integer)) or not 0 <= int(x) < space.n:
        raise UnknownPoint(x)
    return int(x)


def ball(space: FiniteSpace, x, r: float) -> Ball:
    x = _point(space, x)
    if not r > 0:
        raise InvalidParams("ball radius must be positive")
    members = np.nonzero(space.dist[x] < r)[0]
    return Ball(x, float(r), frozenset(int(y) for y in members))


def ball_mass(space: FiniteSpace, x: int, r: float) -> float:
    return float(space.mass[space.dist[x] < r].sum())


def doubling_constant(space: FiniteSpace) -> Report:
    """Exact sup of mu(B(x,2r)) / mu(B(x,r)) over centers and radii.

    Both ball masses are step functions of r that only jump at realized
    distances d(x, y) (for B(x, r)) and at d(x, y)/2 (for B(x, 2r)), and they
    are constant on each interval (b_i, b_{i+1}]. Evaluating at every
    breakpoint therefore covers all radii.
    """
    rep = Report("doubling", oracle="exhaustive breakpoint scan")
    if space.n == 1:
        rep.values["c_mu"] = 1.0
        rep.witness = {"x": 0, "r": 1.0}
        rep.check("doubling", True, 1.0)
        return rep
    best, wit = 1.0, None
    for x in space.points:
        sd = space.sorted_dist[x]
        cm = space.cum_mass[x]
        pos = sd[sd > 0]
        radii = np.unique(np.concatenate([pos, pos / 2.0]))
        small = cm[np.searchsorted(sd, radii, side="left") - 1]
        big = cm[np.searchsorted(sd, 2.0 * radii, side="left") - 1]
        ratio = big / small
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, wit = float(ratio[k]), {"x": x, "r": float(radii[k])}
    rep.values["c_mu"] = best
    rep.witness = wit
    rep.check("doubling", np.isfinite(best), best, witness=wit, anchor="doubling condition")
    return rep


# -- generators ----------------------------------------------------------------


def _euclid(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def _masses(n, mass, rng):
    if mass == "random":
        return rng.uniform(0.5, 2.0, size=n)
    return np.full(n, float(mass))


def grid1d(n: int, spacing: float = 1.0, mass=1.0) -> FiniteSpace:
    if n < 1:
        raise InvalidParams("grid1d needs n >= 1")
    if spacing <= 0:
        raise InvalidParams("spacing must be positive")
    x = np.arange(n) * float(spacing)
    d = np.abs(x[:, None] - x[None, :])
    return FiniteSpace(d, np.full(n, float(mass)), a0=1.0, coords=x[:, None],
                       meta={"kind": "grid1d", "n": n, "spacing": spacing, "mass": mass})


def grid2d(nx: int, ny: int | None = None, spacing: float = 1.0, metric: str = "sup",
           mass=1.0) -> FiniteSpace:
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise InvalidParams("grid2d needs positive sides")
    if metric not in ("sup", "euclid"):
        raise InvalidParams(f"unknown grid2d metric {metric!r}")
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    coords = np.stack([ii.ravel(), jj.ravel()], axis=1) * float(spacing)
    if metric == "sup":
        d = np.abs(coords[:, None, :] - coords[None, :, :]).max(-1)
    else:
        d = _euclid(coords)
    return FiniteSpace(d, np.full(nx * ny, float(mass)), a0=1.0, coords=coords,
                       meta={"kind": "grid2d", "nx": nx, "ny": ny, "metric": metric,
                             "spacing": spacing, "mass": mass})


def snowflake(base: FiniteSpace, theta: float) -> FiniteSpace:
    """The space (X, d**theta); a quasi-metric for theta > 1."""
    if theta <= 0:
        raise InvalidParams("snowflake exponent must be positive")
    meta = {"kind": "snowflake", "theta": theta, "base": dict(base.meta)}
    return FiniteSpace(base.dist**theta, base.mass, coords=base.coords, meta=meta)


def random_cloud(n: int, seed: int, dim: int = 2, mass="unit") -> FiniteSpace:
    if n < 1 or dim < 1:
        raise InvalidParams("cloud needs n >= 1 and dim >= 1")
    rng = np.random.default_rng(seed)
    coords = rng.random((n, dim))
    masses = _masses(n, 1.0 if mass == "unit" else mass, rng)
    return FiniteSpace(_euclid(coords), masses, a0=1.0, coords=coords,
                       meta={"kind": "cloud", "n": n, "dim": dim, "seed": seed, "mass": mass})


def graph_space(n: int, seed: int, p: float = 0.15, w_min: float = 1.0,
                w_max: float = 3.0) -> FiniteSpace:
    """Shortest-path metric of a connected random weighted graph."""
    if n < 1 or not 0 <= p <= 1 or not 0 < w_min <= w_max:
        raise InvalidParams("bad graph parameters")
    rng = np.random.default_rng(seed)
    w = np.zeros((n, n))
    # a random Hamiltonian path keeps the graph connected
    perm = rng.permutation(n)
    for a, b in zip(perm[:-1], perm[1:]):
        w[a, b] = w[b, a] = rng.uniform(w_min, w_max)
    extra = np.triu(rng.random((n, n)) < p, 1)
    vals = rng.uniform(w_min, w_max, size=(n, n))
    w = np.where(extra & (w == 0), vals, w)
    w = np.triu(w, 1)
    w = w + w.T
    d = shortest_path(csr_matrix(w), directed=False)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return FiniteSpace(d, np.ones(n), a0=1.0,
                       meta={"kind": "graph", "n": n, "seed": seed, "p": p})


GENERATORS = ("grid1d", "grid2d", "snowflake", "graph", "cloud")


def generate(kind: str, params: dict | None = None, seed: int | None = 0) -> FiniteSpace:
    """Build a space from a generator name and parameter dict.

    ``snowflake`` takes ``{"base": {"kind": ..., ...}, "theta": t}``; the base
    is generated with the same seed.
    """
    params = dict(params or {})
    seed = 0 if seed is None else int(seed)
    try:
        if kind == "grid1d":
            sp = grid1d(int(params.pop("n")), **params)
        elif kind == "grid2d":
            n = params.pop("n", None)
            nx = int(params.pop("nx", n))
            ny = params.pop("ny", None)
            sp = grid2d(nx, None if ny is None else int(ny), **params)
        elif kind == "snowflake":
            base = dict(params.pop("base", {"kind": "grid1d", "n": params.pop("n", 8)}))
            theta = float(params.pop("theta"))
            if params:
                raise InvalidParams(f"unexpected snowflake params {sorted(params)}")
            sp = snowflake(generate(base.pop("kind"), base, seed), theta)
        elif kind == "cloud":
            sp = random_cloud(int(params.pop("n")), seed, **params)
        elif kind == "graph":
            sp = graph_space(int(params.pop("n")), seed, **params)
        else:
            raise InvalidParams(f"unknown space kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise InvalidParams(f"bad parameters for {kind}: {exc}") from exc
    sp.meta.setdefault("seed", seed)
    return sp
