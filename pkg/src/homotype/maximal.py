"""Hardy-Littlewood maximal operators evaluated exactly on finite spaces.

Every ball around ``c`` is a prefix of the points sorted by distance from
``c``, so all ball averages around ``c`` come from one cumulative sum. The
uncentered operator takes, for each center, a suffix maximum over prefix
lengths (a prefix of length ``L`` contains ``x`` exactly when
``rank[c, x] < L``) and then a maximum over centers. Rectangles for the
strong operator are products of balls, one per factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix

from .report import Report
from .space import FiniteSpace, ProductInstance

KINDS = ("centered", "uncentered", "strong")


@dataclass
class MaximalProfile:
    values: np.ndarray
    kind: str

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _prefix_averages(space: FiniteSpace, rows: np.ndarray) -> np.ndarray:
    """``out[b, c, L-1]``: average of ``rows[b]`` over the length-``L`` prefix at ``c``.

    Invalid prefixes (not realized as balls) are set to ``-inf``.
    """
    order = space.order
    w = rows[:, order] * space.mass[order][None]
    out = np.cumsum(w, axis=2) / space.cum_mass[None]
    out[:, ~space.valid_end] = -np.inf
    return out


def maximal_centered(space: FiniteSpace, f) -> MaximalProfile:
    f = np.abs(np.asarray(f, dtype=float))
    avg = _prefix_averages(space, f[None])[0]
    return MaximalProfile(avg.max(axis=1), "centered")


@njit(cache=True)
def _uncentered_kernel(G, order, mass, valid):  # pragma: no cover - compiled
    b, n = G.shape
    out = np.full((b, n), -np.inf)
    best_c = np.zeros((b, n), dtype=np.int64)
    best_len = np.zeros((b, n), dtype=np.int64)
    avg = np.empty(n)
    for r in range(b):
        for c in range(n):
            acc = 0.0
            wsum = 0.0
            for L in range(n):
                x = order[c, L]
                acc += G[r, x] * mass[x]
                wsum += mass[x]
                avg[L] = acc / wsum
            best = -np.inf
            arg = 0
            for L in range(n - 1, -1, -1):
                if valid[c, L] and avg[L] > best:
                    best = avg[L]
                    arg = L
                x = order[c, L]
                if best > out[r, x]:
                    out[r, x] = best
                    best_c[r, x] = c
                    best_len[r, x] = arg + 1
    return out, best_c, best_len


@njit(cache=True)
def _max_over_balls(U, ptr, idx, n1):  # pragma: no cover - compiled
    nb, n2 = U.shape
    out = np.full((n1, n2), -np.inf)
    arg = np.zeros((n1, n2), dtype=np.int64)
    for b in range(nb):
        for t in range(ptr[b], ptr[b + 1]):
            x1 = idx[t]
            for x2 in range(n2):
                if U[b, x2] > out[x1, x2]:
                    out[x1, x2] = U[b, x2]
                    arg[x1, x2] = b
    return out, arg


def _uncentered_rows(space: FiniteSpace, rows: np.ndarray, track: bool = False):
    """Uncentered maximal function of each row of ``rows`` (shape ``(b, n)``).

    With ``track`` also returns, per row and point, the center and prefix
    length of a maximizing ball.
    """
    G = np.ascontiguousarray(rows, dtype=float)
    vals, c, L = _uncentered_kernel(G, space.order, space.mass, space.valid_end)
    if track:
        return vals, c, L
    return vals


def maximal_uncentered(space: FiniteSpace, f) -> MaximalProfile:
    f = np.abs(np.asarray(f, dtype=float))
    return MaximalProfile(_uncentered_rows(space, f[None])[0], "uncentered")


def _strong(product: ProductInstance, F, track: bool = False):
    F = np.abs(np.asarray(F, dtype=float))
    s1, s2 = product.factor1, product.factor2
    t1 = s1.ball_table
    A1 = t1.averaging_matrix(s1.mass)
    G = np.asarray(A1 @ F)
    if track:
        U, c2, len2 = _uncentered_rows(s2, G, track=True)
    else:
        U = _uncentered_rows(s2, G)
    mem = csr_matrix(t1.members)
    out, arg = _max_over_balls(U, mem.indptr, mem.indices, s1.n)
    if track:
        cols = np.arange(s2.n)[None, :]
        return out, arg, c2[arg, cols], len2[arg, cols]
    return out


def maximal_strong(product: ProductInstance, F) -> MaximalProfile:
    """Sup of ``|F|`` averages over all ball-pair rectangles containing each point."""
    return MaximalProfile(_strong(product, F), "strong")


def iterate(product: ProductInstance, F, k: int) -> MaximalProfile:
    """``M_s`` applied ``k`` times (``k = 0`` returns ``|F|``)."""
    g = np.abs(np.asarray(F, dtype=float))
    for _ in range(k):
        g = _strong(product, g)
    return MaximalProfile(g, f"strong-iterated({k})")


def maximal(space, f, kind: str = "centered") -> MaximalProfile:
    if kind == "centered":
        return maximal_centered(space, f)
    if kind == "uncentered":
        return maximal_uncentered(space, f)
    if kind == "strong":
        return maximal_strong(space, f)
    raise ValueError(f"unknown maximal kind {kind!r}; expected one of {KINDS}")


# -- operator norm of M_s on L^2 -------------------------------------------------


def _linearized_adjoint(product: ProductInstance, u, b1, c2, len2) -> np.ndarray:
    """Adjoint in ``L^2(mu)`` of the linear map ``v -> avg over R_x of v``.

    ``R_x = B1[b1[x]] x ball(c2[x], len2[x])``. Contributions are grouped by
    (factor-1 ball, factor-2 ball) and pushed back with two incidence products.
    """
    s1, s2 = product.factor1, product.factor2
    t1 = s1.ball_table
    m = product.mass
    # factor-2 balls as (center, length) prefixes
    key2 = c2 * (s2.n + 1) + len2
    uniq2, inv2 = np.unique(key2.ravel(), return_inverse=True)
    cent2, l2 = np.divmod(uniq2, s2.n + 1)
    mem2 = s2.rank[cent2] < l2[:, None]
    mass2 = mem2.astype(float) @ s2.mass
    coef = (m * u).ravel() / (t1.mass[b1.ravel()] * mass2[inv2])
    W = csr_matrix((coef, (b1.ravel(), inv2)), shape=(len(t1), len(uniq2)))
    inner = W @ mem2.astype(float)
    back = t1.members.T.astype(float) @ inner
    return back


def strong_operator_norm(product: ProductInstance, tol: float = 1e-8, max_iter: int = 64) -> Report:
    """Lower estimate of ``||M_s||_{L^2 -> L^2}`` by linearized power ascent.

    At ``v`` the maximizing rectangles define a linear averaging operator
    ``T_v`` with ``M_s v = T_v v``; iterating ``v <- T_v* T_v v`` never
    decreases ``||M_s v|| / ||v||``. Plain power iteration on ``M_s`` itself
    stalls at the constant eigenvector (eigenvalue 1), which understates the
    norm. Several point indicators serve as starts and the best ratio wins.
    """
    cache = getattr(product, "_ms_norm", None)
    if cache is not None and cache[0] == (tol, max_iter):
        return cache[1]
    m = product.mass
    n1, n2 = product.shape

    def norm(v):
        return float(np.sqrt(np.sum(v * v * m)))

    starts = [(n1 // 2, n2 // 2), (0, 0), (n1 - 1, n2 - 1)]
    best, best_start, history = 0.0, None, []
    for s in starts:
        v = np.zeros(product.shape)
        v[s] = 1.0
        v /= norm(v)
        prev = 0.0
        for it in range(max_iter):
            Mv, b1, c2, len2 = _strong(product, v, track=True)
            ratio = norm(Mv) / norm(v)
            if ratio > best:
                best, best_start = ratio, s
            if abs(ratio - prev) <= tol * max(ratio, 1.0):
                break
            prev = ratio
            w = _linearized_adjoint(product, Mv, b1, c2, len2)
            v = w / norm(w)
        history.append({"start": list(s), "ratio": ratio, "iterations": it + 1})
    rep = Report("strong_operator_norm", oracle="linearized power ascent on maximizing rectangles")
    rep.values.update(norm=best, start=list(best_start), runs=history, tol=tol, max_iter=max_iter)
    rep.check("at_least_one", best >= 1.0 - 1e-12, best, 1.0)
    product._ms_norm = ((tol, max_iter), rep)
    return rep


# -- weak type -------------------------------------------------------------------


def verify_weak11(space: FiniteSpace, f, weight, lambdas, kind: str = "centered") -> Report:
    """Ratios ``w({Mf > lam}) / (lam^-1 int |f| w)`` over a grid of levels."""
    f = np.asarray(f, dtype=float)
    w = np.asarray(weight, dtype=float)
    Mf = maximal(space, f, kind).values
    total = float(np.sum(np.abs(f) * w * space.mass))
    lambdas = np.asarray(lambdas, dtype=float)
    ratios = []
    for lam in lambdas:
        level = float(np.sum(w * space.mass * (Mf > lam)))
        ratios.append(0.0 if level == 0 else level * lam / total)
    ratios = np.array(ratios)
    rep = Report("weak11", oracle="exhaustive level-set evaluation")
    rep.values.update(ratios=ratios, lambdas=lambdas, constant=float(ratios.max(initial=0.0)),
                      kind=kind)
    if len(ratios):
        i = int(np.argmax(ratios))
        rep.witness = {"lambda": float(lambdas[i])}
    return rep
