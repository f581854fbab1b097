"""Brute-force reference implementations used as test oracles.

Everything here is written with plain loops over points, radii and subsets,
independently of the vectorized library code. Open balls
``B(x, r) = {y : d(x, y) < r}`` on a finite space are exactly the sets
``{y : d(x, y) <= t}`` for ``t`` a realized distance from ``x``.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def quasi_constant(D):
    n = len(D)
    best = 1.0
    for x in range(n):
        for y in range(n):
            for z in range(n):
                if x != z and D[x][y] + D[y][z] > 0:
                    best = max(best, D[x][z] / (D[x][y] + D[y][z]))
    return best


def open_ball(D, x, r):
    return [y for y in range(len(D)) if D[x][y] < r]


def balls(D):
    """Every distinct ball as a sorted tuple of points."""
    out = set()
    for c in range(len(D)):
        for t in set(D[c]):
            out.add(tuple(y for y in range(len(D)) if D[c][y] <= t))
    return sorted(out)


def doubling(D, mass):
    n = len(D)
    dists = sorted({D[x][y] for x in range(n) for y in range(n) if D[x][y] > 0})
    cand = set(dists) | {d / 2 for d in dists}
    grid = sorted(cand)
    # midpoints cover the open intervals between breakpoints
    grid += [(a + b) / 2 for a, b in zip(grid, grid[1:])]
    best = 1.0
    for x in range(n):
        for r in grid:
            small = sum(mass[y] for y in open_ball(D, x, r))
            big = sum(mass[y] for y in open_ball(D, x, 2 * r))
            best = max(best, big / small)
    return best


def _avg(f, mass, pts):
    return sum(f[p] * mass[p] for p in pts) / sum(mass[p] for p in pts)


def centered_maximal(D, mass, f):
    n = len(D)
    f = [abs(v) for v in f]
    out = []
    for x in range(n):
        out.append(max(_avg(f, mass, [y for y in range(n) if D[x][y] <= t]) for t in set(D[x])))
    return out


def uncentered_maximal(D, mass, f):
    n = len(D)
    f = [abs(v) for v in f]
    out = [0.0] * n
    for B in balls(D):
        a = _avg(f, mass, B)
        for x in B:
            out[x] = max(out[x], a)
    return out


def strong_maximal(D1, m1, D2, m2, F):
    F = np.abs(np.asarray(F, dtype=float))
    out = np.zeros_like(F)
    for B1 in balls(D1):
        for B2 in balls(D2):
            w = sum(m1[i] * m2[j] for i in B1 for j in B2)
            a = sum(F[i, j] * m1[i] * m2[j] for i in B1 for j in B2) / w
            for i in B1:
                for j in B2:
                    out[i, j] = max(out[i, j], a)
    return out


def ap_constant(D, mass, w, p):
    best = 0.0
    for B in balls(D):
        mw = _avg(w, mass, B)
        if p == 1:
            dual = max(1.0 / w[y] for y in B)
        else:
            dual = _avg([v ** (-1.0 / (p - 1)) for v in w], mass, B) ** (p - 1)
        best = max(best, mw * dual)
    return best


def subset_constant(D, mass, w, p):
    best = 0.0
    for B in balls(D):
        muB = sum(mass[y] for y in B)
        wB = sum(w[y] * mass[y] for y in B)
        for r in range(1, len(B) + 1):
            for E in itertools.combinations(B, r):
                muE = sum(mass[y] for y in E)
                wE = sum(w[y] * mass[y] for y in E)
                best = max(best, (muE / muB) ** p * wB / wE)
    return best


def ball_bmo(D, mass, f):
    best = 0.0
    for B in balls(D):
        a = _avg(f, mass, B)
        best = max(best, _avg([abs(f[y] - a) for y in range(len(f))], mass, B))
    return best


def little_bmo(D1, m1, D2, m2, F):
    F = np.asarray(F, dtype=float)
    best = 0.0
    for B1 in balls(D1):
        for B2 in balls(D2):
            w = {(i, j): m1[i] * m2[j] for i in B1 for j in B2}
            tot = sum(w.values())
            a = sum(F[k] * v for k, v in w.items()) / tot
            best = max(best, sum(abs(F[k] - a) * v for k, v in w.items()) / tot)
    return best


def weak11_ratios(D, mass, f, w, lambdas):
    M = centered_maximal(D, mass, f)
    total = sum(abs(f[i]) * w[i] * mass[i] for i in range(len(f)))
    out = []
    for lam in lambdas:
        level = sum(w[i] * mass[i] for i in range(len(f)) if M[i] > lam)
        out.append(level * lam / total if level else 0.0)
    return out


# -- dyadic objects from member lists ---------------------------------------------


def cube_lists(lat):
    """``[(level, members, children_member_lists)]`` for every cube with children."""
    out = []
    for q in lat.iter_cubes():
        if q.level < lat.k_max and len(q.children) > 1:
            kids = [list(lat.cubes[q.level + 1][c].members) for c in q.children]
            out.append((q.level, list(q.members), kids))
    return out


def _delta_1d(f, mass, members, kids):
    """``Delta_Q f`` by direct averaging."""
    g = np.zeros(len(f))
    mq = sum(mass[y] for y in members)
    aq = sum(f[y] * mass[y] for y in members) / mq
    for K in kids:
        mk = sum(mass[y] for y in K)
        ak = sum(f[y] * mass[y] for y in K) / mk
        for y in K:
            g[y] = ak - aq
    return g


def rectangle_energies(lat1, lat2, F):
    """``{(members1, members2): ||Delta_R F||_2^2}`` over cancellative rectangles."""
    m1, m2 = lat1.space.mass, lat2.space.mass
    F = np.asarray(F, dtype=float)
    out = {}
    for _, q1, k1 in cube_lists(lat1):
        step = np.column_stack([_delta_1d(F[:, j], m1, q1, k1) for j in range(F.shape[1])])
        for _, q2, k2 in cube_lists(lat2):
            G = np.vstack([_delta_1d(step[i], m2, q2, k2) for i in range(F.shape[0])])
            key = (tuple(q1), tuple(q2))
            out[key] = out.get(key, 0.0) + float(np.sum(G * G * np.outer(m1, m2)))
    return out


def carleson_bmo(lat1, lat2, F, masks):
    """Max over the given sets of ``sqrt(sum_{R in Omega} ||Delta_R F||^2 / mu(Omega))``."""
    m1, m2 = lat1.space.mass, lat2.space.mass
    en = rectangle_energies(lat1, lat2, F)
    best = 0.0
    for S in masks:
        tot = sum(e for (a, b), e in en.items() if all(S[i, j] for i in a for j in b))
        mu = sum(m1[i] * m2[j] for i in range(len(m1)) for j in range(len(m2)) if S[i, j])
        best = max(best, math.sqrt(tot / mu))
    return best


def h1_norm(lat1, lat2, F):
    """``int (sum_{R containing x} ||Delta_R F||^2 / mu(R))^{1/2}``."""
    m1, m2 = lat1.space.mass, lat2.space.mass
    en = rectangle_energies(lat1, lat2, F)
    S = np.zeros((len(m1), len(m2)))
    for (a, b), e in en.items():
        mu = sum(m1[i] for i in a) * sum(m2[j] for j in b)
        for i in a:
            for j in b:
                S[i, j] += e / mu
    return float(np.sum(np.sqrt(S) * np.outer(m1, m2)))


def rectangle_unions(lat1, lat2):
    """Every union of at most two dyadic rectangles, as boolean masks."""
    def distinct(lat):
        seen = []
        for q in lat.iter_cubes():
            s = tuple(int(v) for v in q.members)
            if s not in seen:
                seen.append(s)
        return seen

    n1, n2 = lat1.space.n, lat2.space.n
    rects = []
    for a in distinct(lat1):
        for b in distinct(lat2):
            S = np.zeros((n1, n2), dtype=bool)
            for i in a:
                for j in b:
                    S[i, j] = True
            rects.append(S)
    out = list(rects)
    for s, t in itertools.combinations(range(len(rects)), 2):
        out.append(rects[s] | rects[t])
    return out
