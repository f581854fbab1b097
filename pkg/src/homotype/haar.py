"""Haar-type orthonormal systems, dyadic averages and martingale differences.

A cube with ``m`` children carries ``m - 1`` mean-zero functions obtained by
Gram-Schmidt on the child indicators: the ``j``-th function compares the
union ``U`` of the first ``j`` children with child ``j+1``,

    h_j = sqrt(W w / (W + w)) * (chi_U / W - chi_J / w),

where ``W = mu(U)`` and ``w = mu(J)``. Together with the normalized indicator
of ``X`` these form an orthonormal basis of ``L^2(mu)``. Functions are stored
as rows of a sparse matrix over the points, so expansion is a single
matrix-vector product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .errors import EmptyCube, NumericalRankLoss, SystemMismatch
from .lattice import DyadicCube, DyadicLattice
from .report import Report
from .space import ProductInstance

COARSE = -1


class HaarSystem:
    """Orthonormal Haar-type basis attached to a dyadic lattice.

    ``keys[r] = (level, cube, idx)`` names row ``r``; the coarse row is
    ``(k_min, COARSE, 0)``. ``child_order`` records the orthonormalization
    order used for every cube.
    """

    def __init__(self, lattice: DyadicLattice, order_seed: int | None = None):
        self.lattice = lattice
        self.space = lattice.space
        self.order_seed = order_seed
        mass = self.space.mass
        n = self.space.n
        rng = None if order_seed is None else np.random.default_rng(order_seed)
        rows, cols, vals = [], [], []
        keys = [(lattice.k_min, COARSE, 0)]
        supp_rows, supp_cols, supp_vals = [], [], []
        total = mass.sum()
        rows.append(np.zeros(n, dtype=int))
        cols.append(np.arange(n))
        vals.append(np.full(n, 1.0 / np.sqrt(total)))
        supp = [(np.arange(n), total)]
        self.child_order = {}
        for q in lattice.iter_cubes():
            kids = list(q.children)
            if len(kids) < 2:
                continue
            if rng is not None:
                kids = [kids[i] for i in rng.permutation(len(kids))]
            self.child_order[(q.level, q.index)] = kids
            members = [lattice.cubes[q.level + 1][c].members for c in kids]
            wts = [float(mass[m].sum()) for m in members]
            if min(wts) <= 0:
                raise NumericalRankLoss(f"child of cube {(q.level, q.index)} has zero mass")
            W = wts[0]
            for j in range(1, len(kids)):
                w = wts[j]
                scale = np.sqrt(W * w / (W + w))
                left = np.concatenate(members[:j])
                r = len(keys)
                keys.append((q.level, q.index, j - 1))
                rows += [np.full(len(left), r), np.full(len(members[j]), r)]
                cols += [left, members[j]]
                vals += [np.full(len(left), scale / W), np.full(len(members[j]), -scale / w)]
                supp.append((q.members, float(mass[q.members].sum())))
                W += w
        self.keys = keys
        self.matrix = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(len(keys), n))
        for r, (m, mq) in enumerate(supp):
            supp_rows.append(np.full(len(m), r))
            supp_cols.append(m)
            supp_vals.append(np.full(len(m), 1.0 / mq))
        # rows chi_Q / mu(Q) for the support cube of each function
        self.support = csr_matrix((np.concatenate(supp_vals),
                                   (np.concatenate(supp_rows), np.concatenate(supp_cols))),
                                  shape=(len(keys), n))
        self.cancellative = np.array([k[1] != COARSE for k in keys])
        self._index = {k: i for i, k in enumerate(keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def row(self, key) -> int:
        return self._index[tuple(key)]

    def function(self, key) -> np.ndarray:
        """Point values of the basis function named ``key``."""
        return self.matrix[self.row(key)].toarray().ravel()

    def gram(self) -> np.ndarray:
        H = self.matrix
        return (H.multiply(self.space.mass[None, :]) @ H.T).toarray()

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.space.n,):
            raise SystemMismatch(f"function of shape {f.shape} does not live on {self.space.n} points")
        return f

    def expand(self, f) -> "CoefficientTable":
        f = self._check(f)
        return CoefficientTable(self, self.matrix @ (f * self.space.mass))

    def reconstruct(self, table: "CoefficientTable") -> np.ndarray:
        if table.system is not self:
            raise SystemMismatch("coefficient table belongs to a different system")
        return self.matrix.T @ table.coeffs

    def square_function(self, f) -> np.ndarray:
        c = self.expand(f).coeffs
        c2 = np.where(self.cancellative, c * c, 0.0)
        return np.sqrt(self.support.T @ c2)


@dataclass
class CoefficientTable:
    """Coefficients ``<f, h>`` in row order of ``system`` (a matrix in the product case)."""

    system: object
    coeffs: np.ndarray

    def __getitem__(self, key):
        if isinstance(self.system, ProductHaar):
            k1, k2 = key
            return self.coeffs[self.system.first.row(k1), self.system.second.row(k2)]
        return self.coeffs[self.system.row(key)]

    def cancellative_energy(self) -> float:
        if isinstance(self.system, ProductHaar):
            m = np.outer(self.system.first.cancellative, self.system.second.cancellative)
        else:
            m = self.system.cancellative
        return float(np.sum(np.where(m, self.coeffs**2, 0.0)))

    def rows(self, tol: float = 0.0):
        """Yield ``(key..., coefficient)`` tuples with ``|coefficient| > tol``."""
        if isinstance(self.system, ProductHaar):
            k1s, k2s = self.system.first.keys, self.system.second.keys
            for i, j in zip(*np.nonzero(np.abs(self.coeffs) > tol)):
                yield (*k1s[i], *k2s[j], float(self.coeffs[i, j]))
        else:
            for i in np.nonzero(np.abs(self.coeffs) > tol)[0]:
                yield (*self.system.keys[i], float(self.coeffs[i]))


class ProductHaar:
    """Tensor Haar system on ``X1 x X2``; functions are arrays of shape ``(n1, n2)``."""

    def __init__(self, product: ProductInstance, first: HaarSystem, second: HaarSystem):
        if first.space is not product.factor1 or second.space is not product.factor2:
            raise SystemMismatch("factor systems do not match the product instance")
        self.product = product
        self.first = first
        self.second = second

    @classmethod
    def build(cls, product: ProductInstance, lat1: DyadicLattice, lat2: DyadicLattice,
              order_seed: int | None = None) -> "ProductHaar":
        s2 = None if order_seed is None else order_seed + 1
        return cls(product, HaarSystem(lat1, order_seed), HaarSystem(lat2, s2))

    @property
    def shape(self):
        return (len(self.first), len(self.second))

    def _check(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if F.shape != self.product.shape:
            raise SystemMismatch(f"function of shape {F.shape} does not live on {self.product.shape}")
        return F

    def expand(self, F) -> CoefficientTable:
        G = self._check(F) * self.product.mass
        left = self.first.matrix @ G
        return CoefficientTable(self, (self.second.matrix @ left.T).T)

    def reconstruct(self, table: CoefficientTable) -> np.ndarray:
        if table.system is not self:
            raise SystemMismatch("coefficient table belongs to a different system")
        left = self.first.matrix.T @ table.coeffs
        return (self.second.matrix.T @ left.T).T

    def square_function(self, F) -> np.ndarray:
        C = self.expand(F).coeffs
        keep = np.outer(self.first.cancellative, self.second.cancellative)
        C2 = np.where(keep, C * C, 0.0)
        inner = self.first.support.T @ C2
        return np.sqrt((self.second.support.T @ inner.T).T)


def build_haar(lattice: DyadicLattice, order_seed: int | None = None) -> HaarSystem:
    return HaarSystem(lattice, order_seed)


GRAM_TOL = 1e-10
CANCEL_TOL = 1e-12
ROUNDTRIP_TOL = 1e-10
PARSEVAL_TOL = 1e-10


def _factor_errors(system: HaarSystem) -> tuple[float, float]:
    G = system.gram()
    gram = float(np.abs(G - np.eye(len(G))).max())
    means = system.matrix @ system.space.mass
    cancel = float(np.abs(means[system.cancellative]).max(initial=0.0))
    return gram, cancel


def verify_haar(system, seed: int = 0) -> Report:
    """Orthonormality, cancellation, round trip and Parseval on a seeded random function."""
    rng = np.random.default_rng(seed)
    if isinstance(system, ProductHaar):
        errs = [_factor_errors(system.first), _factor_errors(system.second)]
        # the tensor Gram matrix is the Kronecker product of the factor Grams
        g1, g2 = errs[0][0], errs[1][0]
        gram = g1 + g2 + g1 * g2
        cancel = max(e[1] for e in errs)
        f = rng.standard_normal(system.product.shape)
        mass = system.product.mass
    else:
        gram, cancel = _factor_errors(system)
        f = rng.standard_normal(system.space.n)
        mass = system.space.mass
    table = system.expand(f)
    back = system.reconstruct(table)
    roundtrip = float(np.abs(back - f).max())
    energy = float(np.sum(f * f * mass))
    parseval = abs(float(np.sum(table.coeffs**2)) - energy) / energy
    rep = Report("verify_haar", oracle="Gram matrix and seeded round trip")
    rep.values.update(gram_error=gram, cancellation=cancel, roundtrip=roundtrip,
                      parseval=parseval, size=len(table.coeffs.ravel()), seed=seed)
    rep.check("orthonormal", gram < GRAM_TOL, gram, GRAM_TOL, anchor="<h, h'> = delta")
    rep.check("cancellation", cancel < CANCEL_TOL, cancel, CANCEL_TOL, anchor="int h dmu = 0")
    rep.check("roundtrip", roundtrip < ROUNDTRIP_TOL, roundtrip, ROUNDTRIP_TOL, anchor="f = sum <f, h> h")
    rep.check("parseval", parseval < PARSEVAL_TOL, parseval, PARSEVAL_TOL, anchor="||f||^2 = sum |<f, h>|^2")
    return rep


# -- averages and differences ----------------------------------------------------


def averaging(f, cube: DyadicCube, mass) -> np.ndarray:
    """``E_Q f``: the mean of ``f`` over ``Q`` times the indicator of ``Q``."""
    f = np.asarray(f, dtype=float)
    m = np.asarray(mass)[cube.members]
    if len(m) == 0:
        raise EmptyCube(f"cube {(cube.level, cube.index)} has no members")
    out = np.zeros_like(f)
    out[cube.members] = np.dot(f[cube.members], m) / m.sum()
    return out


def difference(f, cube: DyadicCube, lattice: DyadicLattice) -> np.ndarray:
    """``Delta_Q f``: sum of child averages minus the average over ``Q``.

    Cubes at the finest level have no children and give the zero function.
    """
    f = np.asarray(f, dtype=float)
    mass = lattice.space.mass
    if cube.level == lattice.k_max:
        return np.zeros_like(f)
    out = -averaging(f, cube, mass)
    for c in cube.children:
        out += averaging(f, lattice.cubes[cube.level + 1][c], mass)
    return out


def level_average(lattice: DyadicLattice, f, k: int, axis: int = 0) -> np.ndarray:
    """``E_k f`` along ``axis``: replace values by their level-``k`` cube means."""
    f = np.asarray(f, dtype=float)
    lab = lattice.labels[k]
    m = lattice.space.mass
    g = np.moveaxis(f, axis, 0)
    nc = len(lattice.cubes[k])
    flat = g.reshape(g.shape[0], -1)
    sums = np.zeros((nc, flat.shape[1]))
    np.add.at(sums, lab, flat * m[:, None])
    cube_mass = np.bincount(lab, weights=m, minlength=nc)
    out = (sums / cube_mass[:, None])[lab].reshape(g.shape)
    return np.moveaxis(out, 0, axis)


def level_difference(lattice: DyadicLattice, f, k: int, axis: int = 0) -> np.ndarray:
    """``Delta_k f = E_{k+1} f - E_k f`` along ``axis`` (zero at the finest level)."""
    f = np.asarray(f, dtype=float)
    if k >= lattice.k_max:
        return np.zeros_like(f)
    return level_average(lattice, f, k + 1, axis) - level_average(lattice, f, k, axis)


def averaging_matrix(lattice: DyadicLattice, k: int) -> csr_matrix:
    """Sparse ``(n, n)`` matrix of ``E_k``."""
    lab = lattice.labels[k]
    m = lattice.space.mass
    cube_mass = np.bincount(lab, weights=m)
    inc = csr_matrix((np.ones(len(lab)), (lab, np.arange(len(lab)))),
                     shape=(len(cube_mass), len(lab)))
    right = inc.multiply(m[None, :])
    left = csr_matrix((1.0 / cube_mass[lab], (np.arange(len(lab)), lab)),
                      shape=(len(lab), len(cube_mass)))
    return (left @ right).tocsr()


def rectangle_difference(F, q1: DyadicCube, q2: DyadicCube, lat1: DyadicLattice,
                         lat2: DyadicLattice) -> np.ndarray:
    """``Delta_{Q1 x Q2} F = (Delta_{Q1} tensor Delta_{Q2}) F``."""
    F = np.asarray(F, dtype=float)
    step = np.column_stack([difference(F[:, j], q1, lat1) for j in range(F.shape[1])])
    return np.vstack([difference(step[i], q2, lat2) for i in range(F.shape[0])])
