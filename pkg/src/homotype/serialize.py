"""JSON files for spaces, products, lattices, functions and point sets.

Distances are stored as a lower-triangular list of rows (row ``i`` holds
``d(i, 0..i-1)``). Writers emit sorted keys so identical objects give
identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid
from .lattice import DyadicLattice, ReferenceNets, _assemble, _measure
from .report import to_jsonable
from .space import FiniteSpace, ProductInstance


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"missing input file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def _require(doc, keys, what):
    if not isinstance(doc, dict):
        raise ConfigInvalid(f"{what} must be a JSON object")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ConfigInvalid(f"{what} is missing {missing}")


# -- spaces ------------------------------------------------------------------------


def space_to_dict(space: FiniteSpace) -> dict:
    d = space.dist
    return {"points": space.n,
            "dist": [d[i, :i].tolist() for i in range(space.n)],
            "mass": space.mass.tolist(),
            "a0": space._declared_a0,
            "meta": space.meta}


def space_from_dict(doc) -> FiniteSpace:
    _require(doc, ("points", "dist", "mass"), "space file")
    unknown = set(doc) - {"points", "dist", "mass", "a0", "meta"}
    if unknown:
        raise ConfigInvalid(f"space file has unknown keys {sorted(unknown)}")
    n = int(doc["points"])
    rows = doc["dist"]
    if len(rows) != n or any(len(r) != i for i, r in enumerate(rows)):
        raise ConfigInvalid("dist must be a lower-triangular list with row i of length i")
    D = np.zeros((n, n))
    for i, r in enumerate(rows):
        D[i, :i] = r
    D = D + D.T
    return FiniteSpace(D, doc["mass"], a0=doc.get("a0"), meta=doc.get("meta") or {})


def product_to_dict(product: ProductInstance) -> dict:
    return {"factor1": space_to_dict(product.factor1), "factor2": space_to_dict(product.factor2),
            "meta": product.meta}


def product_from_dict(doc) -> ProductInstance:
    _require(doc, ("factor1", "factor2"), "product file")
    return ProductInstance(space_from_dict(doc["factor1"]), space_from_dict(doc["factor2"]),
                           meta=doc.get("meta") or {})


def load_space_or_product(path):
    doc = read_json(path)
    if isinstance(doc, dict) and "factor1" in doc:
        return product_from_dict(doc)
    return space_from_dict(doc)


# -- lattices ------------------------------------------------------------------------


def lattice_to_dict(lat: DyadicLattice) -> dict:
    nets = lat.nets
    return {"space": space_to_dict(lat.space),
            "delta": lat.delta, "k_min": lat.k_min, "k_max": lat.k_max,
            "net_order": nets.order.tolist(), "net_seed": nets.seed, "seed": lat.seed,
            "nets": {str(k): nets.nets[k].tolist() for k in nets.levels},
            "labels": {str(k): lat.labels[k].tolist() for k in nets.levels},
            "cubes": {str(k): [q.members.tolist() for q in lat.cubes[k]] for k in nets.levels},
            "constants": {"c1": lat.c1, "C1": lat.C1, "C1_sandwich": lat.C1_sandwich,
                          "max_children": lat.max_children}}


def lattice_from_dict(doc) -> DyadicLattice:
    _require(doc, ("space", "delta", "k_min", "k_max", "nets", "labels"), "lattice file")
    space = space_from_dict(doc["space"])
    k_min, k_max = int(doc["k_min"]), int(doc["k_max"])
    levels = range(k_min, k_max + 1)
    try:
        net_map = {k: np.asarray(doc["nets"][str(k)], dtype=int) for k in levels}
        labels = {k: np.asarray(doc["labels"][str(k)], dtype=int) for k in levels}
    except KeyError as exc:
        raise ConfigInvalid(f"lattice file lacks level {exc}") from exc
    order = np.asarray(doc.get("net_order", list(range(space.n))), dtype=int)
    nets = ReferenceNets(space, float(doc["delta"]), k_min, k_max, net_map, order, doc.get("net_seed"))
    lat = DyadicLattice(space, nets, _assemble(nets, labels), labels, seed=doc.get("seed"))
    _measure(lat)
    stored = doc.get("cubes")
    if stored is not None:
        for k in levels:
            if [q.members.tolist() for q in lat.cubes[k]] != stored.get(str(k)):
                raise ConfigInvalid(f"stored cubes at level {k} disagree with the labels")
    return lat


# -- functions and point sets ----------------------------------------------------------


def function_from_dict(doc, shape) -> np.ndarray:
    _require(doc, ("values",), "function file")
    v = np.asarray(doc["values"], dtype=float)
    if v.shape != tuple(shape):
        raise ConfigInvalid(f"function has shape {v.shape}, expected {tuple(shape)}")
    return v


def function_to_dict(values, **meta) -> dict:
    return {"values": np.asarray(values).tolist(), **meta}


def points_from_dict(doc, shape) -> np.ndarray:
    """Boolean mask from ``{"points": [...]}`` (indices, or index pairs in a product)."""
    _require(doc, ("points",), "point-set file")
    mask = np.zeros(shape, dtype=bool)
    pts = np.asarray(doc["points"], dtype=int)
    if pts.size == 0:
        return mask
    try:
        if len(shape) == 1:
            mask[pts.ravel()] = True
        else:
            pts = pts.reshape(-1, 2)
            mask[pts[:, 0], pts[:, 1]] = True
    except IndexError as exc:
        raise ConfigInvalid(f"point index out of range: {exc}") from exc
    return mask
