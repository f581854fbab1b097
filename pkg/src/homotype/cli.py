"""Command-line entry point: ``homotype <verb> <action> ...``.

Every run writes one report file plus ``<report>.manifest.json`` echoing the
resolved configuration. Outputs are staged in memory and written only after
the command finishes, so a configuration error leaves no partial files.

Exit status: 0 when every asserted check passes, 1 when one fails (the
report carries the witness), 2 on configuration or input errors.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bump import bump_one_param, bump_product
from .errors import ConfigInvalid, HomotypeError, MissingReport, PropertyViolation
from .haar import HaarSystem, ProductHaar
from .harness import run_weak_star_experiment
from .lattice import (
    AdmissibilityWarning, build_lattice, build_reference_nets,
    fit_smallness, random_lattice, separation_curve, verify_lattice,
)
from .maximal import KINDS, maximal
from .norms import (
    FamilySpec, bmo_ball_norm, carleson_bmo_norm, dyadic_product_bmo_norm, h1_norm, little_bmo_norm,
    realize_family, vmo_defects,
)
from .report import Report, to_jsonable
from .serialize import (
    dumps, function_from_dict, lattice_from_dict, lattice_to_dict, load_space_or_product,
    points_from_dict, read_json, space_to_dict,
)
from .space import GENERATORS, FiniteSpace, ProductInstance, doubling_constant, generate, verify_quasi_metric
from .suite import CRITERIA, SCALES, run_suite
from .weights import ap_constant, check_subset_inequality

SEED_ENV = "HOMOTYPE_SEED"
CSV_HEADERS = {
    "ledger": ["member", "k", "check", "value", "bound", "passed", "asserted", "anchor"],
    "checks": ["section", "name", "passed", "value", "bound", "anchor"],
    "curves": ["curve", "parameter", "value"],
}


@dataclass
class Run:
    """Result of one command: staged files, assertion status and resolved config."""

    out: str
    text: str
    passed: bool = True
    config: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# -- helpers -----------------------------------------------------------------------


def resolve_seed(value):
    """Explicit ``--seed`` wins, then ``HOMOTYPE_SEED``, else ``None``."""
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigInvalid(f"{SEED_ENV} must be an integer, got {env!r}") from exc


def _digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"missing input file {path}") from exc


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigInvalid(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _document(command, rep_or_doc, config, passed) -> str:
    body = rep_or_doc.to_dict() if isinstance(rep_or_doc, Report) else to_jsonable(rep_or_doc)
    return dumps({"command": command, "config": config, "passed": bool(passed), "report": body})


def _natural_lattice(space, delta, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        if seed is None:
            return build_lattice(build_reference_nets(space, delta))
        return random_lattice(space, delta, seed)


def _lattices(product: ProductInstance, delta, seed):
    s2 = None if seed is None else seed + 1
    return _natural_lattice(product.factor1, delta, seed), _natural_lattice(product.factor2, delta, s2)


def _shape(obj):
    return obj.shape if isinstance(obj, ProductInstance) else (obj.n,)


def _function(path, obj):
    return function_from_dict(read_json(path), _shape(obj))


def _product_only(obj, what):
    if not isinstance(obj, ProductInstance):
        raise ConfigInvalid(f"{what} needs a product file (with factor1 and factor2)")
    return obj


# -- verbs -------------------------------------------------------------------------


def cmd_space_gen(a) -> Run:
    seed = resolve_seed(a.seed)
    params = {"n": a.n, **_params(a.param)} if a.n is not None else _params(a.param)
    space = generate(a.kind, dict(params), 0 if seed is None else seed)
    cfg = {"kind": a.kind, "params": params, "seed": seed}
    return Run(a.out, dumps(space_to_dict(space)), True, cfg)


def cmd_space_verify(a) -> Run:
    sp = load_space_or_product(a.space)
    if not isinstance(sp, FiniteSpace):
        raise ConfigInvalid("space verify expects a single space file")
    q = verify_quasi_metric(sp)
    d = doubling_constant(sp)
    doc = {"quasi_metric": q.to_dict(), "doubling": d.to_dict(), "points": sp.n, "meta": sp.meta}
    passed = q.passed and d.passed
    return Run(a.out, _document("space verify", doc, {"space": a.space}, passed), passed,
               {"space": a.space}, [a.space])


def cmd_lattice_build(a) -> Run:
    sp = load_space_or_product(a.space)
    if not isinstance(sp, FiniteSpace):
        raise ConfigInvalid("lattice build expects a single space file")
    seed = resolve_seed(a.seed)
    cfg = {"space": a.space, "delta": a.delta, "seed": seed}
    lat = _natural_lattice(sp, a.delta, seed)
    doc = lattice_to_dict(lat)
    doc["report"] = lat.report.to_dict()
    return Run(a.out, dumps(doc), lat.report.passed, cfg, [a.space])


def cmd_lattice_verify(a) -> Run:
    lat = lattice_from_dict(read_json(a.lattice))
    rep = verify_lattice(lat)
    return Run(a.out, _document("lattice verify", rep, {"lattice": a.lattice}, rep.passed), rep.passed,
               {"lattice": a.lattice}, [a.lattice])


def _pairs(text, space):
    if text == "auto":
        return "auto"
    out = []
    for item in text.split(","):
        try:
            x, y = (int(v) for v in item.split("-"))
        except ValueError as exc:
            raise ConfigInvalid(f"pairs must look like 0-5,0-9 or 'auto', got {text!r}") from exc
        if not (0 <= x < space.n and 0 <= y < space.n):
            raise ConfigInvalid(f"pair {item} out of range")
        out.append((x, y))
    return out


def cmd_lattice_smallness(a) -> Run:
    sp = load_space_or_product(a.space)
    if not isinstance(sp, FiniteSpace):
        raise ConfigInvalid("lattice smallness expects a single space file")
    seed = resolve_seed(a.seed) or 0
    pairs = _pairs(a.pairs, sp)
    cfg = {"space": a.space, "delta": a.delta, "pairs": a.pairs, "trials": a.trials, "seed": seed}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        fit = fit_smallness(sp, a.delta, pairs, a.trials, seed)
        listed = pairs if pairs != "auto" else None
        curves = []
        for i, (x, y) in enumerate(listed or []):
            c = separation_curve(sp, a.delta, x, y, a.trials, seed + i)
            curves.append({"pair": [x, y], **c.values})
    doc = {"fit": fit, "curves": curves}
    return Run(a.out, _document("lattice smallness", doc, cfg, True), True, cfg, [a.space])


def cmd_haar_expand(a) -> Run:
    lat = lattice_from_dict(read_json(a.lattice))
    cfg = {"lattice": a.lattice, "function": a.function, "lattice2": a.lattice2, "tol": a.tol}
    if a.lattice2:
        lat2 = lattice_from_dict(read_json(a.lattice2))
        prod = ProductInstance(lat.space, lat2.space)
        system = ProductHaar.build(prod, lat, lat2)
        f = function_from_dict(read_json(a.function), prod.shape)
        header = ["level1", "cube1", "idx1", "level2", "cube2", "idx2", "coefficient"]
    else:
        system = HaarSystem(lat)
        f = function_from_dict(read_json(a.function), (lat.space.n,))
        header = ["level", "cube", "idx", "coefficient"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in system.expand(f).rows(a.tol):
        w.writerow([*row[:-1], repr(row[-1])])
    inputs = [a.lattice, a.function] + ([a.lattice2] if a.lattice2 else [])
    return Run(a.out, buf.getvalue(), True, cfg, inputs)


def cmd_maximal_run(a) -> Run:
    obj = load_space_or_product(a.space)
    if (a.kind == "strong") != isinstance(obj, ProductInstance):
        raise ConfigInvalid("the strong maximal function needs a product file; the others a space file")
    f = _function(a.function, obj)
    prof = maximal(obj, f, a.kind)
    cfg = {"space": a.space, "function": a.function, "kind": a.kind}
    return Run(a.out, _document("maximal run", {"kind": prof.kind, "values": prof.values}, cfg, True),
               True, cfg, [a.space, a.function])


def cmd_weights_ap(a) -> Run:
    sp = load_space_or_product(a.space)
    if not isinstance(sp, FiniteSpace):
        raise ConfigInvalid("weights ap expects a single space file")
    w = _function(a.weight, sp)
    seed = resolve_seed(a.seed) or 0
    rep = ap_constant(sp, w, a.p)
    doc = {"ap": rep.to_dict()}
    if a.subsets:
        doc["subset_inequality"] = check_subset_inequality(sp, w, a.p, seed).to_dict()
    cfg = {"space": a.space, "weight": a.weight, "p": a.p, "subsets": a.subsets, "seed": seed}
    return Run(a.out, _document("weights ap", doc, cfg, True), True, cfg, [a.space, a.weight])


def cmd_norms(a) -> Run:
    obj = load_space_or_product(a.product)
    F = _function(a.function, obj)
    seed = resolve_seed(a.seed)
    family = str(FamilySpec.parse(a.family))
    cfg = {"product": a.product, "function": a.function, "family": family, "delta": a.delta, "seed": seed}
    inputs = [a.product, a.function]
    if isinstance(obj, FiniteSpace):
        if a.kind == "bmo":
            rep = bmo_ball_norm(obj, F)
        elif a.kind == "h1":
            rep = h1_norm(obj, F, HaarSystem(_natural_lattice(obj, a.delta, seed)))
        else:
            raise ConfigInvalid(f"norms {a.kind} needs a product file")
        rep.values["family"] = "balls" if a.kind == "bmo" else "dyadic"
        return Run(a.out, _document(f"norms {a.kind}", rep, cfg, rep.passed), rep.passed, cfg, inputs)
    if a.kind == "littlebmo":
        rep = little_bmo_norm(obj, F, family)
        return Run(a.out, _document("norms littlebmo", rep, cfg, rep.passed), rep.passed, cfg, inputs)
    l1, l2 = _lattices(obj, a.delta, seed)
    ph = ProductHaar.build(obj, l1, l2)
    if a.kind == "h1":
        rep = h1_norm(obj, F, ph)
    elif a.kind == "bmo":
        fam = realize_family(family, obj, l1, l2, F)
        rep = carleson_bmo_norm(obj, F, ph, fam)
        other = dyadic_product_bmo_norm(obj, F, l1, l2, fam).values["value"]
        gap = abs(other - rep.values["value"])
        rep.values["dyadic_route"] = other
        rep.check("routes_agree", gap <= 1e-10, gap, 1e-10, anchor="Carleson route = level-difference route")
    else:
        mu = obj.total_mass
        diam = max(obj.factor1.diameter, obj.factor2.diameter)
        rep = vmo_defects(obj, F, ph, family, [mu * t for t in (0.5, 0.25, 0.1, 0.05)],
                          [diam * t for t in (0.25, 0.5, 0.75)])
    return Run(a.out, _document(f"norms {a.kind}", rep, cfg, rep.passed), rep.passed, cfg, inputs)


def cmd_bump_build(a) -> Run:
    obj = load_space_or_product(a.product)
    E = points_from_dict(read_json(a.target), _shape(obj))
    family = str(FamilySpec.parse(a.family))
    if isinstance(obj, ProductInstance):
        res = bump_product(obj, E, a.delta, tol=a.tol, family=family)
    else:
        res = bump_one_param(obj, E, a.delta)
    cfg = {"product": a.product, "target": a.target, "delta": a.delta, "tol": a.tol, "family": family}
    doc = {"tau": res.tau, "support": res.support, "measured": res.measured, "checks": res.report.to_dict()}
    passed = res.report.passed
    return Run(a.out, _document("bump build", doc, cfg, passed), passed, cfg, [a.product, a.target])


def _ledger_csv(ledger: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADERS["ledger"])
    for r in ledger.get("rows", []):
        w.writerow([_cell(r.get(h)) for h in CSV_HEADERS["ledger"]])
    return buf.getvalue()


def cmd_experiment_weakstar(a) -> Run:
    config = read_json(a.config)
    if not isinstance(config, dict):
        raise ConfigInvalid("experiment config must be a JSON object")
    seed = resolve_seed(a.seed)
    if seed is not None and "seed" not in config:
        config["seed"] = seed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        ledger = run_weak_star_experiment(config)
    doc = ledger.to_dict()
    extra = {a.csv: _ledger_csv(doc)} if a.csv else {}
    return Run(a.out, _document("experiment weakstar", doc, doc["config"], ledger.passed), ledger.passed,
               doc["config"], [a.config], extra)


def cmd_verify_all(a) -> Run:
    only = a.only.split(",") if a.only else None
    if only and set(only) - set(CRITERIA):
        raise ConfigInvalid(f"unknown criteria {sorted(set(only) - set(CRITERIA))}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        results = run_suite(a.suite, only)
    passed = all(r.passed for r in results.values())
    doc = {name: r.to_dict() for name, r in results.items()}
    cfg = {"suite": a.suite, "only": only}
    for name, r in results.items():
        print(f"{'PASS' if r.passed else 'FAIL'} {name} ({len(r.checks)} checks)", file=sys.stderr)
    return Run(a.out, _document("verify-all", doc, cfg, passed), passed, cfg)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def render_rows(doc) -> tuple[list, list]:
    """Flatten a report document into ``(header, rows)``."""
    body = doc.get("report", doc) if isinstance(doc, dict) else doc
    if not isinstance(body, dict):
        raise ConfigInvalid("report must be a JSON object")
    if "rows" in body and "config" in body:
        h = CSV_HEADERS["ledger"]
        return h, [[_cell(r.get(k)) for k in h] for r in body["rows"]]
    values = body.get("values", {})
    if {"small", "large", "far"} <= set(values):
        rows = []
        for curve, grid in (("small", "delta_grid"), ("large", "N_grid"), ("far", "N_grid")):
            rows += [[curve, p, v] for p, v in zip(values[grid], values[curve])]
        return CSV_HEADERS["curves"], rows
    sections = {k: v for k, v in body.items() if isinstance(v, dict) and "checks" in v}
    if "checks" in body:
        sections = {body.get("name", ""): body}
    rows = []
    for sec, rep in sections.items():
        for c in rep["checks"]:
            rows.append([sec, c["name"], c["passed"], _cell(c.get("value")), _cell(c.get("bound")),
                         c.get("anchor", "")])
    return CSV_HEADERS["checks"], rows


def cmd_report_render(a) -> Run:
    if not Path(a.report).exists():
        raise MissingReport(f"no report at {a.report}")
    header, rows = render_rows(read_json(a.report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return Run(a.out, buf.getvalue(), True, {"report": a.report}, [a.report])


# -- parser ------------------------------------------------------------------------


def _seed_arg(p):
    p.add_argument("--seed", type=int, default=None, help=f"seed (falls back to ${SEED_ENV})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homotype", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"homotype {__version__}")
    verbs = ap.add_subparsers(dest="verb", required=True)

    space = verbs.add_parser("space").add_subparsers(dest="action", required=True)
    p = space.add_parser("gen")
    p.add_argument("--kind", choices=GENERATORS, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    _seed_arg(p)
    p.add_argument("--out", default="space.json")
    p.set_defaults(handler=cmd_space_gen)
    p = space.add_parser("verify")
    p.add_argument("space")
    p.add_argument("--report", "--out", dest="out", default="space-report.json")
    p.set_defaults(handler=cmd_space_verify)

    lattice = verbs.add_parser("lattice").add_subparsers(dest="action", required=True)
    p = lattice.add_parser("build")
    p.add_argument("space")
    p.add_argument("--delta", type=float, default=0.5)
    _seed_arg(p)
    p.add_argument("--out", default="lattice.json")
    p.set_defaults(handler=cmd_lattice_build)
    p = lattice.add_parser("verify")
    p.add_argument("lattice")
    p.add_argument("--report", "--out", dest="out", default="lattice-report.json")
    p.set_defaults(handler=cmd_lattice_verify)
    p = lattice.add_parser("smallness")
    p.add_argument("space")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--pairs", default="auto")
    p.add_argument("--trials", type=int, default=512)
    _seed_arg(p)
    p.add_argument("--report", "--out", dest="out", default="smallness.json")
    p.set_defaults(handler=cmd_lattice_smallness)

    haar = verbs.add_parser("haar").add_subparsers(dest="action", required=True)
    p = haar.add_parser("expand")
    p.add_argument("lattice")
    p.add_argument("function")
    p.add_argument("--lattice2", help="second-factor lattice for a product function")
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--out", default="coeffs.csv")
    p.set_defaults(handler=cmd_haar_expand)

    mx = verbs.add_parser("maximal").add_subparsers(dest="action", required=True)
    p = mx.add_parser("run")
    p.add_argument("space")
    p.add_argument("function")
    p.add_argument("--kind", choices=KINDS, default="centered")
    p.add_argument("--out", default="profile.json")
    p.set_defaults(handler=cmd_maximal_run)

    wt = verbs.add_parser("weights").add_subparsers(dest="action", required=True)
    p = wt.add_parser("ap")
    p.add_argument("space")
    p.add_argument("weight")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--subsets", action="store_true", help="also measure the subset inequality")
    _seed_arg(p)
    p.add_argument("--report", "--out", dest="out", default="ap.json")
    p.set_defaults(handler=cmd_weights_ap)

    nm = verbs.add_parser("norms").add_subparsers(dest="kind", required=True)
    for kind in ("bmo", "h1", "littlebmo", "vmo"):
        p = nm.add_parser(kind)
        p.add_argument("product")
        p.add_argument("function")
        p.add_argument("--family", default="sampled:1024:seed7")
        p.add_argument("--delta", type=float, default=0.5, help="lattice parameter")
        _seed_arg(p)
        p.add_argument("--out", default=f"{kind}.json")
        p.set_defaults(handler=cmd_norms)

    bp = verbs.add_parser("bump").add_subparsers(dest="action", required=True)
    p = bp.add_parser("build")
    p.add_argument("product")
    p.add_argument("target", metavar="E.json")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--family", default="sampled:1024:seed7")
    p.add_argument("--out", default="tau.json")
    p.set_defaults(handler=cmd_bump_build)

    ex = verbs.add_parser("experiment").add_subparsers(dest="action", required=True)
    p = ex.add_parser("weakstar")
    p.add_argument("--config", required=True)
    p.add_argument("--csv", help="also write the ledger as CSV")
    _seed_arg(p)
    p.add_argument("--out", default="weakstar.json")
    p.set_defaults(handler=cmd_experiment_weakstar)

    p = verbs.add_parser("verify-all")
    p.add_argument("--suite", choices=SCALES, default="tiny")
    p.add_argument("--only", help="comma-separated subset of " + ",".join(CRITERIA))
    p.add_argument("--out", default="verify-all.json")
    p.set_defaults(handler=cmd_verify_all)

    rp = verbs.add_parser("report").add_subparsers(dest="action", required=True)
    p = rp.add_parser("render")
    p.add_argument("report")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(handler=cmd_report_render)
    return ap


def _manifest(argv, args, run: Run) -> str:
    return dumps({"version": __version__, "argv": list(argv), "verb": args.verb,
                  "action": getattr(args, "action", None) or getattr(args, "kind", None),
                  "config": run.config, "passed": run.passed,
                  "inputs": {p: _digest(p) for p in run.inputs},
                  "outputs": [run.out, *run.extra]})


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = args.handler(args)
        manifest = _manifest(argv, args, run)
    except PropertyViolation as exc:
        print(f"assertion failed: {exc} (witness: {exc.witness})", file=sys.stderr)
        return 1
    except (HomotypeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path, text in run.extra.items():
        _write(path, text)
    _write(run.out, run.text)
    _write(str(run.out) + ".manifest.json", manifest)
    return 0 if run.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
