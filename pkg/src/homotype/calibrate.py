"""Recompute the measured quantities behind the frozen thresholds.

``python -m homotype.calibrate [--out tests/fixtures/calibration.json]``

Upper thresholds are the calibrated maximum times ``HEADROOM``, rounded up to
two significant digits; floors are the calibrated minimum times ``FLOOR_SHARE``,
rounded down. Measurements are pooled over the full acceptance run and the
tiny ``verify-all`` configuration so one set of constants serves both.
"""
from __future__ import annotations

import argparse
import math
import warnings

from . import suite
from .harness import run_weak_star_experiment
from .lattice import AdmissibilityWarning
from .serialize import write_json

HEADROOM = 1.25
FLOOR_SHARE = 0.8


def ceil2(x: float) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - 1
    return math.ceil(x / 10**e) * 10**e


def floor2(x: float) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - 1
    return math.floor(x / 10**e) * 10**e


def upper(x: float) -> float:
    return round(ceil2(HEADROOM * x), 12)


def lower(x: float) -> float:
    return round(floor2(FLOOR_SHARE * x), 12)


def _ledger_extremes(ledgers) -> dict:
    vals = {}
    for led in ledgers:
        for row in led["rows"]:
            if row["value"] is None or not isinstance(row["value"], (int, float)) or isinstance(row["value"], bool):
                continue
            vals.setdefault(row["check"], []).append(float(row["value"]))
    return vals


def _measure_scale(scale: str) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        weights = suite.weight_lemmas(scale).values
        bump = suite.bump_estimates(scale).values
        norms = suite.norm_identities(scale).values
        expectation = suite.expectation_average(scale).values
        vitali = suite.vitali_covers(scale).values
        ledger = suite.weak_star(scale).values["ledger"]
    ws = _ledger_extremes([ledger])
    return {
        "A1_HALF_POWER": max(weights["a1_half"]),
        "BUMP_SUPPORT_ONE": bump["one-parameter_support_max"],
        "BUMP_SUPPORT_PRODUCT": bump["product_support_max"],
        "BUMP_BMO_ONE": bump["one-parameter_bmo_max"],
        "BUMP_BMO_PRODUCT": bump["product_bmo_max"],
        "PAIRING": norms["pairing_max"],
        "EXPECTATION": expectation["max_ratio"],
        "VITALI": vitali["max_ratio"],
        "WEAKSTAR.psi_floor": min(ws["psi_floor"]),
        "WEAKSTAR.phi_tau_bmo": max(ws["phi_tau_bmo"]),
        "WEAKSTAR.support": max(ws["support_mass"]),
        "WEAKSTAR.rectangle_sum": max(ws["rectangle_sum"]),
        "WEAKSTAR.covering": max(ws["covering_sum"]),
        "WEAKSTAR.decay_observed": max(ws["phi_decay"]),
        "bump_per_n": {"one-parameter": bump["one-parameter_per_n"], "product": bump["product_per_n"]},
        "a1_half_by_n": dict(zip(map(str, weights["sizes"]), weights["a1_half"])),
    }


def _measure_one_parameter() -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        ws = _ledger_extremes([run_weak_star_experiment(suite.ONE_PARAMETER).to_dict()])
    return {
        "WEAKSTAR_ONE.psi_floor": min(ws["psi_floor"]),
        "WEAKSTAR_ONE.phi_tau_bmo": max(ws["phi_tau_bmo"]),
        "WEAKSTAR_ONE.support": max(ws["support_mass"]),
    }


def measure() -> dict:
    """Per-scale measurements and their pooled extremes."""
    per = {scale: _measure_scale(scale) for scale in suite.SCALES}
    pooled = {}
    for key, v in per["full"].items():
        if not isinstance(v, float):
            continue
        both = [per[s][key] for s in suite.SCALES]
        pooled[key] = min(both) if key.endswith("psi_floor") else max(both)
    one = _measure_one_parameter()
    pooled.update(one)
    return {"pooled": pooled, "per_scale": per, "one_parameter": one}


def frozen_from(measured: dict) -> dict:
    out = {}
    for key, v in measured["pooled"].items():
        if key == "WEAKSTAR.decay_observed":
            continue
        out[key] = lower(v) if key.endswith("psi_floor") else upper(v)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m homotype.calibrate")
    ap.add_argument("--out", default="tests/fixtures/calibration.json")
    args = ap.parse_args(argv)
    measured = measure()
    doc = {"headroom": HEADROOM, "floor_share": FLOOR_SHARE, "measured": measured,
           "frozen": frozen_from(measured)}
    write_json(args.out, doc)
    for k, v in doc["frozen"].items():
        print(f"{k} = {v!r}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
