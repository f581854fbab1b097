"""One check per acceptance criterion, each printing a single PASS/FAIL line."""
import time
import warnings

import numpy as np
import pytest

from homotype import constants as K
from homotype import suite
from homotype.cli import main
from homotype.lattice import AdmissibilityWarning


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} {detail}".rstrip())
        return ok
    return emit


def timed(fn, scale="full"):
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        rep = fn(scale)
    return rep, time.perf_counter() - start


def failed(rep):
    return [c.name for c in rep.failures()][:5]


def test_criterion_1_lattice_axioms(verdict):
    rep, secs = timed(suite.lattice_axioms)
    names = [r["instance"] for r in rep.values["instances"]]
    assert len(names) == 9
    ok = rep.passed and secs < 60
    verdict(1, "lattice axioms", ok, f"({len(rep.checks)} checks, {secs:.1f}s)")
    assert rep.passed, failed(rep)
    assert secs < 60


def test_criterion_2_haar_exactness(verdict):
    rep, secs = timed(suite.haar_exactness)
    rows = rep.values["instances"]
    worst = {k: max(r[k] for r in rows) for k in ("gram_error", "cancellation", "roundtrip", "parseval")}
    ok = (rep.passed and secs < 30 and worst["gram_error"] < 1e-10 and worst["cancellation"] < 1e-12
          and worst["roundtrip"] < 1e-10 and worst["parseval"] < 1e-10)
    verdict(2, "Haar exactness", ok, f"(worst {worst}, {secs:.1f}s)")
    assert {"grid1d(8)^2", "grid1d(16)^2"} <= {r["instance"] for r in rows}
    assert ok, failed(rep)


def test_criterion_3_weight_lemmas(verdict):
    rep, secs = timed(suite.weight_lemmas)
    v = rep.values
    ok = (rep.passed and secs < 60 and v["spread"] < 2 and max(v["a1_half"]) <= K.A1_HALF_POWER
          and all(b > a for a, b in zip(v["a1_full"], v["a1_full"][1:])))
    verdict(3, "weight lemmas", ok, f"(spread {v['spread']:.3f}, {secs:.1f}s)")
    assert v["sizes"] == [8, 16, 32, 64, 128]
    assert ok, failed(rep)


def test_criterion_4_bump_estimates(verdict):
    rep, secs = timed(suite.bump_estimates)
    rows = rep.values["instances"]
    ok = rep.passed and secs < 600
    verdict(4, "bump estimates", ok, f"({len(rows)} instances, {secs:.1f}s)")
    assert len(rows) == 100 and max(r["n"] for r in rows) <= 64
    assert {r["delta"] for r in rows} <= {0.05, 0.1, 0.2}
    assert ok, failed(rep)


def test_criterion_5_norm_identities(verdict):
    rep, secs = timed(suite.norm_identities)
    v = rep.values
    ok = rep.passed and secs < 300 and max(v["identity_errors"]) <= 1e-10 and v["pairing_max"] <= K.PAIRING
    verdict(5, "norm identities", ok, f"(pairing max {v['pairing_max']:.3f}, {secs:.1f}s)")
    assert len(v["identity_errors"]) == 20 and len(v["pairing_ratios"]) == 100
    assert ok, failed(rep)


def test_criterion_6_expectation_average(verdict):
    rep, secs = timed(suite.expectation_average)
    v = rep.values
    ok = rep.passed and secs < 300 and v["max_ratio"] <= K.EXPECTATION
    verdict(6, "expectation averaging", ok, f"(max ratio {v['max_ratio']:.3f}, {secs:.1f}s)")
    assert len(v["omegas"]) == 16 and len(v["ratios"]) == 10 and v["n"] == 8
    assert ok, failed(rep)


def test_criterion_7_weak_star(verdict):
    rep, secs = timed(suite.weak_star)
    s = rep.values["ledger"]["series"]["n=128"]
    phi = np.abs(s["phi"])
    psi = np.abs(s["psi"])
    ok = (rep.passed and secs < 600
          and np.all(np.abs(np.asarray(s["h1"]) - 1.0) <= 1e-9)
          and np.all(np.diff(phi) < 0) and phi[-1] < K.WEAKSTAR["decay"] * phi[0]
          and psi.min() >= K.WEAKSTAR["psi_floor"])
    verdict(7, "weak-star replay", ok,
            f"(phi5/phi1 {phi[-1] / phi[0]:.3f}, psi min {psi.min():.3f}, {secs:.1f}s)")
    assert s["depth"] == [1, 2, 3, 4, 5]
    assert ok, failed(rep)


def test_criterion_8_vitali_covers(verdict):
    rep, secs = timed(suite.vitali_covers)
    v = rep.values
    ok = rep.passed and secs < 120 and v["max_ratio"] <= K.VITALI
    verdict(8, "Vitali covers", ok, f"(max ratio {v['max_ratio']:.2f}, {secs:.1f}s)")
    assert len(v["covers"]) == 20 * len(suite.vitali_instances("full"))
    assert ok, failed(rep)


def test_criterion_9_determinism(verdict, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    codes = [main(["verify-all", "--suite", "tiny", "--out", str(p)]) for p in (a, b)]
    same = a.read_bytes() == b.read_bytes()
    ok = codes == [0, 0] and same
    verdict(9, "determinism", ok, f"(exit codes {codes}, identical={same})")
    assert ok
