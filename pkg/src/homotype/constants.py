"""Frozen thresholds.

Each value is a calibrated maximum times 1.25 (floors: a calibrated minimum
times 0.8), rounded outward to two significant digits. The calibration
outputs live in ``tests/fixtures/calibration.json`` and are regenerated by
``python -m homotype.calibrate``; the test suite checks that every constant
still covers the stored measurement.
"""

# weak-star replay; ``decay`` is fixed a priori, the rest are calibrated
WEAKSTAR = {
    "decay": 0.25,
    "psi_floor": 0.24,
    "phi_tau_bmo": 0.71,
    "support": 2.7e-06,
    "rectangle_sum": 0.00018,
    "covering": 12.0,
}

# one-parameter replay (ball BMO, no rectangle or covering steps)
WEAKSTAR_ONE = {
    "decay": 0.25,
    "psi_floor": 0.43,
    "phi_tau_bmo": 3.9,
    "support": 0.00091,
}

A1_HALF_POWER = 2.6
BUMP_SUPPORT_ONE = 0.27
BUMP_SUPPORT_PRODUCT = 0.034
BUMP_BMO_ONE = 1.7
BUMP_BMO_PRODUCT = 1.6
# finest over coarsest per-resolution maximum of the bmo ratio
BUMP_GROWTH = 1.5
PAIRING = 1.2
EXPECTATION = 0.22
VITALI = 13.0
