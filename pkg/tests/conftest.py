import json
import pathlib
import warnings

import pytest

from homotype.lattice import AdmissibilityWarning

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "oracles.json").read_text())


@pytest.fixture(scope="session")
def live():
    import cases
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        return cases.oracle_values()
