"""Regenerate ``fixtures/oracles.json`` from the brute-force oracles.

Run from the repository root: ``python tests/freeze_oracles.py``.
"""
import json
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

from cases import oracle_values  # noqa: E402

if __name__ == "__main__":
    values = oracle_values()
    (HERE / "fixtures" / "oracles.json").write_text(json.dumps(values, indent=1, sort_keys=True) + "\n")
    print(f"froze {len(values)} oracle values")
