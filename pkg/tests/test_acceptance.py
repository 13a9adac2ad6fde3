"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one pass/fail line per
criterion (the same report is available via ``levywf validate``).
"""

import pytest

from levywf.validation import CRITERIA, Workspace


@pytest.fixture(scope="module")
def workspace():
    return Workspace(quick=False)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, workspace):
    result = CRITERIA[number](workspace)
    status = "PASS" if result.passed else "FAIL"
    print(f"[criterion {result.number:2d}] {status} ({result.seconds:6.1f}s) "
          f"{result.name}: {result.measured}")
    assert result.passed, f"criterion {number}: {result.measured}"
