"""End-to-end acceptance criteria, one test and one PASS/FAIL line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines as they are
produced; they are also echoed into the captured output of failing tests.
"""
import pytest

from viscobeam.acceptance import CHECKS


@pytest.mark.slow
@pytest.mark.parametrize("criterion", sorted(CHECKS))
def test_criterion(criterion):
    res = CHECKS[criterion]()
    print(res.line())
    assert res.passed, res.line()
