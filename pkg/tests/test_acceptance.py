"""Acceptance criteria C1-C7, one pass/fail line each at the stated tolerance.

The lines are printed even under captured output, so they land in the test log.
"""
from __future__ import annotations

import pytest

from landau_tf import validate

CRITERIA = [
    pytest.param(validate.check_kernels, id="C1-kernels"),
    pytest.param(validate.check_spectral, id="C2-spectral"),
    pytest.param(validate.check_stf, id="C3-stf"),
    pytest.param(validate.check_dstf, id="C4-dstf"),
    pytest.param(validate.check_one_d, id="C5-one-d"),
    pytest.param(validate.check_trace, id="C6-trace"),
    pytest.param(validate.check_determinism, id="C7-determinism"),
]


@pytest.mark.parametrize("check", CRITERIA)
def test_criterion(check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
