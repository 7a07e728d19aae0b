from __future__ import annotations

import pytest

from landau_tf import stf


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("LANDAU_TF_CACHE", str(tmp_path_factory.getbasetemp() / "kernel-cache"))


@pytest.fixture(scope="session")
def stf_unit():
    """Neutral STF solution at Z = B = 1, shared by several modules."""
    return stf.solve_stf(1.0, 1.0)
