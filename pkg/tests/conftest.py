from __future__ import annotations

from pathlib import Path

import pytest

import ontoguard

FIXTURES = Path(ontoguard.__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES
