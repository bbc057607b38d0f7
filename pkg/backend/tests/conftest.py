"""
Shared fixtures for the test suite
"""

import os
import sys

import numpy as np
import pytest

# Add backend directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from services.rmt_reference import goe_reference, load_goe_table  # noqa: E402
from services.system_model import build_system  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def free_circle():
    return build_system(1.0, n=3)


@pytest.fixture
def single_interaction():
    return build_system(2.0, n=1)


@pytest.fixture(scope="session")
def goe_table(in_process_goe_table):
    return load_goe_table()


@pytest.fixture(scope="session", autouse=True)
def in_process_goe_table(tmp_path_factory):
    """Point the GOE reference at a missing file so every test uses the generated table"""
    missing = tmp_path_factory.mktemp("goe") / "absent.txt"
    previous = os.environ.get("SPECTRA_GOE_TABLE")
    os.environ["SPECTRA_GOE_TABLE"] = str(missing)
    load_goe_table.cache_clear()
    goe_reference.cache_clear()
    yield
    if previous is None:
        os.environ.pop("SPECTRA_GOE_TABLE", None)
    else:
        os.environ["SPECTRA_GOE_TABLE"] = previous
    load_goe_table.cache_clear()
    goe_reference.cache_clear()
