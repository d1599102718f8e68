"""
Shared fixtures for the constrank test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.append(str(Path(__file__).parent.parent / "src"))

from constrank.fields.grid import GridSpec  # noqa: E402
from constrank.symbols.operators import named_operator  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator so every test run draws the same numbers"""
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return GridSpec(2, 32)


@pytest.fixture
def grid3():
    return GridSpec(3, 16)


@pytest.fixture
def grad2():
    return named_operator("grad", 2)


@pytest.fixture
def div2():
    return named_operator("div", 2)


@pytest.fixture
def curl3():
    return named_operator("curl", 3)
