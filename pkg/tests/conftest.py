from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.busemann import sample_busemann_recursion  # noqa: E402
from src.envgen import GridSpec, sample_field  # noqa: E402

SEED = 1234


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def tiny_spec():
    """Few enough points for the enumeration oracles."""
    return GridSpec(-0.1, 0.2, 0.02)


@pytest.fixture
def small_spec():
    return GridSpec(-5.0, 5.0, 0.01)


@pytest.fixture
def tiny_field(tiny_spec):
    return sample_field(tiny_spec, range(0, 4), SEED)


@pytest.fixture
def stack_spec():
    return GridSpec(-5.0, 25.0, 0.01)


@pytest.fixture
def recursion_stack(stack_spec):
    """Busemann slices on levels -1..4 in direction 1."""
    bfield = sample_field(stack_spec, range(-2, 14), SEED)
    return sample_busemann_recursion(bfield, 1.0, (-1, 4))
