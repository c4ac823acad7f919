"""Shared fixtures and state samplers for the test suite."""

import math

import numpy as np
import pytest

from vhip_balance.harness import DEFAULT_CONSTRAINTS
from vhip_balance.model import ComState


@pytest.fixture
def cs():
    return DEFAULT_CONSTRAINTS


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
    )


def sample_in_inner(
    rng: np.random.Generator,
    cs,
    margin: float = 0.0,
    cz_range=(0.4, 0.9),
    cx_range=(-0.2, 0.2),
) -> ComState:
    """State whose capture-input pair lies inside the bounds with a margin.

    Parameterized directly by the pair: pick the stiffness component and the
    height, back out the vertical velocity from the defining quadratic, then
    pick the ZMP component and back out the horizontal velocity.
    """
    xi_lam = rng.uniform(cs.lambda_min + margin, cs.lambda_max - margin)
    w = math.sqrt(xi_lam)
    c_z = rng.uniform(*cz_range)
    dc_z = (cs.g - c_z * xi_lam) / w
    xi_p = rng.uniform(cs.p_min + margin, cs.p_max - margin)
    c_x = rng.uniform(*cx_range)
    dc_x = (xi_p - c_x) * w
    return ComState(c_x, c_z, dc_x, dc_z)


def sample_state(rng: np.random.Generator) -> ComState:
    """Generic valid state, not confined to any region."""
    return ComState(
        rng.uniform(-1.0, 1.0),
        rng.uniform(0.05, 2.0),
        rng.uniform(-3.0, 3.0),
        rng.uniform(-3.0, 3.0),
    )
