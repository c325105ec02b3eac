"""Shared fixtures. Session scope for the expensive builds; every test that
mutates state gets its own copy."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from roi_compose.fields import AnalyticField, Sphere, Slab, bake_grid
from roi_compose.fixtures import make_fixture
from roi_compose.geometry import Aabb


@pytest.fixture(scope="session")
def ball_field():
    """Analytic sphere over a floor slab: the workhorse field for ray tests."""
    return AnalyticField(
        [
            Sphere((0.0, 0.0, 0.4), 0.5, density=18.0, color=(0.9, 0.4, 0.2)),
            Slab(2, -0.3, 0.0, density=10.0, color=(0.3, 0.5, 0.7)),
        ],
        domain=Aabb((-2.0, -2.0, -0.5), (2.0, 2.0, 1.5)),
        field_id="ball",
    )


@pytest.fixture(scope="session")
def ball_grid(ball_field):
    return bake_grid(ball_field, ball_field.domain(), (24, 24, 24))


@pytest.fixture(scope="session")
def occluder_fixture():
    return make_fixture("occluder", seed=0)


@pytest.fixture(scope="session")
def checker_fixture():
    return make_fixture("checker-table", seed=0)


@pytest.fixture(scope="session")
def spheres_fixture():
    return make_fixture("two-spheres", seed=0, n_spheres=4)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
