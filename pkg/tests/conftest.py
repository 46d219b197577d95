import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def fam2000():
    from natmap.measures import VisualFamily
    return VisualFamily(3, 2000)


def random_ball_point(rng, k=3, max_radius=1.0):
    from natmap.geometry import HPoint
    d = rng.standard_normal(k)
    d /= np.linalg.norm(d)
    return HPoint(np.tanh(rng.uniform(0.02, max_radius) / 2.0) * d)


def random_sphere_point(rng, k=3):
    from natmap.geometry import BoundaryPoint
    d = rng.standard_normal(k)
    return BoundaryPoint(d / np.linalg.norm(d))
