import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_adjacency(rng, v=18):
    """A valid normalized 3-subset adjacency stack for tiny-model tests."""
    from kinetic_age.graph import build_adjacency_set
    from kinetic_age.joints import rest_pose

    pose = rest_pose() + 0.01 * rng.standard_normal((v, 3))
    return build_adjacency_set("coordination", pose).matrices
