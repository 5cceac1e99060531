import numpy as np
import pytest

from charanim.fixtures import biped_bundle
from charanim.volume import marching_cubes, mesh_to_sdf


@pytest.fixture(scope="session")
def biped():
    """Drawing-scale biped bundle plus a 96^3 extracted surface."""
    bundle = biped_bundle(resolution=512)
    grid = mesh_to_sdf(bundle["soup"], dims=(96, 96, 96), padding=3)
    bundle["mesh"] = marching_cubes(grid)
    bundle["spacing"] = grid.spacing
    return bundle
