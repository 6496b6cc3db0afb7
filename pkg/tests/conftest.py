import numpy as np
import pytest

from flowreg import grids
from flowreg.fields import BandlimitedField


def random_hermitian_field(trunc_dims, grid_dims, rng, scale=1.0):
    """Random field with exact conjugate symmetry (real spatial rendering)."""
    d = len(grid_dims)
    raw = rng.standard_normal((d, *trunc_dims)) + 1j * rng.standard_normal((d, *trunc_dims))
    coeffs = grids.hermitian_project(scale * raw, d)
    return BandlimitedField(coeffs, tuple(grid_dims))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
