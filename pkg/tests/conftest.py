import numpy as np
import pytest

from seirsde import BASELINE_INIT, BASELINE_PARAMS, StateVec


@pytest.fixture
def params():
    """Baseline calibrated rates with sigma = 0.01."""
    return BASELINE_PARAMS


@pytest.fixture
def baseline_init():
    """Outbreak-start state: tiny infectious pools, R(0) = 0."""
    return BASELINE_INIT


# Interior growth-phase state used by the synthetic Monte Carlo studies.
# All five coordinates sit far from the boundary, so the quadratic
# variation of every equation is noise-dominated; with R(0) = 0 the
# recovered-compartment row of the sigma estimator is drift-dominated and
# meaningless (see test_estimate for the characterisation).
INTERIOR_INIT = StateVec(s=0.86, e=0.04, i_a=0.027, i_s=0.02, r=0.053)


@pytest.fixture
def interior_init():
    return INTERIOR_INIT


def as_matrix(path):
    """Path coordinates as an (n, 5) array for quick assertions."""
    return np.column_stack([path.s, path.e, path.i_a, path.i_s, path.r])
