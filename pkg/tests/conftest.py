import numpy as np
import pytest

from swipt_diplexer.miso import dbm_to_watt

SIGMA_A_SQ = float(dbm_to_watt(-70))
SIGMA_COV_SQ = float(dbm_to_watt(-50))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
