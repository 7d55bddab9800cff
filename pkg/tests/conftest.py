import numpy as np
import pytest

from qanpp import instance as npi
from qanpp import binning as bn


@pytest.fixture(scope="session")
def inst10():
    return npi.generate(10, 25, 42)


@pytest.fixture(scope="session")
def inst12():
    return npi.generate(12, 25, 7)


@pytest.fixture(scope="session")
def inst10_a0():
    return npi.generate(10, 20, 3, with_a0=True)


@pytest.fixture(scope="session")
def small_system():
    """n=4 instance with binning and diagonal, for dense-oracle tests."""
    inst = npi.generate(4, 20, 9, with_a0=True)
    binning = bn.build_binning(inst, K=2, mode="small-cutoff")
    return inst, binning


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
