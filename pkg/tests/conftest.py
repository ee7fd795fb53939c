import numpy as np
import pytest

from dsbem.mesh import make_icosphere
from dsbem.operators import assemble

_OPS = {}


def icosphere_ops(level: int):
    """Assembled operators on the unit icosphere, shared across the session."""
    if level not in _OPS:
        _OPS[level] = assemble(make_icosphere(level))
    return _OPS[level]


@pytest.fixture(scope="session")
def ops0():
    return icosphere_ops(0)


@pytest.fixture(scope="session")
def ops1():
    return icosphere_ops(1)


@pytest.fixture(scope="session")
def ops2():
    return icosphere_ops(2)


@pytest.fixture(scope="session")
def ops3():
    return icosphere_ops(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def z_of(x):
    return x[..., 2] / np.linalg.norm(x, axis=-1)
