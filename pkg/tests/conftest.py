import numpy as np
import pytest

import blochspec as bs


def uniform_grid(n=64):
    return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)


@pytest.fixture(scope="session")
def free_spec():
    return bs.OperatorSpec.free(2, 1)


@pytest.fixture(scope="session")
def constant_spec():
    return bs.OperatorSpec.constant_coupling(3, np.diag([1.0, 4.0]))


@pytest.fixture(scope="session")
def perturbed_spec():
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    return bs.OperatorSpec(
        n=3, m=2,
        P={2: bs.TrigPoly({0: np.diag([1.0, 4.0]), 1: 0.1 * B, -1: 0.1 * B})})


@pytest.fixture(scope="session")
def oneharmonic_spec():
    # even order with a first-order term: Re of the p1 mean is nonzero
    return bs.OperatorSpec(n=2, m=1, p1=bs.TrigPoly({0: 1.0}),
                           P={2: bs.TrigPoly({1: np.array([[0.35]])})})


@pytest.fixture(scope="session")
def free_collection(free_spec):
    return bs.track_bands(free_spec, 8, uniform_grid(64))


@pytest.fixture(scope="session")
def constant_collection(constant_spec):
    return bs.track_bands(constant_spec, 12, uniform_grid(64))


@pytest.fixture(scope="session")
def perturbed_collection(perturbed_spec):
    return bs.track_bands(perturbed_spec, 16, uniform_grid(64))


@pytest.fixture(scope="session")
def free_catalog(free_spec):
    return bs.resultant_scan(free_spec, (-100.0, 5.0, -5.0, 5.0),
                             grid=(36, 11))
