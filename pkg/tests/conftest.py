import numpy as np
import pytest

from cornerlab.gas import GasModel


@pytest.fixture
def air():
    return GasModel.normalized(gamma=1.4)


@pytest.fixture
def gas_grid():
    return [
        GasModel(gamma=g, bernoulli=b)
        for g in (1.2, 1.4, 2.0, 3.0)
        for b in (1.0, 3.5, 10.0)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
