import numpy as np
import pytest

from daynight.data.synth import benchmark_suite
from daynight.model.segnet import init_model
from daynight.model.training import train_source


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def model():
    return init_model(0)


@pytest.fixture(scope="session")
def tiny_suite():
    return benchmark_suite(
        seed=0, n_source_train=8, n_source_val=4, n_target=10, size=32
    )


@pytest.fixture(scope="session")
def tiny_source(tiny_suite):
    return train_source(tiny_suite.source_train, epochs=2, seed=0)


@pytest.fixture(scope="session")
def source_cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("source-cache"))
