import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from cqnpm.forward import CartesianModel, NonUniformModel
from cqnpm.scenarios import gen_cartesian_mask, gen_radial, gen_smaps, gen_spiral


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cart16():
    return CartesianModel(gen_cartesian_mask(16, 3.0, 4, seed=3), gen_smaps(16, 3))


@pytest.fixture(scope="session")
def spiral16():
    return NonUniformModel(gen_spiral(16, 2, 60), gen_smaps(16, 3))


@pytest.fixture(scope="session")
def radial16():
    return NonUniformModel(gen_radial(16, 8, 33), gen_smaps(16, 2))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
