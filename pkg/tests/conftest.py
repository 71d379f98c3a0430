import numpy as np
import pytest

from exit_spectrum import build_chain, build_diffusion_1d, GridSpec, kill


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow full-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def reversible_chain(n, seed, density=0.4):
    """Random reversible killed chain built from symmetric conductances."""
    rng = np.random.default_rng(seed)
    C = rng.random((n, n)) * (rng.random((n, n)) < density)
    C = np.triu(C, 1)
    C = C + C.T
    # a path keeps the chain irreducible
    for i in range(n - 1):
        C[i, i + 1] = C[i + 1, i] = max(C[i, i + 1], 0.1 + rng.random())
    mu = 0.5 + rng.random(n)
    kappa = np.where(rng.random(n) < 0.3, rng.random(n), 0.0)
    kappa[0] = max(kappa[0], 0.2)
    L = C / mu[:, None]
    np.fill_diagonal(L, -(C.sum(axis=1) + kappa) / mu)
    return L, mu


@pytest.fixture
def one_state():
    return kill(build_chain([[-2.0, 2.0], [0.0, 0.0]], [1.0, 1.0]), [0])


@pytest.fixture
def birth_death():
    L = [[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]]
    return kill(build_chain(L, [1.0, 1.0, 1.0]), [0, 1])


@pytest.fixture
def random_chain():
    L, mu = reversible_chain(20, seed=12345)
    return kill(build_chain(L, mu), "all")


@pytest.fixture(scope="session")
def brownian():
    return kill(build_diffusion_1d(GridSpec(0.0, 1.0, 999), lambda x: 0.0 * x), "all")


@pytest.fixture(params=["one_state", "birth_death", "random_chain"])
def chain_fixture(request):
    return request.getfixturevalue(request.param)
