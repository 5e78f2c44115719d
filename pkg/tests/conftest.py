import numpy as np
import pytest

from bayesbf import scene


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])


@pytest.fixture(scope="session")
def cfg():
    return scene.default_config()


@pytest.fixture(scope="session")
def channels(cfg):
    return scene.gen_channels(cfg)


@pytest.fixture(scope="session")
def priors(cfg):
    return scene.build_priors(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_psd(rng, n, power=1.0, rank=None):
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    r = g @ g.conj().T
    return power * r / np.trace(r).real
