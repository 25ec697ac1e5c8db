import sys

import numpy as np
import pytest

from dpbinreg.hyper import HyperPrior, HyperState
from dpbinreg.kernel import n_free


class Toy:
    def __init__(self, y, X):
        self.y = np.asarray(y)
        self.X = np.atleast_2d(np.asarray(X, dtype=float))


def simple_prior(p, nu=3.0, a_V=None, a_C=None, a_alpha=2.0, b_alpha=1.0):
    r, q = p + 1, n_free(p)
    a_V = r + 4.0 if a_V is None else a_V
    a_C = q + 4.0 if a_C is None else a_C
    return HyperPrior(
        a_m=np.zeros(r),
        B_m=np.eye(r),
        a_V=a_V,
        B_V=(a_V - r - 1) * np.eye(r),
        a_theta=np.zeros(q),
        B_theta=0.5 * np.eye(q),
        a_C=a_C,
        B_C=(a_C - q - 1) * 0.5 * np.eye(q),
        a_s=np.full(p, 4.0),
        b_s=np.full(p, 2.0),
        nu=np.full(p, nu),
        a_alpha=a_alpha,
        b_alpha=b_alpha,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def prior1():
    return simple_prior(1)


@pytest.fixture
def prior2():
    return simple_prior(2)


@pytest.fixture
def toy1(rng):
    x = rng.normal(size=(40, 1))
    y = (x[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(int)
    return Toy(y, x)


@pytest.fixture
def toy2(rng):
    X = rng.normal(size=(60, 2))
    y = (X[:, 0] - X[:, 1] + 0.5 * rng.normal(size=60) > 0).astype(int)
    return Toy(y, X)


def hyper_at_mean(prior):
    return HyperState.at_prior_mean(prior)


def pytest_terminal_summary(terminalreporter):
    # repeat the per-criterion lines, which pytest captures for passing tests
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
