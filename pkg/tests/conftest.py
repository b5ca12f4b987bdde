"""Shared fixtures.

The expensive simulation ensembles (winding environments, height CLT
replicas) are session scoped so the acceptance tests that look at the same
data from different angles build them once.
"""
import numpy as np
import pytest

from kpztorus.rng import RngStream
from kpztorus.she import SolverParams


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the long simulation tests")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="skipped by --skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def gen():
    return RngStream(1234).generator()


@pytest.fixture
def small_params():
    return SolverParams(beta=1.0, L=1.0, n=32, dt=2e-3, T=0.5)


class WindingEnsemble:
    """200 stationary winding environments at t=50, built once and shared
    between the shear-identity and diffusivity acceptance tests."""

    def __init__(self, routes, quenched_vars, t):
        self.routes = routes
        self.quenched_vars = np.asarray(quenched_vars)
        self.t = t


@pytest.fixture(scope="session")
def winding_ensemble():
    from kpztorus.winding import sigma_empirical, quenched_moments

    t = 50.0
    params = SolverParams(beta=1.0, L=1.0, n=32, dt=4e-3, T=1.0)
    qvars = []

    def collect(e, chain, sample):
        qvars.append(quenched_moments(chain).var)

    routes = sigma_empirical(params, t, n_env=200, rng=RngStream(4242),
                             n_paths=16, K=10, J=8, collect=collect)
    return WindingEnsemble(routes, qvars, t)


@pytest.fixture(scope="session")
def clt_run():
    from kpztorus.bridge_formulas import sigma2_white_mc
    from kpztorus.height import clt_experiment

    sigma2 = sigma2_white_mc(1.0, 1.0, 200_000, RngStream(70)).value
    params = SolverParams(beta=1.0, L=1.0, n=32, dt=2.5e-4, T=50.0)
    return clt_experiment(params, t=50.0, n_replicas=2000, rng=RngStream(7),
                          sigma2=sigma2)
