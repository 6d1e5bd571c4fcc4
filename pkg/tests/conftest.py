import pytest

from robust_halfspace.config import ExperimentConfig
from robust_halfspace.learn import robust_learn

SMALL = dict(d=4, degree=2, n_samples=500, m=32, rounds=1, n_rounding=500, n_thresholds=60,
             n_mean=640, n_test=1000, phi_m=1024, n_eval=300, restarts=8)


@pytest.fixture(scope="session")
def small_cfg():
    return ExperimentConfig(seed=1, **SMALL)


@pytest.fixture(scope="session")
def small_model(small_cfg):
    return robust_learn(small_cfg)
