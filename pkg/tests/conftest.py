import numpy as np
import pytest

from fuseclust.experiments import SyntheticSpec, generate_clusters
from fuseclust.model import DataSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, P=4, N=6, p_obs=1.0):
    X = rng.normal(size=(P, N))
    mask = rng.random((P, N)) < p_obs
    return DataSet(X, mask)


def separated_instance(K=2, M=4, P=8, seed=0, eps=0.1, sep=3.0):
    """Uniform-noise clusters with centers ``sep`` apart (kappa well below 1)."""
    spec = SyntheticSpec(K=K, M=M, P=P, noise="uniform", epsilon=eps, center_sep=sep, seed=seed)
    return generate_clusters(spec)


# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
