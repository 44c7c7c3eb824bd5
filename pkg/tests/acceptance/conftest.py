import numpy as np
import pytest

from tpnn.bench import generate
from tpnn.data import Dataset, train_test_split
from tpnn.mcmc import run_chains
from tpnn.schemas import ChainConfig, PriorConfig, SyntheticSpec


@pytest.fixture(autouse=True)
def quiet_chains(settings):
    """Silence per-iteration progress lines during long runs."""
    settings.TPNN_LOG_EVERY = 0


@pytest.fixture
def fit_synthetic():
    """Generate a synthetic benchmark dataset, split it 80/20 and fit it."""

    def fit(function_id, n, *, seed=0, prior=None, chain=None):
        data = generate(SyntheticSpec(function_id=function_id, n=n, seed=seed))
        train, test = train_test_split(data.dataset, 0.2, seed)
        samples, stats = run_chains(
            train, PriorConfig(**(prior or {})), ChainConfig(**{"seed": seed, **(chain or {})})
        )
        return data, train, test, samples, stats

    return fit


@pytest.fixture
def logistic_data():
    """Bernoulli responses with logit ``2 x1 - 1`` on uniform inputs."""

    def make(n, p=3, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(n, p))
        y = rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-(2.0 * x[:, 0] - 1.0)))
        return Dataset.from_arrays(x, y.astype(float), "bernoulli")

    return make
