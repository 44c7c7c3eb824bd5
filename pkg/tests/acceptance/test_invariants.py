import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import invgamma, norm

from tpnn.basis import BasisTerm, c_correction, eval_factor, grad_factor, sigmoid_mean
from tpnn.data import Dataset, Marginal
from tpnn.inference import PosteriorSamples
from tpnn.likelihood import ModelState
from tpnn.mcmc import Chain, adding_log_ratio, changing_log_ratio, deleting_log_ratio
from tpnn.metrics import crps
from tpnn.prior import log_prior_subset, move_probabilities
from tpnn.schemas import ChainConfig, PriorConfig

pytestmark = pytest.mark.slow

STEP = 1e-6


def close(value, reference, rel):
    return abs(value - reference) <= rel * abs(reference) + 1e-6


def test_factors_sum_to_zero_over_their_marginal():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        values = rng.uniform(size=int(rng.integers(2, 200)))
        marginal = Marginal.empirical(values)
        b, gamma = rng.uniform(), rng.uniform(0.002, 3.0)
        c = c_correction(marginal, b, gamma)
        assert abs(np.mean(eval_factor(values, b, gamma, c))) < 1e-10


def test_factor_gradients_match_finite_differences():
    rng = np.random.default_rng(1)

    def factor(x, b, gamma, marginal):
        return 1.0 - expit((x - b) / gamma) / sigmoid_mean(marginal, b, gamma)

    for _ in range(100):
        marginal = Marginal.empirical(rng.uniform(size=50)) if rng.uniform() < 0.5 else Marginal.uniform()
        x, b, gamma = rng.uniform(), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.5)
        d_b, d_gamma = grad_factor(x, b, gamma, marginal)
        fd_b = (factor(x, b + STEP, gamma, marginal) - factor(x, b - STEP, gamma, marginal)) / (2 * STEP)
        fd_g = (factor(x, b, gamma + STEP, marginal) - factor(x, b, gamma - STEP, marginal)) / (2 * STEP)
        assert close(d_b, fd_b, 1e-5)
        assert close(d_gamma, fd_g, 1e-5)


@pytest.mark.parametrize("family", ["gaussian", "bernoulli", "poisson"])
def test_langevin_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(2)
    prior = PriorConfig(b_gamma=0.1, sigma_beta2=1.0, **{"lambda": 0.1})
    for trial in range(100):
        x = rng.uniform(size=(30, 4))
        if family == "gaussian":
            y = np.cos(3 * x[:, 1]) + 0.2 * rng.normal(size=30)
        elif family == "bernoulli":
            y = (rng.uniform(size=30) < x[:, 0]).astype(float)
        else:
            y = rng.poisson(np.exp(x[:, 2])).astype(float)
        chain = Chain(Dataset.from_arrays(x, y, family), prior, ChainConfig(seed=trial),
                      rng=np.random.default_rng(trial), lam=0.1)
        size = int(rng.integers(1, 4))
        S = np.sort(rng.choice(4, size=size, replace=False))
        term = BasisTerm(S, rng.uniform(0.1, 0.9, size), rng.uniform(0.1, 0.5, size), rng.normal())
        chain._append(term, chain.build_cache(term))
        chain.refresh()

        grad = chain.term_gradient(0, term, chain.caches[0])
        theta = chain.pack(term)
        for i in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[i] += STEP
            down[i] -= STEP
            targets = [chain.term_log_target(0, BasisTerm(S.copy(), *chain.unpack(t, S))) for t in (up, down)]
            fd = (targets[0] - targets[1]) / (2 * STEP)
            assert close(grad[i], fd, 1e-5), (trial, i, grad[i], fd)


def test_subset_ratios_equal_raw_density_ratios():
    rng = np.random.default_rng(3)
    p = 4
    for _ in range(500):
        cfg = PriorConfig(omega=list(rng.uniform(0.1, 2.0, size=p)), alpha_adding=rng.uniform(0.5, 0.99),
                          gamma_adding=rng.uniform(0.5, 3.0))
        omega = cfg.omega_for(p)
        size = int(rng.integers(1, p + 1))
        S = tuple(sorted(rng.choice(p, size=size, replace=False).tolist()))
        probs = move_probabilities(cfg, size, p)

        def out(T):
            return 1.0 - omega[list(T)].sum()

        def log_pi(T):
            return log_prior_subset(T, cfg, p)

        if probs["adding"] > 0:
            j = int(rng.choice([k for k in range(p) if k not in S]))
            new = tuple(sorted(S + (j,)))
            back = move_probabilities(cfg, len(new), p)["deleting"]
            oracle = (log_pi(new) + np.log(back / len(new))
                      - log_pi(S) - np.log(probs["adding"] * omega[j] / out(S)))
            closed = adding_log_ratio(len(new), p, cfg, probs["adding"], back, omega[j], out(S))
            assert abs(closed - oracle) <= 1e-10 * max(1.0, abs(oracle))

        if probs["deleting"] > 0:
            j = int(rng.choice(S))
            new = tuple(k for k in S if k != j)
            back = move_probabilities(cfg, len(new), p)["adding"]
            oracle = (log_pi(new) + np.log(back * omega[j] / out(new))
                      - log_pi(S) - np.log(probs["deleting"] / len(S)))
            closed = deleting_log_ratio(len(new), p, cfg, probs["deleting"], back, omega[j], out(new))
            assert abs(closed - oracle) <= 1e-10 * max(1.0, abs(oracle))

        if probs["changing"] > 0:
            removed = int(rng.choice(S))
            inserted = int(rng.choice([k for k in range(p) if k not in S]))
            new = tuple(sorted([k for k in S if k != removed] + [inserted]))
            oracle = (np.log(omega[removed] / out(new) / size)
                      - np.log(omega[inserted] / out(S) / size))
            closed = changing_log_ratio(omega[removed], out(S), omega[inserted], out(new))
            assert abs(closed - oracle) <= 1e-10 * max(1.0, abs(oracle))


def test_gibbs_noise_variance_moments():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(20, 2))
    ds = Dataset.from_arrays(x, rng.normal(size=20), "gaussian")
    prior = PriorConfig(v=3.0, **{"lambda": 0.5})
    chain = Chain(ds, prior, ChainConfig(), rng=np.random.default_rng(5), lam=0.5)
    shape = (20 + 3.0) / 2.0
    scale = (float(np.sum(chain.y ** 2)) + 1.5) / 2.0

    draws = np.array([chain.gibbs_sigma2() for _ in range(100_000)])
    raw = [invgamma.moment(k, shape, scale=scale) for k in range(1, 5)]
    mean = raw[0]
    variance = raw[1] - mean ** 2
    fourth = raw[3] - 4 * mean * raw[2] + 6 * mean ** 2 * raw[1] - 3 * mean ** 4

    assert abs(draws.mean() - mean) <= 3 * np.sqrt(variance / draws.size)
    assert abs(draws.var() - variance) <= 3 * np.sqrt((fourth - variance ** 2) / draws.size)


def test_crps_of_a_single_gaussian():
    mu, sigma = 0.7, 1.3
    samples = PosteriorSamples([ModelState([], eta=sigma ** 2)], "gaussian", [Marginal.uniform()], y_mean=mu)
    ys = np.array([-1.0, 0.0, 0.7, 2.0, 4.0])
    z = (ys - mu) / sigma
    exact = sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / np.sqrt(np.pi))
    value = crps(samples, np.full((5, 1), 0.5), ys, n_draws=10_000, seed=6)
    assert abs(value - exact.mean()) < 1e-2
