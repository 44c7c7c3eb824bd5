"""Posterior summaries: predictions, component estimates, importance and stability."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from math import comb
from typing import Any, Iterable, NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logsumexp
from scipy.stats import norm

from .basis import eval_basis
from .data import ColumnMeta, Marginal, Preprocessor
from .exceptions import PosteriorError
from .likelihood import ModelState, get_family, log_density

logger = logging.getLogger(__name__)

CREDIBLE_LEVELS = (0.025, 0.975)


@dataclass(eq=False)
class PosteriorSamples:
    """Ordered post-burn-in states with everything needed to evaluate them.

    The states live on the centered response scale for the gaussian family;
    ``y_mean`` is added back by point predictions and subtracted from
    responses before densities are evaluated.
    """

    states: list[ModelState]
    family: str
    marginals: list[Marginal]
    y_mean: float = 0.0
    chain_ids: list[int] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    preprocessor: Preprocessor | None = None
    columns: tuple[ColumnMeta, ...] = ()

    def __post_init__(self) -> None:
        get_family(self.family)
        if not self.chain_ids:
            self.chain_ids = [0] * len(self.states)
        if len(self.chain_ids) != len(self.states):
            raise ValueError("one chain id per state is required")
        for state in self.states:
            for term in state.terms:
                if term.S[-1] >= self.p:
                    raise ValueError(f"term on {term.key} exceeds p={self.p}")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def p(self) -> int:
        return len(self.marginals)

    def require_states(self) -> None:
        if not self.states:
            raise PosteriorError("posterior samples are empty")

    @classmethod
    def concatenate(cls, parts: list[PosteriorSamples]) -> PosteriorSamples:
        """Stack chains one after another; metadata comes from the first part."""
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        return cls(
            states=[state for part in parts for state in part.states],
            family=first.family,
            marginals=first.marginals,
            y_mean=first.y_mean,
            chain_ids=[cid for part in parts for cid in part.chain_ids],
            meta=dict(first.meta),
            preprocessor=first.preprocessor,
            columns=first.columns,
        )

    def natural_parameters(self, xs: np.ndarray) -> np.ndarray:
        """``f_theta(x)`` for every state (rows) and every input row (columns)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = np.zeros((len(self.states), xs.shape[0]))
        for s, state in enumerate(self.states):
            for term in state.terms:
                out[s] += term.beta * eval_basis(xs, term, self.marginals)
        return out

    def dispersions(self) -> np.ndarray:
        if get_family(self.family).has_dispersion:
            return np.array([state.eta for state in self.states])
        return np.ones(len(self.states))


def log_predictive_density(samples: PosteriorSamples, xs: np.ndarray, ys) -> np.ndarray:
    samples.require_states()
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float)) - samples.y_mean
    f = samples.natural_parameters(xs)
    etas = samples.dispersions()
    per_state = np.vstack([
        log_density(samples.family, f[s], ys, eta) for s, eta in enumerate(etas)
    ])
    return logsumexp(per_state, axis=0) - np.log(len(samples))


def predictive_density(samples: PosteriorSamples, x, y):
    """Average of the per-state densities of ``y`` at ``x``."""
    single = np.ndim(x) == 1
    value = np.exp(log_predictive_density(samples, x, y))
    return float(value[0]) if single and np.ndim(y) == 0 else value


def predictive_point(samples: PosteriorSamples, x):
    """Bayes estimate: mean response (gaussian), class-1 probability or Poisson rate."""
    samples.require_states()
    single = np.ndim(x) == 1
    f = samples.natural_parameters(x)
    if samples.family == "gaussian":
        value = f.mean(axis=0) + samples.y_mean
    elif samples.family == "bernoulli":
        value = expit(f).mean(axis=0)
    else:
        value = np.exp(f).mean(axis=0)
    return float(value[0]) if single else value


def predictive_quantiles(samples: PosteriorSamples, xs: np.ndarray,
                         levels: Iterable[float] = CREDIBLE_LEVELS) -> np.ndarray:
    """Exact quantiles of the gaussian predictive mixture; one row per input, one column per level."""
    samples.require_states()
    if samples.family != "gaussian":
        raise ValueError("predictive quantiles are defined for the gaussian family only")
    levels = list(levels)
    means = samples.natural_parameters(xs) + samples.y_mean
    scales = np.sqrt(samples.dispersions())
    out = np.empty((means.shape[1], len(levels)))
    for i in range(means.shape[1]):
        mu = means[:, i]
        lo = mu.min() - 12.0 * scales.max()
        hi = mu.max() + 12.0 * scales.max()
        for c, level in enumerate(levels):
            out[i, c] = brentq(
                lambda t: norm.cdf((t - mu) / scales).mean() - level, lo, hi, xtol=1e-12
            )
    return out


def sample_predictive(samples: PosteriorSamples, x: np.ndarray, n_draws: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Draws from the gaussian predictive mixture at one input row."""
    samples.require_states()
    f = samples.natural_parameters(x)[:, 0] + samples.y_mean
    scales = np.sqrt(samples.dispersions())
    which = rng.integers(len(samples), size=n_draws)
    return f[which] + scales[which] * rng.standard_normal(n_draws)


class ComponentEstimate(NamedTuple):
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def component_draws(samples: PosteriorSamples, S, xs: np.ndarray) -> np.ndarray:
    """``f_S`` per state (rows) at every input (columns); zero where no term matches."""
    key = tuple(sorted(int(j) for j in S))
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    out = np.zeros((len(samples.states), xs.shape[0]))
    for s, state in enumerate(samples.states):
        for term in state.terms:
            if term.key == key:
                out[s] += term.beta * eval_basis(xs, term, samples.marginals)
    return out


def component_estimate(samples: PosteriorSamples, S, xs: np.ndarray) -> ComponentEstimate:
    samples.require_states()
    draws = component_draws(samples, S, xs)
    lo, hi = np.quantile(draws, CREDIBLE_LEVELS, axis=0)
    return ComponentEstimate(draws.mean(axis=0), lo, hi)


def visited_sets(samples: PosteriorSamples) -> list[tuple[int, ...]]:
    keys = {term.key for state in samples.states for term in state.terms}
    return sorted(keys, key=lambda key: (len(key), key))


def importance_scores(samples: PosteriorSamples, xs: np.ndarray, *, normalize: bool = False,
                      per_sample: bool = False) -> dict[tuple[int, ...], float]:
    """Empirical L2 norm over ``xs`` of every visited component.

    By default the norm of the posterior-mean component; ``per_sample``
    averages the per-state norms instead.
    """
    samples.require_states()
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n_states = len(samples)
    sums: dict[tuple[int, ...], np.ndarray] = defaultdict(lambda: np.zeros(xs.shape[0]))
    norms: dict[tuple[int, ...], float] = defaultdict(float)
    for state in samples.states:
        current: dict[tuple[int, ...], np.ndarray] = defaultdict(lambda: np.zeros(xs.shape[0]))
        for term in state.terms:
            current[term.key] += term.beta * eval_basis(xs, term, samples.marginals)
        for key, values in current.items():
            sums[key] += values
            norms[key] += float(np.sqrt(np.mean(values ** 2)))
    if per_sample:
        scores = {key: total / n_states for key, total in norms.items()}
    else:
        scores = {key: float(np.sqrt(np.mean((total / n_states) ** 2))) for key, total in sums.items()}
    if normalize and scores:
        top = max(scores.values())
        if top > 0:
            scores = {key: score / top for key, score in scores.items()}
    return scores


def rank_importance(scores: dict[tuple[int, ...], float]) -> list[tuple[tuple[int, ...], float]]:
    return sorted(scores.items(), key=lambda item: (-item[1], len(item[0]), item[0]))


def stability_score(estimates) -> float:
    """Mean over rows of the across-fold squared deviation relative to the squared fold values.

    ``estimates`` is folds x rows. Rows where every fold is zero are left out.
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.ndim != 2 or estimates.shape[0] < 2:
        raise ValueError("stability needs at least two folds evaluated on common rows")
    deviation = np.sum((estimates - estimates.mean(axis=0)) ** 2, axis=0)
    scale = np.sum(estimates ** 2, axis=0)
    kept = scale > 0
    if not kept.any():
        raise PosteriorError("every fold estimate is zero at every row")
    return float(np.mean(deviation[kept] / scale[kept]))


def stability_by_order(scores: dict[tuple[int, ...], float], max_order: int, p: int) -> float:
    """Average stability over every variable set of order at most ``max_order``.

    Sets missing from ``scores`` were never estimated as non-zero and count as 0.
    """
    n_sets = sum(comb(p, k) for k in range(1, max_order + 1))
    total = sum(score for key, score in scores.items() if len(key) <= max_order)
    return float(total / n_sets)
