"""Exponential-family likelihoods and evaluation of the additive model.

The density of one response is ``exp((f*y - A(f)) / eta + S(y, eta))``. Each
family supplies the log-partition ``A`` with its first two derivatives, the
base measure ``S`` and its support check.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import expit, gammaln

from .basis import BasisTerm, eval_basis
from .exceptions import SupportError

if TYPE_CHECKING:
    from .data import Dataset, Marginal

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class Family(ABC):
    tag: str
    has_dispersion = False

    @abstractmethod
    def log_partition(self, f: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def mean(self, f: np.ndarray) -> np.ndarray:
        """First derivative of the log-partition."""

    @abstractmethod
    def variance(self, f: np.ndarray) -> np.ndarray:
        """Second derivative of the log-partition."""

    @abstractmethod
    def base_measure(self, y: np.ndarray, eta: float) -> np.ndarray:
        ...

    @abstractmethod
    def in_support(self, y: np.ndarray) -> np.ndarray:
        ...

    def check_support(self, y) -> None:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        ok = self.in_support(y)
        if not ok.all():
            bad = y[~ok][0]
            raise SupportError(f"response {bad!r} is outside the support of the {self.tag} family")

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class Gaussian(Family):
    tag = "gaussian"
    has_dispersion = True

    def log_partition(self, f):
        return 0.5 * np.square(f)

    def mean(self, f):
        return np.asarray(f, dtype=float)

    def variance(self, f):
        return np.ones_like(np.asarray(f, dtype=float))

    def base_measure(self, y, eta):
        return -np.square(y) / (2.0 * eta) - 0.5 * (LOG_2PI + np.log(eta))

    def in_support(self, y):
        return np.isfinite(y)


class Bernoulli(Family):
    tag = "bernoulli"

    def log_partition(self, f):
        return np.logaddexp(0.0, f)

    def mean(self, f):
        return expit(f)

    def variance(self, f):
        mu = expit(f)
        return mu * (1.0 - mu)

    def base_measure(self, y, eta):
        return np.zeros_like(np.asarray(y, dtype=float))

    def in_support(self, y):
        return (y == 0.0) | (y == 1.0)


class Poisson(Family):
    tag = "poisson"

    def log_partition(self, f):
        with np.errstate(over="ignore"):
            return np.exp(f)

    def mean(self, f):
        with np.errstate(over="ignore"):
            return np.exp(f)

    def variance(self, f):
        with np.errstate(over="ignore"):
            return np.exp(f)

    def base_measure(self, y, eta):
        return -gammaln(np.asarray(y, dtype=float) + 1.0)

    def in_support(self, y):
        return np.isfinite(y) & (y >= 0.0) & (np.floor(y) == y)


FAMILIES: dict[str, Family] = {family.tag: family for family in (Gaussian(), Bernoulli(), Poisson())}


def get_family(family: str | Family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}"
        ) from None


@dataclass
class ModelState:
    """Parameters walked by the chain: the basis terms and the dispersion ``eta``."""

    terms: list[BasisTerm] = field(default_factory=list)
    eta: float = 1.0

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")

    @property
    def K(self) -> int:
        return len(self.terms)

    def copy(self) -> ModelState:
        return ModelState([term.copy() for term in self.terms], self.eta)


def log_density(family: str | Family, f, y, eta: float = 1.0):
    """Log-density of ``y`` at natural parameter ``f``; vectorized over rows."""
    law = get_family(family)
    y = np.asarray(y, dtype=float)
    law.check_support(y)
    if not eta > 0:
        raise ValueError("eta must be positive")
    f = np.asarray(f, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        value = (f * y - law.log_partition(f)) / eta + law.base_measure(y, eta)
    return value if value.ndim else float(value)


def dlog_density_df(family: str | Family, f, y, eta: float = 1.0):
    law = get_family(family)
    y = np.asarray(y, dtype=float)
    law.check_support(y)
    value = (y - law.mean(np.asarray(f, dtype=float))) / eta
    return value if np.ndim(value) else float(value)


def model_eval(state: ModelState, x: np.ndarray, marginals: Sequence[Marginal]):
    """``sum_k beta_k * phi_k(x)`` for one row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(x)
    total = np.zeros(rows.shape[0])
    for term in state.terms:
        total += term.beta * eval_basis(rows, term, marginals)
    return total if x.ndim == 2 else float(total[0])


def log_likelihood(state: ModelState, ds: Dataset, marginals: Sequence[Marginal], *,
                   offset: float = 0.0, fitted: np.ndarray | None = None) -> float:
    """Sum of per-row log-densities.

    ``offset`` is subtracted from the responses (the gaussian centering);
    ``fitted`` short-circuits model evaluation with cached per-row values.
    """
    if fitted is None:
        fitted = model_eval(state, ds.x, marginals)
    eta = state.eta if get_family(ds.family).has_dispersion else 1.0
    return float(np.sum(log_density(ds.family, fitted, ds.y - offset, eta)))
