"""Sum-to-zero tensor-product basis functions.

One factor of a basis term is ``1 - sigmoid((x - b) / gamma) / m`` where
``m`` is the mean of the sigmoid under the column's marginal. Averaging a
factor over its marginal therefore gives exactly zero, and so does averaging
a whole term over any one of its coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .exceptions import DegenerateBasisError

if TYPE_CHECKING:
    from .data import Marginal

MIN_SIGMOID_MEAN = 1e-12


@dataclass(eq=False)
class BasisTerm:
    """One unit ``beta * prod_j (1 - sigmoid((x_j - b_j) / gamma_j) / m_j)``.

    ``S`` holds sorted, distinct 0-based column indices.
    """

    S: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: float

    def __post_init__(self) -> None:
        self.S = np.asarray(self.S, dtype=int)
        self.b = np.asarray(self.b, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.beta = float(self.beta)
        if self.S.ndim != 1 or self.S.size == 0:
            raise ValueError("a basis term needs a non-empty variable set")
        if np.any(np.diff(self.S) <= 0) or self.S[0] < 0:
            raise ValueError(f"variable set must be sorted, distinct and non-negative: {self.S}")
        if self.b.shape != self.S.shape or self.gamma.shape != self.S.shape:
            raise ValueError("b and gamma need one entry per variable in S")
        if np.any(self.gamma <= 0):
            raise ValueError("bandwidths must be positive")

    @property
    def order(self) -> int:
        return int(self.S.size)

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(int(j) for j in self.S)

    def copy(self) -> BasisTerm:
        return BasisTerm(self.S.copy(), self.b.copy(), self.gamma.copy(), self.beta)

    def __repr__(self) -> str:
        return f"BasisTerm(S={self.key}, beta={self.beta:.4g})"


class SigmoidMoments(NamedTuple):
    """Marginal means a factor and its gradients need.

    ``m`` is the mean of ``sigmoid(t)``, ``dsig`` the mean of
    ``sigmoid'(t)`` and ``zdsig`` the mean of ``(u - b) / gamma**2 *
    sigmoid'(t)``, all with ``t = (u - b) / gamma``.
    """

    m: float
    dsig: float
    zdsig: float


def _softplus(t):
    return np.logaddexp(0.0, t)


def sigmoid_moments(marginal: Marginal, b: float, gamma: float) -> SigmoidMoments:
    if marginal.kind == "uniform":
        t0, t1 = -b / gamma, (1.0 - b) / gamma
        s0, s1 = expit(t0), expit(t1)
        m = gamma * (_softplus(t1) - _softplus(t0))
        dsig = gamma * (s1 - s0)
        zdsig = (t1 * s1 - _softplus(t1)) - (t0 * s0 - _softplus(t0))
        return SigmoidMoments(float(m), float(dsig), float(zdsig))
    t = (marginal.values - b) / gamma
    s = expit(t)
    ds = s * (1.0 - s)
    return SigmoidMoments(float(s.mean()), float(ds.mean()), float(np.mean(t * ds) / gamma))


def sigmoid_mean(marginal: Marginal, b: float, gamma: float) -> float:
    """Mean of ``sigmoid((u - b) / gamma)`` for ``u`` drawn from the marginal."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if marginal.kind == "uniform":
        return float(gamma * (_softplus((1.0 - b) / gamma) - _softplus(-b / gamma)))
    return float(expit((marginal.values - b) / gamma).mean())


def is_degenerate(m: float) -> bool:
    return not m >= MIN_SIGMOID_MEAN


def _clamped(m: float) -> float:
    return min(max(m, MIN_SIGMOID_MEAN), 1.0 - MIN_SIGMOID_MEAN)


def c_correction(marginal: Marginal, b: float, gamma: float) -> float:
    m = sigmoid_mean(marginal, b, gamma)
    if is_degenerate(m):
        raise DegenerateBasisError(f"sigmoid mean {m!r} at b={b!r}, gamma={gamma!r}")
    m = _clamped(m)
    return -(1.0 - m) / m


def eval_factor(x_j, b: float, gamma: float, c: float):
    s = expit((np.asarray(x_j, dtype=float) - b) / gamma)
    value = 1.0 - s + c * s
    return value if np.ndim(value) else float(value)


def factor_values(x_j: np.ndarray, b: float, gamma: float, m: float) -> np.ndarray:
    return 1.0 - expit((x_j - b) / gamma) / _clamped(m)


def basis_values(x: np.ndarray, term: BasisTerm, ms: Sequence[float]) -> np.ndarray:
    """Unscaled basis over the rows of ``x`` given precomputed sigmoid means."""
    values = np.ones(x.shape[0])
    for j, b, gamma, m in zip(term.S, term.b, term.gamma, ms):
        values *= factor_values(x[:, j], b, gamma, m)
    return values


def eval_basis(x: np.ndarray, term: BasisTerm, marginals: Sequence[Marginal]):
    """Basis value (``beta`` not applied) for one row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(x)
    if term.S[-1] >= rows.shape[1] or term.S[-1] >= len(marginals):
        raise IndexError(f"variable set {term.key} exceeds the {rows.shape[1]} available columns")
    ms = [sigmoid_mean(marginals[j], b, g) for j, b, g in zip(term.S, term.b, term.gamma)]
    values = basis_values(rows, term, ms)
    return values if x.ndim == 2 else float(values[0])


def grad_from_moments(x_j, b: float, gamma: float, moments: SigmoidMoments):
    """Partial derivatives of one factor in ``b`` and ``gamma``."""
    m, dsig, zdsig = moments
    if is_degenerate(m):
        raise DegenerateBasisError(f"sigmoid mean {m!r} at b={b!r}, gamma={gamma!r}")
    m = _clamped(m)
    x_j = np.asarray(x_j, dtype=float)
    z = (x_j - b) / gamma
    s = expit(z)
    ds = s * (1.0 - s)
    d_b = ds / (gamma * m) - s * dsig / (gamma * m * m)
    d_gamma = (z / gamma) * ds / m - s * zdsig / (m * m)
    return d_b, d_gamma


def grad_factor(x_j, b: float, gamma: float, marginal: Marginal):
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d_b, d_gamma = grad_from_moments(x_j, b, gamma, sigmoid_moments(marginal, b, gamma))
    if np.ndim(d_b) == 0:
        return float(d_b), float(d_gamma)
    return d_b, d_gamma
