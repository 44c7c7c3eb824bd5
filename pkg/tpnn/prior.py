"""Prior densities and samplers for the number of terms, variable sets and term parameters."""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammainccinv, gammaln, logsumexp

from .basis import BasisTerm
from .exceptions import ConfigError
from .schemas import PriorConfig

if TYPE_CHECKING:
    from .data import Dataset
    from .likelihood import ModelState

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


def log_prior_K(k: int, cfg: PriorConfig, n: int) -> float:
    """``pi(K = k)`` proportional to ``n ** (-C0 * k)`` on ``{0, ..., K_max}``."""
    if not 0 <= k <= cfg.K_max:
        raise ValueError(f"K={k} is outside [0, {cfg.K_max}]")
    exponents = -cfg.C0 * np.log(n) * np.arange(cfg.K_max + 1)
    return float(exponents[k] - logsumexp(exponents))


def sample_K(cfg: PriorConfig, n: int, rng: np.random.Generator) -> int:
    logp = -cfg.C0 * np.log(n) * np.arange(cfg.K_max + 1)
    probs = np.exp(logp - logsumexp(logp))
    return int(rng.choice(cfg.K_max + 1, p=probs))


def p_adding(level, cfg: PriorConfig):
    """Probability of adding one more variable once ``level`` are present."""
    return cfg.alpha_adding * (1.0 + np.asarray(level, dtype=float)) ** (-cfg.gamma_adding)


def subset_weights(cfg: PriorConfig, p: int) -> np.ndarray:
    """Normalized prior probabilities of ``|S| = d`` for ``d = 1..p`` (entry ``d - 1``)."""
    if p < 1:
        raise ValueError("p must be at least 1")
    d = np.arange(1, p + 1)
    stop = 1.0 - p_adding(d, cfg)
    reach = np.concatenate(([1.0], np.cumprod(p_adding(d[:-1], cfg))))
    weights = stop * reach
    return weights / weights.sum()


def _log_binom(p: int, d: int) -> float:
    return float(gammaln(p + 1) - gammaln(d + 1) - gammaln(p - d + 1))


def log_prior_subset(S, cfg: PriorConfig, p: int) -> float:
    size = len(S)
    if size == 0:
        raise ValueError("the empty set has no prior mass")
    if size > p:
        raise ValueError(f"|S|={size} exceeds p={p}")
    return float(np.log(subset_weights(cfg, p)[size - 1]) - _log_binom(p, size))


def sample_subset(cfg: PriorConfig, p: int, rng: np.random.Generator) -> np.ndarray:
    size = int(rng.choice(p, p=subset_weights(cfg, p))) + 1
    return np.sort(rng.choice(p, size=size, replace=False))


def log_prior_beta(beta: float, cfg: PriorConfig) -> float:
    return -0.5 * (LOG_2PI + np.log(cfg.sigma_beta2)) - beta * beta / (2.0 * cfg.sigma_beta2)


def log_prior_gamma(gamma, cfg: PriorConfig):
    """Gamma log-density with shape ``a_gamma`` and scale ``b_gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(
            gamma > 0,
            (cfg.a_gamma - 1.0) * np.log(gamma) - gamma / cfg.b_gamma
            - cfg.a_gamma * np.log(cfg.b_gamma) - gammaln(cfg.a_gamma),
            -np.inf,
        )
    return value if value.ndim else float(value)


def log_prior_knots(b) -> float:
    b = np.asarray(b, dtype=float)
    return 0.0 if np.all((b >= 0.0) & (b <= 1.0)) else -np.inf


def log_prior_numeric(term: BasisTerm, cfg: PriorConfig) -> float:
    value = log_prior_beta(term.beta, cfg) + log_prior_knots(term.b)
    return float(value + np.sum(log_prior_gamma(term.gamma, cfg)))


def sample_knots(size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=size)


def sample_bandwidths(size: int, cfg: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.gamma(cfg.a_gamma, scale=cfg.b_gamma, size=size)


def sample_beta(cfg: PriorConfig, rng: np.random.Generator) -> float:
    return float(rng.normal(0.0, np.sqrt(cfg.sigma_beta2)))


def sample_term(S, cfg: PriorConfig, rng: np.random.Generator) -> BasisTerm:
    """Fresh term on the variable set ``S`` with knots, bandwidths and coefficient from the prior."""
    size = len(S)
    return BasisTerm(
        np.asarray(S, dtype=int),
        sample_knots(size, rng),
        sample_bandwidths(size, cfg, rng),
        sample_beta(cfg, rng),
    )


def _eta_shape_scale(cfg: PriorConfig, lam: float | None) -> tuple[float, float]:
    lam = cfg.lam if lam is None else lam
    if lam is None:
        raise ConfigError("lambda is unresolved; call resolve_lambda with the training data first")
    return cfg.v / 2.0, cfg.v * lam / 2.0


def log_prior_eta(sigma2: float, cfg: PriorConfig, lam: float | None = None) -> float:
    """Inverse-gamma log-density with shape ``v/2`` and scale ``v*lambda/2``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    shape, scale = _eta_shape_scale(cfg, lam)
    return float(
        shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(sigma2) - scale / sigma2
    )


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    return float(scale / rng.gamma(shape))


def sample_eta(cfg: PriorConfig, rng: np.random.Generator, lam: float | None = None) -> float:
    return sample_inverse_gamma(*_eta_shape_scale(cfg, lam), rng)


def ols_residual_variance(x: np.ndarray, y: np.ndarray) -> float:
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    residual = y - design @ coef
    dof = x.shape[0] - rank
    if dof < 1:
        return float(np.var(y)) or 1.0
    variance = float(residual @ residual / dof)
    return variance if variance > 0 else float(np.var(y)) or 1.0


def resolve_lambda(cfg: PriorConfig, ds: Dataset | None = None) -> float:
    """Value of ``lambda``; calibrated so that ``P(sigma2 <= OLS variance) = q_lambda`` when not given."""
    if cfg.lam is not None:
        return float(cfg.lam)
    if ds is None:
        raise ConfigError("q_lambda calibration needs the training data")
    if cfg.q_lambda is None:
        logger.warning(
            "neither lambda nor q_lambda was given; calibrating lambda at q_lambda=%s",
            cfg.effective_q_lambda(),
        )
    sigma2_ols = ols_residual_variance(ds.x, ds.y)
    shape = cfg.v / 2.0
    lam = 2.0 * sigma2_ols * float(gammainccinv(shape, cfg.effective_q_lambda())) / cfg.v
    logger.info("calibrated lambda=%.6g from OLS residual variance %.6g", lam, sigma2_ols)
    return lam


def log_prior_state(state: ModelState, cfg: PriorConfig, p: int, n: int, *,
                    family: str = "gaussian", lam: float | None = None) -> float:
    total = log_prior_K(state.K, cfg, n)
    for term in state.terms:
        total += log_prior_subset(term.S, cfg, p) + log_prior_numeric(term, cfg)
    if family == "gaussian":
        total += log_prior_eta(state.eta, cfg, lam)
    return float(total)


def move_probabilities(cfg: PriorConfig, size: int, p: int) -> dict[str, float]:
    """Adding/deleting/changing probabilities at ``|S| = size``, renormalized over the feasible moves."""
    raw = {
        "adding": cfg.q_add if size < p else 0.0,
        "deleting": cfg.q_delete if size > 1 else 0.0,
        "changing": cfg.q_change if size < p else 0.0,
    }
    total = sum(raw.values())
    if total <= 0:
        return {move: 0.0 for move in raw}
    return {move: q / total for move, q in raw.items()}
