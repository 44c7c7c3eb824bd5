"""Reversible-jump MCMC over additive tensor-product models.

One iteration runs a birth/death move on the number of terms, then for each
term a variable-set move (adding, deleting or changing one variable) and a
Langevin move on its knots, bandwidths and coefficient, and finally a Gibbs
draw of the gaussian noise variance.

A :class:`Chain` keeps per-term caches (sigmoid moments, factor values and
basis values) plus the fitted values ``f(x_i)`` so that every move only pays
for the term it touches.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from django.conf import settings

from . import prior as priors
from .basis import (
    BasisTerm,
    SigmoidMoments,
    factor_values,
    grad_from_moments,
    is_degenerate,
    sigmoid_moments,
)
from .data import Dataset
from .exceptions import DataValidationError
from .inference import PosteriorSamples
from .likelihood import ModelState, get_family, model_eval
from .schemas import ChainConfig, PriorConfig

logger = logging.getLogger(__name__)

MOVES = ("birth", "death", "adding", "deleting", "changing", "langevin")
RNG_NAME = "PCG64"


def _setting(name: str, default):
    return getattr(settings, name, default) if settings.configured else default


@dataclass
class MoveStats:
    proposed: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    accepted: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVES, 0))

    def record(self, move: str, accepted: bool) -> None:
        self.proposed[move] += 1
        if accepted:
            self.accepted[move] += 1

    def rate(self, move: str) -> float:
        proposed = self.proposed[move]
        return self.accepted[move] / proposed if proposed else float("nan")

    def merge(self, other: MoveStats) -> MoveStats:
        return MoveStats(
            {m: self.proposed[m] + other.proposed[m] for m in MOVES},
            {m: self.accepted[m] + other.accepted[m] for m in MOVES},
        )

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {m: {"proposed": self.proposed[m], "accepted": self.accepted[m]} for m in MOVES}


@dataclass(frozen=True)
class TraceRow:
    chain: int
    iteration: int
    K: int
    log_likelihood: float
    sigma2: float
    acceptance: dict[str, float]


@dataclass
class TermCache:
    moments: list[SigmoidMoments]
    factors: np.ndarray
    phi: np.ndarray


def adding_log_ratio(new_size: int, p: int, cfg: PriorConfig, q_add: float, q_delete_new: float,
                     omega_added: float, omega_outside: float) -> float:
    """Prior times proposal ratio of adding one variable, reaching ``|S_new| = new_size``."""
    d = float(new_size)
    a, g = cfg.alpha_adding, cfg.gamma_adding
    return float(
        np.log(a * d ** -g) + np.log1p(-a * (1.0 + d) ** -g) - np.log1p(-a * d ** -g)
        - np.log(p - d + 1.0)
        + np.log(q_delete_new) - np.log(q_add)
        + np.log(omega_outside) - np.log(omega_added)
    )


def deleting_log_ratio(new_size: int, p: int, cfg: PriorConfig, q_delete: float, q_add_new: float,
                       omega_deleted: float, omega_outside_new: float) -> float:
    """Prior times proposal ratio of deleting one variable, reaching ``|S_new| = new_size``."""
    d = float(new_size)
    a, g = cfg.alpha_adding, cfg.gamma_adding
    return float(
        -np.log(a * (1.0 + d) ** -g) + np.log1p(-a * (1.0 + d) ** -g) - np.log1p(-a * (2.0 + d) ** -g)
        + np.log(p - d)
        + np.log(q_add_new) - np.log(q_delete)
        + np.log(omega_deleted) - np.log(omega_outside_new)
    )


def changing_log_ratio(omega_removed: float, omega_outside: float, omega_inserted: float,
                       omega_outside_new: float) -> float:
    return float(
        np.log(omega_removed) + np.log(omega_outside)
        - np.log(omega_inserted) - np.log(omega_outside_new)
    )


class Chain:
    """State and kernels of a single Markov chain."""

    def __init__(self, ds: Dataset, prior: PriorConfig, config: ChainConfig, *,
                 rng: np.random.Generator, chain_id: int = 0, lam: float | None = None) -> None:
        if ds.n < 2:
            raise DataValidationError(f"fitting needs at least two rows, got {ds.n}")
        self.ds = ds
        self.prior = prior
        self.config = config
        self.rng = rng
        self.chain_id = chain_id
        self.family = get_family(ds.family)
        self.x = ds.x
        self.n, self.p = ds.n, ds.p
        self.log_n = float(np.log(self.n))
        self.marginals = ds.marginals(config.marginal_kind)
        self.offset = float(ds.y.mean()) if self.family.has_dispersion else 0.0
        self.y = ds.y - self.offset
        self.omega = prior.omega_for(self.p)
        self.flat = config.sample_prior
        if self.family.has_dispersion and lam is None:
            lam = priors.resolve_lambda(prior, ds)
        self.lam = lam if self.family.has_dispersion else None
        self.stats = MoveStats()
        self._accepted_since_refresh = 0

        eta = (float(np.var(self.y)) or 1.0) if self.family.has_dispersion else 1.0
        self.state = ModelState([], eta)
        self.caches: list[TermCache] = []
        self.fitted = np.zeros(self.n)
        while self.state.K < min(config.initial_K, prior.K_max):
            term = priors.sample_term(priors.sample_subset(prior, self.p, rng), prior, rng)
            cache = self.build_cache(term)
            if cache is not None:
                self._append(term, cache)
        self.loglik = self.log_likelihood_of(self.fitted, self.state.eta)

    # likelihood bookkeeping

    def log_likelihood_of(self, fitted: np.ndarray, eta: float) -> float:
        if self.flat:
            return 0.0
        law = self.family
        with np.errstate(over="ignore", invalid="ignore"):
            value = np.sum((fitted * self.y - law.log_partition(fitted)) / eta
                           + law.base_measure(self.y, eta))
        return float(value) if np.isfinite(value) else -np.inf

    def build_cache(self, term: BasisTerm) -> TermCache | None:
        moments = [
            sigmoid_moments(self.marginals[j], b, g) for j, b, g in zip(term.S, term.b, term.gamma)
        ]
        if any(is_degenerate(mo.m) for mo in moments):
            logger.debug("chain %d: degenerate sigmoid mean for term on %s", self.chain_id, term.key)
            return None
        factors = np.vstack([
            factor_values(self.x[:, j], b, g, mo.m)
            for j, b, g, mo in zip(term.S, term.b, term.gamma, moments)
        ])
        return TermCache(moments, factors, factors.prod(axis=0))

    def _append(self, term: BasisTerm, cache: TermCache) -> None:
        self.state.terms.append(term)
        self.caches.append(cache)
        self.fitted = self.fitted + term.beta * cache.phi

    def _accepted(self, move: str) -> None:
        self.stats.record(move, True)
        self._accepted_since_refresh += 1
        if self._accepted_since_refresh >= self.config.refresh_every:
            self.refresh()

    def refresh(self) -> None:
        """Rebuild the fitted values from the cached basis values."""
        fitted = np.zeros(self.n)
        for term, cache in zip(self.state.terms, self.caches):
            fitted += term.beta * cache.phi
        self.fitted = fitted
        self.loglik = self.log_likelihood_of(fitted, self.state.eta)
        self._accepted_since_refresh = 0

    def recomputed_fitted(self) -> np.ndarray:
        """Fitted values evaluated from scratch, bypassing every cache."""
        return model_eval(self.state, self.x, self.marginals)

    def _accept(self, log_ratio: float) -> bool:
        if not np.isfinite(log_ratio):
            return log_ratio > 0
        return bool(np.log(self.rng.uniform()) < log_ratio)

    # proposal helpers

    def _omega_outside(self, S) -> float:
        return float(1.0 - self.omega[np.asarray(S, dtype=int)].sum())

    def _draw_outside(self, S) -> int:
        mask = np.ones(self.p, dtype=bool)
        mask[np.asarray(S, dtype=int)] = False
        candidates = np.flatnonzero(mask)
        weights = self.omega[candidates]
        return int(self.rng.choice(candidates, p=weights / weights.sum()))

    def birth_probability(self, K: int) -> float:
        return 1.0 - K / self.prior.K_max

    def log_subset_proposal(self, S, terms: list[BasisTerm]) -> float:
        """Log-density of the birth proposal for ``S`` given the existing terms."""
        K = len(terms)
        M = self.prior.M
        log_pi = priors.log_prior_subset(S, self.prior, self.p)
        if K == 0:
            return log_pi
        key = set(int(j) for j in S)
        stepwise = 0.0
        for term in terms:
            existing = set(term.key)
            if len(existing) == self.p:
                stepwise += np.exp(log_pi)
            elif existing < key and len(key) == len(existing) + 1:
                (added,) = key - existing
                stepwise += self.omega[added] / self._omega_outside(term.S)
        return float(np.log(M / (M + K) * np.exp(log_pi) + stepwise / (M + K)))

    def propose_subset(self) -> np.ndarray:
        K = self.state.K
        if self.rng.uniform() < self.prior.M / (self.prior.M + K):
            return priors.sample_subset(self.prior, self.p, self.rng)
        base = self.state.terms[int(self.rng.integers(K))]
        if base.order == self.p:
            return priors.sample_subset(self.prior, self.p, self.rng)
        return np.sort(np.append(base.S, self._draw_outside(base.S)))

    # kernels

    def update_K(self) -> bool:
        K = self.state.K
        if self.rng.uniform() < self.birth_probability(K):
            return self._birth()
        return self._death()

    def _birth(self) -> bool:
        K = self.state.K
        S = self.propose_subset()
        term = priors.sample_term(S, self.prior, self.rng)
        cache = self.build_cache(term)
        if cache is None:
            self.stats.record("birth", False)
            return False
        fitted = self.fitted + term.beta * cache.phi
        loglik = self.log_likelihood_of(fitted, self.state.eta)
        log_ratio = (
            loglik - self.loglik
            - self.prior.C0 * self.log_n
            + priors.log_prior_subset(S, self.prior, self.p)
            + np.log((K + 1) / self.prior.K_max)
            - np.log(self.birth_probability(K))
            - self.log_subset_proposal(S, self.state.terms)
        )
        if not self._accept(log_ratio):
            self.stats.record("birth", False)
            return False
        self.state.terms.append(term)
        self.caches.append(cache)
        self.fitted, self.loglik = fitted, loglik
        self._accepted("birth")
        return True

    def _death(self) -> bool:
        K = self.state.K
        k = int(self.rng.integers(K))
        term, cache = self.state.terms[k], self.caches[k]
        remaining = self.state.terms[:k] + self.state.terms[k + 1:]
        fitted = self.fitted - term.beta * cache.phi
        loglik = self.log_likelihood_of(fitted, self.state.eta)
        log_ratio = (
            loglik - self.loglik
            + self.prior.C0 * self.log_n
            - priors.log_prior_subset(term.S, self.prior, self.p)
            - np.log(K / self.prior.K_max)
            + np.log(self.birth_probability(K - 1))
            + self.log_subset_proposal(term.S, remaining)
        )
        if not self._accept(log_ratio):
            self.stats.record("death", False)
            return False
        del self.state.terms[k]
        del self.caches[k]
        self.fitted, self.loglik = fitted, loglik
        self._accepted("death")
        return True

    def update_subset(self, k: int) -> bool:
        term = self.state.terms[k]
        size = term.order
        probs = priors.move_probabilities(self.prior, size, self.p)
        if not any(probs.values()):
            return False
        moves = list(probs)
        move = moves[int(self.rng.choice(len(moves), p=[probs[m] for m in moves]))]

        if move == "adding":
            j = self._draw_outside(term.S)
            new_S = np.sort(np.append(term.S, j))
            log_prior_ratio = adding_log_ratio(
                size + 1, self.p, self.prior, probs["adding"],
                priors.move_probabilities(self.prior, size + 1, self.p)["deleting"],
                self.omega[j], self._omega_outside(term.S),
            )
            proposal = self._with_variables(term, new_S, inserted=[j])
        elif move == "deleting":
            j = int(term.S[int(self.rng.integers(size))])
            new_S = term.S[term.S != j]
            log_prior_ratio = deleting_log_ratio(
                size - 1, self.p, self.prior, probs["deleting"],
                priors.move_probabilities(self.prior, size - 1, self.p)["adding"],
                self.omega[j], self._omega_outside(new_S),
            )
            proposal = self._with_variables(term, new_S, inserted=[])
        else:
            j_out = int(term.S[int(self.rng.integers(size))])
            j_in = self._draw_outside(term.S)
            new_S = np.sort(np.append(term.S[term.S != j_out], j_in))
            log_prior_ratio = changing_log_ratio(
                self.omega[j_out], self._omega_outside(term.S),
                self.omega[j_in], self._omega_outside(new_S),
            )
            proposal = self._with_variables(term, new_S, inserted=[j_in])

        return self._finish_term_move(k, move, proposal, log_prior_ratio)

    def _with_variables(self, term: BasisTerm, new_S: np.ndarray, inserted: list[int]) -> BasisTerm:
        """Copy ``term`` onto ``new_S``; inserted coordinates get fresh knots and bandwidths."""
        old = {int(j): (b, g) for j, b, g in zip(term.S, term.b, term.gamma)}
        b = np.empty(new_S.size)
        gamma = np.empty(new_S.size)
        for i, j in enumerate(new_S):
            if int(j) in inserted:
                b[i] = priors.sample_knots(1, self.rng)[0]
                gamma[i] = priors.sample_bandwidths(1, self.prior, self.rng)[0]
            else:
                b[i], gamma[i] = old[int(j)]
        return BasisTerm(new_S, b, gamma, term.beta)

    def _finish_term_move(self, k: int, move: str, proposal: BasisTerm, log_prior_ratio: float,
                          cache: TermCache | None = None) -> bool:
        cache = cache or self.build_cache(proposal)
        if cache is None:
            self.stats.record(move, False)
            return False
        old_term, old_cache = self.state.terms[k], self.caches[k]
        fitted = self.fitted - old_term.beta * old_cache.phi + proposal.beta * cache.phi
        loglik = self.log_likelihood_of(fitted, self.state.eta)
        if not self._accept(loglik - self.loglik + log_prior_ratio):
            self.stats.record(move, False)
            return False
        self.state.terms[k] = proposal
        self.caches[k] = cache
        self.fitted, self.loglik = fitted, loglik
        self._accepted(move)
        return True

    # Langevin move

    @staticmethod
    def pack(term: BasisTerm) -> np.ndarray:
        return np.concatenate([term.b, term.gamma, [term.beta]])

    @staticmethod
    def unpack(theta: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        d = S.size
        return theta[:d], theta[d:2 * d], float(theta[-1])

    def term_log_target(self, k: int, term: BasisTerm, cache: TermCache | None = None) -> float:
        """Log-likelihood plus the numeric log-prior of ``term`` placed at position ``k``."""
        cache = cache or self.build_cache(term)
        if cache is None:
            return -np.inf
        old_term, old_cache = self.state.terms[k], self.caches[k]
        fitted = self.fitted - old_term.beta * old_cache.phi + term.beta * cache.phi
        return self.log_likelihood_of(fitted, self.state.eta) + priors.log_prior_numeric(term, self.prior)

    def term_gradient(self, k: int, term: BasisTerm, cache: TermCache | None = None) -> np.ndarray:
        """Gradient of :meth:`term_log_target` in ``(b, gamma, beta)``."""
        cache = cache or self.build_cache(term)
        old_term, old_cache = self.state.terms[k], self.caches[k]
        d = term.order
        grad = np.zeros(2 * d + 1)
        if self.flat:
            residual = np.zeros(self.n)
        else:
            fitted = self.fitted - old_term.beta * old_cache.phi + term.beta * cache.phi
            residual = (self.y - self.family.mean(fitted)) / self.state.eta
        grad[-1] = residual @ cache.phi - term.beta / self.prior.sigma_beta2
        for i, (j, b, g, mo) in enumerate(zip(term.S, term.b, term.gamma, cache.moments)):
            others = np.prod(np.delete(cache.factors, i, axis=0), axis=0)
            d_b, d_gamma = grad_from_moments(self.x[:, j], b, g, mo)
            weighted = term.beta * residual * others
            grad[i] = weighted @ d_b
            grad[d + i] = weighted @ d_gamma + (self.prior.a_gamma - 1.0) / g - 1.0 / self.prior.b_gamma
        return grad

    def update_langevin(self, k: int) -> bool:
        term, cache = self.state.terms[k], self.caches[k]
        eps = self.prior.step_size
        half = 0.5 * eps * eps
        theta = self.pack(term)
        grad = self.term_gradient(k, term, cache)
        forward_mean = theta + half * grad
        theta_new = forward_mean + eps * self.rng.standard_normal(theta.size)
        b_new, gamma_new, beta_new = self.unpack(theta_new, term.S)
        if np.any(b_new < 0.0) or np.any(b_new > 1.0) or np.any(gamma_new <= 0.0):
            self.stats.record("langevin", False)
            return False
        proposal = BasisTerm(term.S.copy(), b_new, gamma_new, beta_new)
        new_cache = self.build_cache(proposal)
        if new_cache is None:
            self.stats.record("langevin", False)
            return False
        grad_new = self.term_gradient(k, proposal, new_cache)
        log_forward = -np.sum((theta_new - forward_mean) ** 2) / (2.0 * eps * eps)
        log_reverse = -np.sum((theta - theta_new - half * grad_new) ** 2) / (2.0 * eps * eps)
        log_prior_ratio = (
            priors.log_prior_numeric(proposal, self.prior) - priors.log_prior_numeric(term, self.prior)
        )
        # the likelihood ratio is added by _finish_term_move
        return self._finish_term_move(
            k, "langevin", proposal, log_prior_ratio + log_reverse - log_forward, new_cache
        )

    def gibbs_sigma2(self) -> float:
        if not self.family.has_dispersion:
            raise ValueError(f"no dispersion to update for the {self.family.tag} family")
        v, lam = self.prior.v, self.lam
        ssr = float(np.sum((self.y - self.fitted) ** 2))
        if self.flat:
            shape, scale = v / 2.0, v * lam / 2.0
        elif self.config.sigma2_update == "paper-literal":
            shape, scale = v / 2.0, (ssr / self.n + v * lam) / 2.0
        else:
            shape, scale = (self.n + v) / 2.0, (ssr + v * lam) / 2.0
        self.state.eta = priors.sample_inverse_gamma(shape, scale, self.rng)
        self.loglik = self.log_likelihood_of(self.fitted, self.state.eta)
        return self.state.eta

    def step(self) -> None:
        self.update_K()
        for k in range(self.state.K):
            self.update_subset(k)
            self.update_langevin(k)
        if self.family.has_dispersion:
            self.gibbs_sigma2()

    def trace_row(self, iteration: int) -> TraceRow:
        return TraceRow(
            chain=self.chain_id,
            iteration=iteration,
            K=self.state.K,
            log_likelihood=self.loglik,
            sigma2=self.state.eta if self.family.has_dispersion else float("nan"),
            acceptance={m: self.stats.rate(m) for m in MOVES},
        )


def chain_rng(seed: int, chain_id: int, n_chains: int) -> np.random.Generator:
    children = np.random.SeedSequence(seed).spawn(max(n_chains, chain_id + 1))
    return np.random.Generator(np.random.PCG64(children[chain_id]))


def samples_meta(ds: Dataset, prior: PriorConfig, config: ChainConfig, lam: float | None) -> dict:
    return {
        "seed": config.seed,
        "rng": RNG_NAME,
        "burn_in": config.burn_in,
        "iterations": config.iterations,
        "thin": config.thin,
        "n_chains": config.n_chains,
        "marginal_kind": config.marginal_kind,
        "sigma2_update": config.sigma2_update,
        "sample_prior": config.sample_prior,
        "lambda": lam,
        "fingerprint": ds.fingerprint(),
        "target": ds.target,
        "prior": prior.model_dump(by_alias=True),
    }


def run_chain(ds: Dataset, prior_cfg: PriorConfig, chain_cfg: ChainConfig, *, chain_id: int = 0,
              rng: np.random.Generator | None = None, lam: float | None = None,
              on_iteration: Callable[[TraceRow], None] | None = None) -> tuple[PosteriorSamples, MoveStats]:
    """Run one chain and return its thinned post-burn-in states."""
    rng = rng or chain_rng(chain_cfg.seed, chain_id, chain_cfg.n_chains)
    if lam is None and get_family(ds.family).has_dispersion:
        lam = priors.resolve_lambda(prior_cfg, ds)
    chain = Chain(ds, prior_cfg, chain_cfg, rng=rng, chain_id=chain_id, lam=lam)
    log_every = _setting("TPNN_LOG_EVERY", 100)
    started = time.perf_counter()
    logger.info(
        "chain %d: seed=%d burn_in=%d iterations=%d thin=%d n=%d p=%d family=%s",
        chain_id, chain_cfg.seed, chain_cfg.burn_in, chain_cfg.iterations, chain_cfg.thin,
        ds.n, ds.p, ds.family,
    )
    states: list[ModelState] = []
    total = chain_cfg.burn_in + chain_cfg.iterations
    for t in range(total):
        chain.step()
        sampling = t - chain_cfg.burn_in
        if sampling >= 0:
            if (sampling + 1) % chain_cfg.thin == 0:
                states.append(chain.state.copy())
            if on_iteration is not None:
                on_iteration(chain.trace_row(sampling))
        if log_every and (t + 1) % log_every == 0:
            logger.info(
                "chain %d: iteration %d/%d K=%d loglik=%.4f", chain_id, t + 1, total,
                chain.state.K, chain.loglik,
            )
    chain.refresh()
    logger.info(
        "chain %d: finished in %.1fs, %d states kept, final K=%d", chain_id,
        time.perf_counter() - started, len(states), chain.state.K,
    )
    samples = PosteriorSamples(
        states=states,
        family=ds.family,
        marginals=chain.marginals,
        y_mean=chain.offset,
        chain_ids=[chain_id] * len(states),
        meta=samples_meta(ds, prior_cfg, chain_cfg, lam),
        preprocessor=ds.preprocessor,
        columns=ds.columns,
    )
    return samples, chain.stats


def run_chains(ds: Dataset, prior_cfg: PriorConfig, chain_cfg: ChainConfig, *,
               workers: int | None = None,
               on_iteration: Callable[[TraceRow], None] | None = None) -> tuple[PosteriorSamples, MoveStats]:
    """Run ``n_chains`` independent chains and concatenate their samples in chain order.

    Each chain draws from its own child of ``SeedSequence(seed)``, so results
    do not depend on the number of worker threads.
    """
    lam = priors.resolve_lambda(prior_cfg, ds) if get_family(ds.family).has_dispersion else None
    workers = workers or _setting("TPNN_WORKERS", 1)
    rows: dict[int, list[TraceRow]] = {c: [] for c in range(chain_cfg.n_chains)}

    def job(chain_id: int):
        return run_chain(
            ds, prior_cfg, chain_cfg, chain_id=chain_id, lam=lam,
            on_iteration=rows[chain_id].append if on_iteration is not None else None,
        )

    if workers > 1 and chain_cfg.n_chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(chain_cfg.n_chains)))
    else:
        results = [job(c) for c in range(chain_cfg.n_chains)]

    if on_iteration is not None:
        for chain_id in range(chain_cfg.n_chains):
            for row in rows[chain_id]:
                on_iteration(row)
    stats = MoveStats()
    for _, chain_stats in results:
        stats = stats.merge(chain_stats)
    return PosteriorSamples.concatenate([samples for samples, _ in results]), stats
