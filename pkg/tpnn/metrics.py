"""Evaluation metrics: RMSE, AUROC, NLL, CRPS, ECE and component-selection AUROC."""
from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.stats import rankdata

from .inference import PosteriorSamples, log_predictive_density, sample_predictive

DEFAULT_CRPS_DRAWS = 1000


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def nll(samples: PosteriorSamples, xs: np.ndarray, ys) -> float:
    """Mean negative log predictive density."""
    return float(-np.mean(log_predictive_density(samples, xs, ys)))


def crps_from_draws(draws, y: float) -> float:
    """``E|Z - y| - E|Z - Z'| / 2`` with the pairwise term taken over all distinct draws."""
    z = np.sort(np.asarray(draws, dtype=float))
    m = z.size
    if m < 2:
        raise ValueError("CRPS needs at least two draws")
    first = np.mean(np.abs(z - y))
    pairwise = 2.0 * np.sum(z * (2.0 * np.arange(m) - m + 1.0)) / (m * (m - 1.0))
    return float(max(first - 0.5 * pairwise, 0.0))


def crps(samples: PosteriorSamples, xs: np.ndarray, ys, *, n_draws: int = DEFAULT_CRPS_DRAWS,
         seed: int = 0) -> float:
    """Mean CRPS of the gaussian predictive mixture over the rows of ``xs``."""
    if samples.family != "gaussian":
        raise ValueError("CRPS is implemented for the gaussian family only")
    rng = np.random.default_rng(seed)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    values = [
        crps_from_draws(sample_predictive(samples, row, n_draws, rng), y) for row, y in zip(xs, ys)
    ]
    return float(np.mean(values))


def ece(probs, labels, n_bins: int = 15) -> float:
    """Expected calibration error on the max-probability confidence of binary predictions."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    confidence = np.maximum(probs, 1.0 - probs)
    correct = (probs >= 0.5) == (labels == 1.0)
    bins = np.minimum((confidence * n_bins).astype(int), n_bins - 1)
    total = 0.0
    for b in np.unique(bins):
        members = bins == b
        total += members.mean() * abs(correct[members].mean() - confidence[members].mean())
    return float(total)


def component_selection_auroc(importance: dict[tuple[int, ...], float],
                              truth: dict[tuple[int, ...], int], order: int, p: int) -> float:
    """AUROC of importance scores against signal indicators over every set of size ``order``."""
    candidates = list(combinations(range(p), order))
    scores = [importance.get(S, 0.0) for S in candidates]
    labels = [truth.get(S, 0) for S in candidates]
    if not any(labels):
        raise ValueError(f"no signal set of order {order}")
    return auroc(scores, labels)
