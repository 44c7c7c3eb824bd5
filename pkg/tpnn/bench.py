"""Synthetic regression functions with known ANOVA structure and the benchmark pipeline.

Each function is a sum of terms; each term is a product of factors over
disjoint variable sets. That structure is used twice: to evaluate the
function on sampled inputs and to compute the exact ANOVA components of the
truth by tensor Gauss-Legendre quadrature.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path
from typing import Any, Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .data import Dataset, train_test_split, write_csv
from .exceptions import PosteriorError
from .inference import importance_scores, predictive_point, rank_importance
from .metrics import component_selection_auroc, crps, nll, rmse
from .mcmc import run_chains
from .schemas import BenchSpec, SyntheticSpec

logger = logging.getLogger(__name__)

VARIANCE_DRAWS = 100_000
MIN_P = 10


@dataclass(frozen=True)
class Factor:
    variables: tuple[int, ...]
    fn: Callable[..., np.ndarray]


Term = tuple[Factor, ...]


def _arcsin(arg):
    if np.any(np.abs(arg) > 1.0):
        raise ArithmeticError("arcsin argument left [-1, 1]")
    return np.arcsin(arg)


def _arccos(arg):
    if np.any(np.abs(arg) > 1.0):
        raise ArithmeticError("arccos argument left [-1, 1]")
    return np.arccos(arg)


_F1: tuple[Term, ...] = (
    (Factor((0, 1), lambda x1, x2: np.pi ** (x1 * x2)),
     Factor((2,), lambda x3: np.sqrt(2.0 * np.abs(x3)))),
    (Factor((3,), lambda x4: -_arcsin(0.5 * x4)),),
    (Factor((2, 4), lambda x3, x5: np.log(np.abs(x3 + x5) + 1.0)),),
    (Factor((8,), lambda x9: x9),
     Factor((9,), lambda x10: 1.0 / (1.0 + np.abs(x10))),
     Factor((6, 7), lambda x7, x8: np.sqrt(x7 / (1.0 + np.abs(x8))))),
    (Factor((1,), lambda x2: -x2), Factor((6,), lambda x7: x7)),
)

_F2: tuple[Term, ...] = (
    (Factor((0,), lambda x1: x1), Factor((1,), lambda x2: x2)),
    tuple(Factor((j,), lambda x: 2.0 ** x) for j in (2, 4, 5)),
    tuple(Factor((j,), lambda x: 2.0 ** x) for j in (2, 3, 4, 6)),
    (Factor((6, 7, 8), lambda x7, x8, x9: np.sin(x7 * np.sin(x8 + x9))),),
    (Factor((9,), lambda x10: _arccos(0.9 * x10)),),
)

_F3: tuple[Term, ...] = (
    (Factor((0, 1, 2, 3), lambda x1, x2, x3, x4: np.tanh(x1 * x2 + x3 * x4)),
     Factor((4,), lambda x5: np.sqrt(np.abs(x5)))),
    (Factor((4,), np.exp), Factor((5,), np.exp)),
    (Factor((5, 6, 7), lambda x6, x7, x8: np.log((x6 * x7 * x8) ** 2 + 1.0)),),
    (Factor((8,), lambda x9: x9), Factor((9,), lambda x10: x10)),
    (Factor((9,), lambda x10: 1.0 / (1.0 + np.abs(x10))),),
)

FUNCTIONS: dict[str, tuple[Term, ...]] = {"f1": _F1, "f2": _F2, "f3": _F3, "poisson_f0": _F1}

# 1-based signal sets of every function up to order three
SIGNAL_SETS: dict[str, dict[int, list[tuple[int, ...]]]] = {
    "f1": {
        1: [(1,), (2,), (3,), (4,), (5,), (7,), (8,), (9,), (10,)],
        2: [(1, 2), (1, 3), (2, 3), (3, 5), (7, 8), (7, 9), (7, 10), (8, 9), (8, 10), (9, 10),
            (2, 7)],
        3: [(1, 2, 3), (7, 8, 9), (7, 8, 10), (7, 9, 10), (8, 9, 10)],
    },
    "f2": {
        1: [(3,), (4,), (5,), (6,), (7,), (10,)],
        2: [(1, 2), (3, 5), (3, 6), (5, 6), (3, 4), (3, 7), (4, 5), (4, 7), (5, 7), (7, 8),
            (7, 9)],
        3: [(3, 5, 6), (3, 4, 5), (3, 4, 7), (3, 5, 7), (4, 5, 7), (7, 8, 9)],
    },
    "f3": {
        1: [(5,), (6,), (7,), (8,), (10,)],
        2: [(1, 2), (3, 4), (5, 6), (6, 7), (6, 8), (7, 8), (9, 10)],
        3: [(1, 2, 5), (3, 4, 5), (1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4), (6, 7, 8)],
    },
}
SIGNAL_SETS["poisson_f0"] = SIGNAL_SETS["f1"]


def input_ranges(function_id: str, p: int) -> list[tuple[float, float]]:
    """Support of the uniform distribution of every input coordinate."""
    if function_id == "f1":
        ranges = [(-1.0, 1.0)] * p
        for j in (0, 1, 2, 5, 6, 8):
            ranges[j] = (0.0, 1.0)
        for j in (3, 4, 7, 9):
            ranges[j] = (0.6, 1.0)
        return ranges
    if function_id == "poisson_f0":
        return [(0.0, 1.0)] * p
    return [(-1.0, 1.0)] * p


def draw_inputs(function_id: str, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    ranges = np.asarray(input_ranges(function_id, p))
    return rng.uniform(ranges[:, 0], ranges[:, 1], size=(n, p))


def evaluate(function_id: str, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = np.zeros(x.shape[0])
    for term in FUNCTIONS[function_id]:
        value = np.ones(x.shape[0])
        for factor in term:
            value = value * factor.fn(*(x[:, j] for j in factor.variables))
        total += value
    return total


def truth_map(function_id: str, max_order: int = 3) -> dict[tuple[int, ...], int]:
    """0-based signal sets of order at most ``max_order`` mapped to 1."""
    return {
        tuple(j - 1 for j in S): 1
        for order, sets in SIGNAL_SETS[function_id].items() if order <= max_order
        for S in sets
    }


class SyntheticData(NamedTuple):
    dataset: Dataset
    truth: dict[tuple[int, ...], int]
    f_values: np.ndarray
    noise_variance: float | None


def generate(spec: SyntheticSpec) -> SyntheticData:
    if spec.p < MIN_P:
        raise ValueError(f"p must be at least {MIN_P}")
    inputs_seq, noise_seq, variance_seq = np.random.SeedSequence(spec.seed).spawn(3)
    x = draw_inputs(spec.function_id, spec.n, spec.p, np.random.default_rng(inputs_seq))
    f = evaluate(spec.function_id, x)
    noise_rng = np.random.default_rng(noise_seq)
    if spec.function_id == "poisson_f0":
        y = noise_rng.poisson(np.exp(f)).astype(float)
        family, noise_variance = "poisson", None
    else:
        fresh = draw_inputs(spec.function_id, VARIANCE_DRAWS, spec.p, np.random.default_rng(variance_seq))
        noise_variance = float(np.var(evaluate(spec.function_id, fresh)) / spec.snr)
        y = f + np.sqrt(noise_variance) * noise_rng.standard_normal(spec.n)
        family = "gaussian"
    dataset = Dataset.from_arrays(x, y, family)
    return SyntheticData(dataset, truth_map(spec.function_id), f, noise_variance)


def export(data: SyntheticData, spec: SyntheticSpec, csv_path: str | Path) -> Path:
    """Write the dataset as CSV and the true signal sets to a sidecar ``.truth.json``."""
    csv_path = Path(csv_path)
    write_csv(data.dataset, csv_path)
    sidecar = csv_path.with_suffix(".truth.json")
    sidecar.write_text(json.dumps({
        "function_id": spec.function_id,
        "n": spec.n,
        "p": spec.p,
        "snr": spec.snr,
        "seed": spec.seed,
        "noise_variance": data.noise_variance,
        "index_base": 1,
        "signal_sets": {str(order): [list(S) for S in sets]
                        for order, sets in SIGNAL_SETS[spec.function_id].items()},
    }, indent=2) + "\n", encoding="utf-8")
    return sidecar


# Exact ANOVA components by quadrature

def _nodes(lo: float, hi: float, per_piece: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes for the uniform law on [lo, hi], split at 0; weights sum to 1."""
    breaks = [lo, 0.0, hi] if lo < 0.0 < hi else [lo, hi]
    t, w = leggauss(per_piece)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (b - a) * t + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w / (hi - lo))
    return np.concatenate(nodes), np.concatenate(weights)


def _conditional_mean(grid: np.ndarray, weights: list[np.ndarray], keep: tuple[int, ...]) -> np.ndarray:
    out = grid
    for axis in reversed(range(grid.ndim)):
        if axis not in keep:
            out = np.tensordot(out, weights[axis], axes=([axis], [0]))
    return out


def _factor_components(factor: Factor, quadrature: list[tuple[np.ndarray, np.ndarray]],
                       max_order: int) -> dict[tuple[int, ...], np.ndarray]:
    """ANOVA components of one factor, keyed by local axis subsets (the empty key is the mean)."""
    nodes = [quadrature[j][0] for j in factor.variables]
    weights = [quadrature[j][1] for j in factor.variables]
    grid = factor.fn(*np.meshgrid(*nodes, indexing="ij"))
    dim = len(nodes)
    means = {
        keep: _conditional_mean(grid, weights, keep)
        for r in range(min(dim, max_order) + 1) for keep in combinations(range(dim), r)
    }
    components = {}
    for T, _ in means.items():
        total = np.zeros([len(nodes[a]) for a in T])
        for r in range(len(T) + 1):
            for U in combinations(T, r):
                shape = [len(nodes[a]) if a in U else 1 for a in T]
                total = total + (-1.0) ** (len(T) - r) * means[U].reshape(shape)
        components[T] = total
    return components


def component_norms(function_id: str, p: int = MIN_P, max_order: int = 3,
                    per_piece: int = 20) -> dict[tuple[int, ...], float]:
    """L2 norm of every true ANOVA component up to ``max_order`` (0-based keys)."""
    quadrature = [_nodes(lo, hi, per_piece) for lo, hi in input_ranges(function_id, p)]
    accumulated: dict[tuple[int, ...], np.ndarray] = {}
    for term in FUNCTIONS[function_id]:
        parts = [_factor_components(factor, quadrature, max_order) for factor in term]
        for choice in product(*(list(part.items()) for part in parts)):
            variables = [factor.variables[a] for factor, (T, _) in zip(term, choice) for a in T]
            if not variables or len(variables) > max_order:
                continue
            array = choice[0][1]
            for _, piece in choice[1:]:
                array = np.multiply.outer(array, piece)
            order = np.argsort(variables)
            key = tuple(int(variables[i]) for i in order)
            array = np.asarray(array).transpose(order)
            accumulated[key] = accumulated.get(key, 0.0) + array
    norms = {}
    for key, array in accumulated.items():
        weight = np.ones(())
        for j in key:
            weight = np.multiply.outer(weight, quadrature[j][1])
        norms[key] = float(np.sqrt(np.sum(weight * array ** 2)))
    return norms


# Benchmark pipeline

def run_bench(spec: BenchSpec, *, crps_draws: int = 1000) -> dict[str, Any]:
    """Generate, split, fit and score one synthetic experiment."""
    started = time.perf_counter()
    data = generate(spec.data)
    train, test = train_test_split(data.dataset, spec.test_fraction, spec.data.seed)
    samples, stats = run_chains(train, spec.prior, spec.chain)
    if not samples.states:
        raise PosteriorError("the chain kept no states; increase iterations")

    scores = importance_scores(samples, train.x)
    p = spec.data.p
    auroc_by_order: dict[str, float | None] = {}
    for order in range(1, spec.max_order + 1):
        try:
            auroc_by_order[str(order)] = component_selection_auroc(scores, data.truth, order, p)
        except ValueError:
            auroc_by_order[str(order)] = None

    f_test = data.f_values[test.row_ids]
    prediction = predictive_point(samples, test.x)
    report: dict[str, Any] = {
        "function_id": spec.data.function_id,
        "n": spec.data.n,
        "p": p,
        "seed": spec.data.seed,
        "family": data.dataset.family,
        "n_train": train.n,
        "n_test": test.n,
        "n_states": len(samples),
        "component_selection_auroc": auroc_by_order,
        "nll": nll(samples, test.x, test.y),
    }
    if data.dataset.family == "gaussian":
        report["noise_sd"] = float(np.sqrt(data.noise_variance))
        report["rmse"] = rmse(prediction, test.y)
        report["rmse_vs_truth"] = rmse(prediction, f_test)
        report["crps"] = crps(samples, test.x, test.y, n_draws=crps_draws, seed=spec.data.seed)
    else:
        report["rmse"] = rmse(prediction, np.exp(f_test))
    report["top_components"] = [
        {"set": [j + 1 for j in key], "score": score}
        for key, score in rank_importance(scores)[:spec.top]
    ]
    report["acceptance"] = stats.as_dict()
    logger.info("bench %s finished in %.1fs", spec.data.function_id, time.perf_counter() - started)
    return report
