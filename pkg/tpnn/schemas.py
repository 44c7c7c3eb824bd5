"""Validated documents: sampler config, synthetic benchmark specs and run manifests."""
from __future__ import annotations

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Literal

import numpy as np
from ninja import Field, Schema
from pydantic import ConfigDict, ValidationError, model_validator

from .exceptions import ConfigError

MOVE_PROBABILITY_TOLERANCE = 1e-9


class PriorConfig(Schema):
    """Hyperparameters of the prior hierarchy and of the proposal kernels."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    C0: float = Field(0.01, ge=0)
    K_max: int = Field(100, ge=1)
    alpha_adding: float = Field(0.95, gt=0, lt=1)
    gamma_adding: float = Field(2.0, gt=0)
    sigma_beta2: float = Field(0.01, gt=0)
    a_gamma: float = Field(2.0, gt=0)
    b_gamma: float = Field(0.01, gt=0)
    v: float = Field(3.0, gt=0)
    lam: float | None = Field(None, gt=0, alias="lambda")
    q_lambda: float | None = Field(None, gt=0, lt=1)
    q_add: float = Field(0.28, ge=0, le=1)
    q_delete: float = Field(0.28, ge=0, le=1)
    q_change: float = Field(0.44, ge=0, le=1)
    M: float = Field(5.0, gt=0)
    step_size: float = Field(0.01, gt=0)
    omega: list[float] | None = None

    @model_validator(mode="after")
    def _check_consistency(self) -> PriorConfig:
        total = self.q_add + self.q_delete + self.q_change
        if abs(total - 1.0) > MOVE_PROBABILITY_TOLERANCE:
            raise ValueError(
                f"q_add + q_delete + q_change must equal 1 (got {total!r})"
            )
        if self.lam is not None and self.q_lambda is not None:
            raise ValueError("give exactly one of 'lambda' and 'q_lambda'")
        if self.omega is not None and any(w <= 0 for w in self.omega):
            raise ValueError("omega weights must be positive")
        return self

    @property
    def lambda_resolved(self) -> bool:
        return self.lam is not None

    def effective_q_lambda(self) -> float:
        return 0.9 if self.q_lambda is None else self.q_lambda

    def omega_for(self, p: int) -> np.ndarray:
        """Normalized p_input weights; uniform when none were configured."""
        if self.omega is None:
            return np.full(p, 1.0 / p)
        if len(self.omega) != p:
            raise ConfigError(f"omega has {len(self.omega)} weights but the data has {p} columns")
        weights = np.asarray(self.omega, dtype=float)
        return weights / weights.sum()


class ChainConfig(Schema):
    model_config = ConfigDict(extra="forbid")

    burn_in: int = Field(1000, ge=0)
    iterations: int = Field(1000, ge=0)
    thin: int = Field(1, ge=1)
    seed: int = 0
    n_chains: int = Field(1, ge=1)
    marginal_kind: Literal["empirical", "uniform"] = "empirical"
    initial_K: int = Field(0, ge=0)
    sigma2_update: Literal["conjugate", "paper-literal"] = "conjugate"
    sample_prior: bool = False
    refresh_every: int = Field(100, ge=1)


class SyntheticSpec(Schema):
    model_config = ConfigDict(extra="forbid")

    function_id: Literal["f1", "f2", "f3", "poisson_f0"]
    n: int = Field(..., ge=2)
    p: int = Field(10, ge=10)
    snr: float = Field(5.0, gt=0)
    seed: int = 0


class BenchSpec(Schema):
    """Input document of ``manage.py bench``."""

    model_config = ConfigDict(extra="forbid")

    data: SyntheticSpec
    prior: PriorConfig = Field(default_factory=PriorConfig)
    chain: ChainConfig = Field(default_factory=ChainConfig)
    test_fraction: float = Field(0.2, gt=0, lt=1)
    max_order: int = Field(3, ge=1, le=3)
    top: int = Field(20, ge=1)


class RunManifest(Schema):
    command: str
    config_path: str | None = None
    options: dict[str, Any] = {}
    dataset: dict[str, Any] | None = None
    seed: int | None = None
    versions: dict[str, str] = {}
    duration_seconds: float = 0.0
    outputs: dict[str, str] = {}
    created_at: datetime


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<document>"
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def load_json_document(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: expected a JSON object at the top level")
    return document


def split_run_config(document: dict[str, Any]) -> tuple[PriorConfig, ChainConfig]:
    """Split a flat config document into its prior and chain halves."""
    prior_keys = {field.alias or name for name, field in PriorConfig.model_fields.items()}
    prior_keys |= set(PriorConfig.model_fields)
    chain_keys = set(ChainConfig.model_fields)
    unknown = sorted(set(document) - prior_keys - chain_keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        prior = PriorConfig(**{k: v for k, v in document.items() if k in prior_keys})
        chain = ChainConfig(**{k: v for k, v in document.items() if k in chain_keys})
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc
    return prior, chain


def load_run_config(path: str | Path) -> tuple[PriorConfig, ChainConfig]:
    return split_run_config(load_json_document(path))


def load_bench_spec(path: str | Path) -> BenchSpec:
    document = load_json_document(path)
    try:
        return BenchSpec(**document)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc
