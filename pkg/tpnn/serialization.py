"""File formats: posterior samples (JSON lines), chain traces, run manifests and p_input weights."""
from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from .basis import BasisTerm
from .data import ColumnMeta, Marginal, Preprocessor
from .exceptions import DataValidationError
from .inference import PosteriorSamples
from .likelihood import ModelState
from .mcmc import MOVES, TraceRow
from .schemas import RunManifest

logger = logging.getLogger(__name__)

SAMPLES_FORMAT = "tpnn-samples"
SAMPLES_VERSION = 1
VERSIONED_PACKAGES = ("bayesian-tpnn", "numpy", "scipy", "pandas", "django", "django-ninja")


def _dumps(payload: dict[str, Any]) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(payload, separators=(",", ":"), allow_nan=False)


def _header(samples: PosteriorSamples) -> dict[str, Any]:
    return {
        "format": SAMPLES_FORMAT,
        "version": SAMPLES_VERSION,
        "index_base": 0,
        "family": samples.family,
        "y_mean": float(samples.y_mean),
        "n_states": len(samples.states),
        "columns": [c.name for c in samples.columns],
        "marginals": [
            {"kind": m.kind, "values": [float(v) for v in m.values]} for m in samples.marginals
        ],
        "preprocessor": samples.preprocessor.to_dict() if samples.preprocessor else None,
        "meta": samples.meta,
    }


def _state_line(state: ModelState, chain_id: int) -> dict[str, Any]:
    return {
        "chain": int(chain_id),
        "K": state.K,
        "terms": [
            {
                "S": [int(j) for j in term.S],
                "b": [float(v) for v in term.b],
                "gamma": [float(v) for v in term.gamma],
                "beta": float(term.beta),
            }
            for term in state.terms
        ],
        "eta": float(state.eta),
    }


def write_samples(samples: PosteriorSamples, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_dumps(_header(samples)) + "\n")
        for state, chain_id in zip(samples.states, samples.chain_ids):
            handle.write(_dumps(_state_line(state, chain_id)) + "\n")
    logger.info("wrote %d posterior states to %s", len(samples.states), path)


def read_samples(path: str | Path) -> PosteriorSamples:
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"samples file not found: {path}")
    with path.open(encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise DataValidationError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"malformed samples header: {exc.msg}", line=1) from exc
    if header.get("format") != SAMPLES_FORMAT or header.get("index_base") != 0:
        raise DataValidationError(f"{path} is not a {SAMPLES_FORMAT} file", line=1)

    states, chain_ids = [], []
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            terms = [BasisTerm(t["S"], t["b"], t["gamma"], t["beta"]) for t in record["terms"]]
            if len(terms) != record["K"]:
                raise ValueError(f"K={record['K']} but {len(terms)} terms listed")
            states.append(ModelState(terms, record["eta"]))
            chain_ids.append(record["chain"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed posterior state: {exc}", line=number) from exc

    preprocessor = header.get("preprocessor")
    preprocessor = Preprocessor.from_dict(preprocessor) if preprocessor else None
    return PosteriorSamples(
        states=states,
        family=header["family"],
        marginals=[Marginal(m["kind"], np.asarray(m["values"], dtype=float)) for m in header["marginals"]],
        y_mean=header["y_mean"],
        chain_ids=chain_ids,
        meta=header.get("meta", {}),
        preprocessor=preprocessor,
        columns=preprocessor.columns if preprocessor else tuple(
            ColumnMeta(name, "continuous-ranked", name) for name in header.get("columns", [])
        ),
    )


def trace_frame(rows: Iterable[TraceRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        record = {
            "chain": row.chain,
            "iteration": row.iteration,
            "K": row.K,
            "log_likelihood": row.log_likelihood,
            "sigma2": row.sigma2,
        }
        record.update({f"accept_{move}": row.acceptance[move] for move in MOVES})
        records.append(record)
    columns = ["chain", "iteration", "K", "log_likelihood", "sigma2"] + [f"accept_{m}" for m in MOVES]
    return pd.DataFrame.from_records(records, columns=columns)


def write_trace(rows: Iterable[TraceRow], path: str | Path) -> None:
    trace_frame(rows).to_csv(path, index=False)


def package_versions() -> dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def build_manifest(command: str, *, options: dict[str, Any], outputs: dict[str, str],
                   duration_seconds: float, config_path: str | None = None,
                   dataset: dict[str, Any] | None = None, seed: int | None = None) -> RunManifest:
    return RunManifest(
        command=command,
        config_path=config_path,
        options=options,
        dataset=dataset,
        seed=seed,
        versions=package_versions(),
        duration_seconds=duration_seconds,
        outputs=outputs,
        created_at=datetime.now(timezone.utc),
    )


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


def read_omega(path: str | Path, p: int) -> list[float]:
    """Read p_input weights from a two-column CSV of 1-based column number and weight."""
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"weights file not found: {path}")
    frame = pd.read_csv(path)
    if frame.shape[1] != 2:
        raise DataValidationError(f"{path.name} needs exactly two columns (column, weight)")
    columns = pd.to_numeric(frame.iloc[:, 0], errors="coerce")
    weights = pd.to_numeric(frame.iloc[:, 1], errors="coerce")
    bad = np.flatnonzero((columns.isna() | weights.isna()).to_numpy())
    if bad.size:
        raise DataValidationError("non-numeric weight entry", line=int(bad[0]) + 2)
    omega = [0.0] * p
    for row, (column, weight) in enumerate(zip(columns.astype(int), weights)):
        if not 1 <= column <= p:
            raise DataValidationError(f"column {column} is outside 1..{p}", line=row + 2)
        if weight <= 0:
            raise DataValidationError(f"weight for column {column} must be positive", line=row + 2)
        omega[column - 1] = float(weight)
    missing = [j + 1 for j, w in enumerate(omega) if w == 0.0]
    if missing:
        raise DataValidationError(f"no weight given for columns {missing}")
    return omega
