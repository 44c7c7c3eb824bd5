"""Helpers shared by the tpnn management commands."""
from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management.base import CommandError

from tpnn.data import read_features
from tpnn.exceptions import (
    ConfigError,
    DataValidationError,
    SchemaMismatchError,
    SupportError,
    TPNNError,
)
from tpnn.inference import PosteriorSamples
from tpnn.serialization import read_samples

logger = logging.getLogger(__name__)

VALIDATION_EXIT = 2
RUNTIME_EXIT = 3


@contextmanager
def translate_errors():
    """Turn library failures into ``CommandError`` with the documented exit codes."""
    try:
        yield
    except CommandError:
        raise
    except (ConfigError, DataValidationError, SchemaMismatchError, SupportError) as exc:
        raise CommandError(str(exc), returncode=VALIDATION_EXIT) from exc
    except (TPNNError, ArithmeticError, OSError) as exc:
        raise CommandError(f"{type(exc).__name__}: {exc}", returncode=RUNTIME_EXIT) from exc
    except ValueError as exc:
        raise CommandError(str(exc), returncode=VALIDATION_EXIT) from exc


def usage_error(message: str) -> CommandError:
    return CommandError(message, returncode=VALIDATION_EXIT)


def load_samples_and_rows(samples_path: str, data_path: str) -> tuple[PosteriorSamples, np.ndarray, np.ndarray | None]:
    """Read posterior samples and map a raw CSV through their training preprocessor."""
    samples = read_samples(samples_path)
    if not samples.states:
        raise SchemaMismatchError(f"{samples_path} holds no posterior states")
    if samples.preprocessor is None:
        raise SchemaMismatchError(f"{samples_path} carries no preprocessor")
    try:
        x, y = read_features(
            data_path,
            samples.preprocessor,
            target_column=samples.meta.get("target"),
            family=samples.family,
        )
    except DataValidationError as exc:
        if "missing feature columns" in str(exc):
            raise SchemaMismatchError(str(exc)) from exc
        raise
    if x.shape[1] != samples.p:
        raise SchemaMismatchError(f"data has {x.shape[1]} design columns, samples expect {samples.p}")
    return samples, x, y


def parse_set(text: str, p: int) -> tuple[int, ...]:
    """Parse a 1-based comma list such as ``"1,6"`` into a sorted 0-based key."""
    try:
        columns = sorted({int(part) for part in text.split(",") if part.strip()})
    except ValueError as exc:
        raise usage_error(f"--set expects comma-separated column numbers, got {text!r}") from exc
    if not columns:
        raise usage_error("--set is empty")
    unknown = [j for j in columns if not 1 <= j <= p]
    if unknown:
        raise usage_error(f"unknown column numbers {unknown}; valid range is 1..{p}")
    return tuple(j - 1 for j in columns)


def format_set(key) -> str:
    return ",".join(str(int(j) + 1) for j in key)


def write_table(frame: pd.DataFrame, out: str | None, stdout) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        logger.info("wrote %d rows to %s", len(frame), out)
    elif stdout is not None:
        stdout.write(frame.to_csv(index=False), ending="")
    else:
        sys.stdout.write(frame.to_csv(index=False))


def manifest_path_for(out: str) -> Path:
    path = Path(out)
    return path.with_name(path.stem + ".manifest.json")
