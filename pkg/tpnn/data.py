"""Tabular ingestion: CSV parsing, unit-cube preprocessing, marginals and splits.

Continuous columns are mapped to their marginal ranks (average rank over n for
ties); categorical columns are one-hot encoded and passed through. Rows that
are not part of the fitting set are mapped through the fitting set's
empirical CDF.
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .exceptions import DataValidationError, SupportError
from .likelihood import get_family

logger = logging.getLogger(__name__)

HEADER_LINES = 1
MarginalKind = Literal["empirical", "uniform"]


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    origin: Literal["continuous-ranked", "one-hot-level"]
    source: str
    level: str | None = None


@dataclass(frozen=True)
class SourceColumn:
    """One column of the input table before encoding."""

    name: str
    kind: Literal["continuous", "categorical"]
    levels: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class Marginal:
    """Marginal distribution of one design column on [0, 1]."""

    kind: MarginalKind
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        if self.kind == "empirical":
            if self.values.size == 0:
                raise ValueError("an empirical marginal needs at least one value")
            if self.values.min() < 0.0 or self.values.max() > 1.0:
                raise ValueError("empirical marginal values must lie in [0, 1]")

    @classmethod
    def empirical(cls, column: np.ndarray) -> Marginal:
        return cls("empirical", np.sort(np.asarray(column, dtype=float)))

    @classmethod
    def uniform(cls) -> Marginal:
        return cls("uniform")


def rank_transform(raw_column: np.ndarray) -> np.ndarray:
    """Average ranks divided by n; monotone and valued in (0, 1]."""
    raw_column = np.asarray(raw_column, dtype=float)
    if raw_column.size == 0:
        raise ValueError("rank_transform needs at least one value")
    return rankdata(raw_column, method="average") / raw_column.size


def ecdf_transform(sorted_reference: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fraction of reference points less than or equal to each value.

    A value equal to one or more reference points gets their average rank
    over n instead, so training rows map to their :func:`rank_transform`.
    """
    below = np.searchsorted(sorted_reference, values, side="left")
    at_or_below = np.searchsorted(sorted_reference, values, side="right")
    positions = np.where(at_or_below > below, (below + at_or_below + 1) / 2.0, at_or_below)
    return positions / sorted_reference.size


@dataclass(frozen=True, eq=False)
class Preprocessor:
    """Encodes raw tables and maps them into the unit cube.

    ``reference`` holds, per design column, the sorted raw training values of
    continuous columns (``None`` for one-hot columns).
    """

    sources: tuple[SourceColumn, ...]
    columns: tuple[ColumnMeta, ...]
    reference: tuple[np.ndarray | None, ...]

    @classmethod
    def fit(cls, sources: tuple[SourceColumn, ...], columns: tuple[ColumnMeta, ...],
            raw: np.ndarray) -> Preprocessor:
        reference = tuple(
            np.sort(raw[:, j]) if meta.origin == "continuous-ranked" else None
            for j, meta in enumerate(columns)
        )
        return cls(sources, columns, reference)

    def transform_fitting_rows(self, raw: np.ndarray) -> np.ndarray:
        x = raw.astype(float, copy=True)
        for j, ref in enumerate(self.reference):
            if ref is not None:
                x[:, j] = rank_transform(raw[:, j])
        return x

    def transform(self, raw: np.ndarray) -> np.ndarray:
        x = raw.astype(float, copy=True)
        for j, ref in enumerate(self.reference):
            if ref is not None:
                x[:, j] = ecdf_transform(ref, raw[:, j])
        return x

    def encode(self, frame: pd.DataFrame) -> np.ndarray:
        """Encode a string-valued feature table with the fitted levels."""
        missing = [s.name for s in self.sources if s.name not in frame.columns]
        if missing:
            raise DataValidationError(f"missing feature columns: {', '.join(missing)}")
        blocks = []
        for source in self.sources:
            cells = _clean_cells(frame[source.name], source.name)
            if source.kind == "continuous":
                values = pd.to_numeric(cells, errors="coerce")
                bad = np.flatnonzero(values.isna().to_numpy())
                if bad.size:
                    raise DataValidationError(
                        f"non-numeric value {cells.iloc[bad[0]]!r} in numeric column {source.name!r}",
                        line=_line(bad[0]),
                    )
                blocks.append(values.to_numpy(dtype=float)[:, None])
            else:
                known = {level: i for i, level in enumerate(source.levels)}
                block = np.zeros((len(cells), len(source.levels)))
                for row, cell in enumerate(cells):
                    if cell not in known:
                        raise DataValidationError(
                            f"unknown level {cell!r} for categorical column {source.name!r}",
                            line=_line(row),
                        )
                    block[row, known[cell]] = 1.0
                blocks.append(block)
        return np.hstack(blocks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sources": [
                {"name": s.name, "kind": s.kind, "levels": list(s.levels)} for s in self.sources
            ],
            "columns": [
                {"name": c.name, "origin": c.origin, "source": c.source, "level": c.level}
                for c in self.columns
            ],
            "reference": [None if ref is None else ref.tolist() for ref in self.reference],
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> Preprocessor:
        return cls(
            sources=tuple(
                SourceColumn(s["name"], s["kind"], tuple(s["levels"])) for s in payload["sources"]
            ),
            columns=tuple(ColumnMeta(**c) for c in payload["columns"]),
            reference=tuple(
                None if ref is None else np.asarray(ref, dtype=float) for ref in payload["reference"]
            ),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Preprocessed design matrix in [0, 1]^p with responses.

    ``raw`` keeps the encoded but untransformed features so that splits can
    refit the rank transform on their fitting rows only.
    """

    x: np.ndarray
    y: np.ndarray
    family: str
    columns: tuple[ColumnMeta, ...]
    raw: np.ndarray
    preprocessor: Preprocessor
    target: str = "y"
    row_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x must be n x p with one response per row")
        if self.n < 1 or self.p < 1:
            raise ValueError("a dataset needs at least one row and one column")
        if self.x.min() < 0.0 or self.x.max() > 1.0:
            raise ValueError("design values must lie in [0, 1]")
        if len(self.columns) != self.p:
            raise ValueError("one ColumnMeta per design column is required")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(self.n))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def marginals(self, kind: MarginalKind = "empirical") -> list[Marginal]:
        if kind == "uniform":
            return [Marginal.uniform() for _ in range(self.p)]
        return [Marginal.empirical(self.x[:, j]) for j in range(self.p)]

    def fingerprint(self) -> dict[str, Any]:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.x, dtype=float).tobytes())
        digest.update(np.ascontiguousarray(self.y, dtype=float).tobytes())
        return {"rows": self.n, "columns": self.p, "sha256": digest.hexdigest()}

    def take(self, rows: np.ndarray, preprocessor: Preprocessor, *, fitting: bool) -> Dataset:
        raw = self.raw[rows]
        x = preprocessor.transform_fitting_rows(raw) if fitting else preprocessor.transform(raw)
        return Dataset(
            x=x,
            y=self.y[rows],
            family=self.family,
            columns=self.columns,
            raw=raw,
            preprocessor=preprocessor,
            target=self.target,
            row_ids=self.row_ids[rows],
        )

    @classmethod
    def from_arrays(cls, raw_x: np.ndarray, y: np.ndarray, family: str,
                    names: list[str] | None = None, target: str = "y") -> Dataset:
        """Build a dataset whose columns are all continuous."""
        raw_x = np.asarray(raw_x, dtype=float)
        if raw_x.ndim != 2 or raw_x.shape[0] < 2:
            raise DataValidationError("a dataset needs at least two rows")
        names = names or [f"x{j + 1}" for j in range(raw_x.shape[1])]
        sources = tuple(SourceColumn(name, "continuous") for name in names)
        columns = tuple(ColumnMeta(name, "continuous-ranked", name) for name in names)
        preprocessor = Preprocessor.fit(sources, columns, raw_x)
        return cls(
            x=preprocessor.transform_fitting_rows(raw_x),
            y=np.asarray(y, dtype=float),
            family=family,
            columns=columns,
            raw=raw_x,
            preprocessor=preprocessor,
            target=target,
        )


def _line(row: int) -> int:
    return int(row) + HEADER_LINES + 1


def _clean_cells(series: pd.Series, name: str) -> pd.Series:
    cells = series.astype(object).where(series.notna(), "")
    cells = cells.map(lambda cell: str(cell).strip())
    empty = np.flatnonzero((cells == "").to_numpy())
    if empty.size:
        raise DataValidationError(f"missing value in column {name!r}", line=_line(empty[0]))
    return cells


def _read_table(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as exc:
        raise DataValidationError(f"{path} is empty") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) if match else None
        raise DataValidationError(f"inconsistent row width in {path.name}", line=line) from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if frame.empty:
        raise DataValidationError(f"{path} has a header but no rows")
    return frame


def _infer_source(cells: pd.Series, name: str) -> SourceColumn:
    numeric = pd.to_numeric(cells, errors="coerce")
    bad = numeric.isna().to_numpy()
    if not bad.any():
        return SourceColumn(name, "continuous")
    # a column is numeric with bad cells when most of its cells parse
    if bad.mean() < 0.5:
        row = int(np.flatnonzero(bad)[0])
        raise DataValidationError(
            f"non-numeric value {cells.iloc[row]!r} in numeric column {name!r}", line=_line(row)
        )
    return SourceColumn(name, "categorical", tuple(sorted(cells.unique())))


def _parse_target(cells: pd.Series, target: str, family: str) -> np.ndarray:
    values = pd.to_numeric(cells, errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        raise DataValidationError(
            f"non-numeric target {cells.iloc[bad[0]]!r} in column {target!r}", line=_line(bad[0])
        )
    y = values.to_numpy(dtype=float)
    law = get_family(family)
    try:
        law.check_support(y)
    except SupportError as exc:
        row = int(np.flatnonzero(~law.in_support(y))[0])
        raise DataValidationError(str(exc), line=_line(row)) from exc
    return y


def _encode_sources(frame: pd.DataFrame, feature_names: list[str]):
    sources = []
    columns: list[ColumnMeta] = []
    for name in feature_names:
        source = _infer_source(_clean_cells(frame[name], name), name)
        sources.append(source)
        if source.kind == "continuous":
            columns.append(ColumnMeta(name, "continuous-ranked", name))
        else:
            columns.extend(
                ColumnMeta(f"{name}={level}", "one-hot-level", name, level) for level in source.levels
            )
    return tuple(sources), tuple(columns)


def load_csv(path: str | Path, target_column: str, family: str) -> Dataset:
    """Parse a headed CSV into a preprocessed :class:`Dataset`."""
    get_family(family)
    frame = _read_table(path)
    if target_column not in frame.columns:
        raise DataValidationError(f"unknown target column {target_column!r}")
    if len(frame) < 2:
        raise DataValidationError("a dataset needs at least two rows")
    feature_names = [c for c in frame.columns if c != target_column]
    if not feature_names:
        raise DataValidationError("no feature columns besides the target")

    y = _parse_target(_clean_cells(frame[target_column], target_column), target_column, family)
    sources, columns = _encode_sources(frame, feature_names)
    placeholder = Preprocessor(sources, columns, tuple(None for _ in columns))
    raw = placeholder.encode(frame)
    preprocessor = Preprocessor.fit(sources, columns, raw)
    logger.info(
        "loaded %s: n=%d, %d source columns -> p=%d design columns",
        Path(path).name, len(frame), len(sources), len(columns),
    )
    return Dataset(
        x=preprocessor.transform_fitting_rows(raw),
        y=y,
        family=family,
        columns=columns,
        raw=raw,
        preprocessor=preprocessor,
        target=target_column,
    )


def read_features(path: str | Path, preprocessor: Preprocessor, *, target_column: str | None = None,
                  family: str | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Map a new CSV through a fitted preprocessor.

    Returns the unit-cube design and the parsed target when the file has the
    target column.
    """
    frame = _read_table(path)
    x = preprocessor.transform(preprocessor.encode(frame))
    y = None
    if target_column is not None and target_column in frame.columns and family is not None:
        y = _parse_target(_clean_cells(frame[target_column], target_column), target_column, family)
    return x, y


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write the raw source columns plus the target; readable by :func:`load_csv`."""
    frame = pd.DataFrame()
    offset = 0
    for source in ds.preprocessor.sources:
        if source.kind == "continuous":
            frame[source.name] = ds.raw[:, offset]
            offset += 1
        else:
            block = ds.raw[:, offset:offset + len(source.levels)]
            frame[source.name] = [source.levels[i] for i in block.argmax(axis=1)]
            offset += len(source.levels)
    frame[ds.target] = ds.y
    frame.to_csv(path, index=False, float_format="%.17g")


def _split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n_test = round(n * test_fraction)
    n_train = n - n_test
    if n_test < 1 or n_train < 1:
        raise ValueError(
            f"splitting {n} rows with test_fraction={test_fraction} leaves an empty part"
        )
    return n_train, n_test


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded row partition; the rank transform is refit on the training rows."""
    _, n_test = _split_sizes(ds.n, test_fraction)
    order = np.random.default_rng(seed).permutation(ds.n)
    test_rows = np.sort(order[:n_test])
    train_rows = np.sort(order[n_test:])
    preprocessor = Preprocessor.fit(ds.preprocessor.sources, ds.columns, ds.raw[train_rows])
    train = ds.take(train_rows, preprocessor, fitting=True)
    test = ds.take(test_rows, preprocessor, fitting=False)
    return train, test


def kfold_split(ds: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Seeded k-fold partition; each training part refits its own rank transform."""
    if k < 2 or k > ds.n:
        raise ValueError(f"k must lie in [2, n]; got k={k} for n={ds.n}")
    order = np.random.default_rng(seed).permutation(ds.n)
    folds = np.array_split(order, k)
    splits = []
    for held_out in folds:
        test_rows = np.sort(held_out)
        train_rows = np.setdiff1d(order, held_out)
        preprocessor = Preprocessor.fit(ds.preprocessor.sources, ds.columns, ds.raw[train_rows])
        splits.append((
            ds.take(train_rows, preprocessor, fitting=True),
            ds.take(test_rows, preprocessor, fitting=False),
        ))
    return splits
