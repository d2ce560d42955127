"""Weighted point sets, CSV ingestion and the preprocessing steps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

LABEL_COLUMN = "label"
WEIGHT_COLUMN = "weight"
SOURCE_COLUMN = "source_row"


class DataError(ValueError):
    """Raised when input data violates the point-set invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeightedPointSet:
    """n points in R^d with positive weights and optional +-1 labels.

    Arrays are copied and made read-only on construction, so instances can be
    shared freely.
    """

    points: np.ndarray
    weights: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    columns: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"points must be a non-empty n x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            row = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise DataError(f"non-finite value in row {row}")
        n = pts.shape[0]
        if self.weights is None:
            w = np.ones(n)
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != (n,):
                raise DataError(f"expected {n} weights, got {w.shape[0]}")
            bad = ~(np.isfinite(w) & (w > 0))
            if bad.any():
                raise DataError(f"weight in row {int(np.argmax(bad))} is not a positive finite number")
        y = None
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=float).ravel()
            if y.shape != (n,):
                raise DataError(f"expected {n} labels, got {y.shape[0]}")
            bad = ~np.isin(y, (-1.0, 1.0))
            if bad.any():
                raise DataError(f"label in row {int(np.argmax(bad))} is not +1 or -1")
            y = _frozen(y)
        cols = self.columns
        if cols is not None:
            cols = tuple(cols)
            if len(cols) != pts.shape[1]:
                raise DataError("column names do not match the feature count")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def feature_names(self) -> tuple:
        if self.columns is not None:
            return self.columns
        return tuple(f"f{j}" for j in range(self.d))

    def __len__(self):
        return self.n

    def take(self, indices, weights=None) -> "WeightedPointSet":
        """Rows at ``indices`` (repeats allowed), optionally re-weighted."""
        idx = np.asarray(indices, dtype=int)
        w = self.weights[idx] if weights is None else weights
        y = None if self.labels is None else self.labels[idx]
        return WeightedPointSet(self.points[idx], w, y, self.columns)

    def with_weights(self, weights) -> "WeightedPointSet":
        return WeightedPointSet(self.points, weights, self.labels, self.columns)

    def with_points(self, points) -> "WeightedPointSet":
        return WeightedPointSet(points, self.weights, self.labels, self.columns)

    def class_mask(self, label: int) -> np.ndarray:
        if self.labels is None:
            raise DataError("point set has no labels")
        return self.labels == label


def concat(sets: Sequence[WeightedPointSet]) -> WeightedPointSet:
    """Row-wise union of point sets, keeping each set's weights."""
    if not sets:
        raise DataError("nothing to concatenate")
    has_labels = {s.labels is not None for s in sets}
    if len(has_labels) != 1:
        raise DataError("cannot mix labelled and unlabelled point sets")
    labels = np.concatenate([s.labels for s in sets]) if has_labels.pop() else None
    return WeightedPointSet(
        np.vstack([s.points for s in sets]),
        np.concatenate([s.weights for s in sets]),
        labels,
        sets[0].columns,
    )


def _parse(value: str, row: int, column: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {value!r}") from None
    if not math.isfinite(x):
        raise DataError(f"row {row}, column {column!r}: non-finite value {value!r}")
    return x


class _Schema:
    def __init__(self, path, header, features, label, weight):
        reserved = {label, weight, SOURCE_COLUMN}
        if features is None:
            features = [h for h in header if h not in reserved]
        missing = [c for c in features if c not in header]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        self.header = header
        self.features = tuple(features)
        self.fidx = [header.index(c) for c in features]
        self.label = label
        self.weight = weight
        self.lidx = header.index(label) if label in header else None
        self.widx = header.index(weight) if weight in header else None

    def parse(self, rows, first_row):
        n = len(rows)
        X = np.empty((n, len(self.fidx)))
        w = np.ones(n) if self.widx is None else np.empty(n)
        y = None if self.lidx is None else np.empty(n)
        for i, r in enumerate(rows):
            rowno = first_row + i
            if len(r) != len(self.header):
                raise DataError(f"row {rowno}: expected {len(self.header)} fields, got {len(r)}")
            for j, k in enumerate(self.fidx):
                X[i, j] = _parse(r[k], rowno, self.header[k])
            if self.widx is not None:
                w[i] = _parse(r[self.widx], rowno, self.weight)
                if w[i] <= 0:
                    raise DataError(f"row {rowno}, column {self.weight!r}: weight must be positive")
            if y is not None:
                y[i] = _parse(r[self.lidx], rowno, self.label)
                if y[i] not in (1.0, -1.0):
                    raise DataError(f"row {rowno}, column {self.label!r}: label must be +1 or -1")
        return WeightedPointSet(X, w, y, self.features)


def _open_csv(path):
    fh = Path(path).open(newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        fh.close()
        raise DataError(f"{path}: empty file") from None
    return fh, reader, header


def load_csv(path, features: Optional[Sequence[str]] = None,
             label: Optional[str] = LABEL_COLUMN,
             weight: Optional[str] = WEIGHT_COLUMN) -> WeightedPointSet:
    """Read a comma-separated file with a header row.

    Parameters
    ----------
    path : path-like
    features : sequence of str, optional
        Feature columns. Defaults to every column that is not the label,
        weight or ``source_row`` column, in file order.
    label, weight : str or None
        Names of the optional label / weight columns. A missing column means
        no labels / unit weights.

    Row numbers in error messages are 1-based data rows (header excluded).
    """
    fh, reader, header = _open_csv(path)
    with fh:
        schema = _Schema(path, header, features, label, weight)
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    return schema.parse(rows, 1)


def iter_csv(path, batch_size: int, features: Optional[Sequence[str]] = None,
             label: Optional[str] = LABEL_COLUMN,
             weight: Optional[str] = WEIGHT_COLUMN) -> Iterator[WeightedPointSet]:
    """Yield consecutive chunks of at most ``batch_size`` rows."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    fh, reader, header = _open_csv(path)
    with fh:
        schema = _Schema(path, header, features, label, weight)
        buf, first = [], 1
        for r in reader:
            if not r:
                continue
            buf.append(r)
            if len(buf) == batch_size:
                yield schema.parse(buf, first)
                first += len(buf)
                buf = []
        if buf:
            yield schema.parse(buf, first)


def _fmt(x: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(x))


def save_csv(path, ps: WeightedPointSet, source_rows=None, write_weights: bool = True):
    """Write ``ps`` as CSV: features, then label, weight and source_row if present."""
    header = list(ps.feature_names)
    if ps.labels is not None:
        header.append(LABEL_COLUMN)
    if write_weights:
        header.append(WEIGHT_COLUMN)
    if source_rows is not None:
        header.append(SOURCE_COLUMN)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(ps.n):
            row = [_fmt(v) for v in ps.points[i]]
            if ps.labels is not None:
                row.append(str(int(ps.labels[i])))
            if write_weights:
                row.append(_fmt(ps.weights[i]))
            if source_rows is not None:
                row.append(str(int(source_rows[i])))
            out.writerow(row)


def standardize(ps: WeightedPointSet) -> WeightedPointSet:
    """Center each column and scale it to unit population variance.

    Statistics are unweighted. Zero-variance columns are only centered.
    """
    if ps.n < 2:
        raise DataError("standardize needs at least two points")
    X = ps.points
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    # the mean of identical values can be off by an ulp, which would turn roundoff into signal
    const = np.ptp(X, axis=0) == 0
    mu[const] = X[0, const]
    sd[const | (sd == 0)] = 1.0
    return ps.with_points((X - mu) / sd)


def normalize_max_norm(ps: WeightedPointSet) -> WeightedPointSet:
    """Divide every point by the largest Euclidean row norm."""
    scale = np.abs(ps.points).max()
    if scale == 0:
        raise DataError("all points are zero; cannot normalize")
    # pre-scaling keeps the squared norms clear of underflow and overflow
    Y = ps.points / scale
    return ps.with_points(Y / np.linalg.norm(Y, axis=1).max())
