"""Partially observed data matrices and the geometric statistics of a clustering.

Data is stored features x points: column ``i`` holds point ``x_i`` and the
boolean ``mask`` marks which of its entries were observed.  Unobserved
entries are held as NaN so any arithmetic that touches them is poisoned
rather than silently defaulted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

DEFAULT_MISSING_TOKENS = frozenset({"", "na", "nan"})


class DataError(ValueError):
    """Raised for malformed input data."""


class ParseError(DataError):
    """CSV content that cannot be turned into a DataSet."""

    def __init__(self, message, row=None, col=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.col = col


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DataSet:
    """A P x N matrix of optionally observed real values.

    Parameters
    ----------
    values : array_like, shape (P, N)
        Feature values. Entries where ``mask`` is false are replaced by NaN.
    mask : array_like of bool, shape (P, N), optional
        True where the entry is observed. Defaults to ``isfinite(values)``.
    """

    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        if self.mask is None:
            mask = np.isfinite(values)
        else:
            mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise DataError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        if not np.all(np.isfinite(values[mask])):
            raise DataError("observed entries must be finite")
        values = np.where(mask, values, np.nan)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))

    @property
    def features(self) -> int:
        return self.values.shape[0]

    @property
    def points(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def observed_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def observed(self, i):
        """Return ``(indices, values)`` of the observed entries of point ``i``."""
        idx = np.flatnonzero(self.mask[:, i])
        return idx, self.values[idx, i]

    def value(self, p, i) -> float:
        if not self.mask[p, i]:
            raise DataError(f"entry ({p}, {i}) is not observed")
        return float(self.values[p, i])

    def filled(self, fill) -> np.ndarray:
        """Dense copy with unobserved entries replaced.

        ``fill`` is a scalar or a length-P vector of per-feature values.
        """
        fill = np.asarray(fill, dtype=float)
        if fill.ndim == 1:
            fill = fill[:, None]
        return np.where(self.mask, self.values, fill)

    def observed_means(self) -> np.ndarray:
        """Per-feature mean of observed values (0 for never-observed features)."""
        counts = self.mask.sum(axis=1)
        sums = np.where(self.mask, self.values, 0.0).sum(axis=1)
        return np.divide(sums, counts, out=np.zeros(self.features), where=counts > 0)

    def with_mask(self, mask) -> "DataSet":
        """Restrict the observation mask; entries cannot be un-hidden."""
        mask = np.asarray(mask, dtype=bool)
        return DataSet(self.values, self.mask & mask)

    def take(self, columns) -> "DataSet":
        columns = np.asarray(columns)
        return DataSet(self.values[:, columns], self.mask[:, columns])


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Cluster labels (1..K) for every point plus the P x K centers."""

    labels: np.ndarray
    centers: np.ndarray
    K: int = field(init=False)
    M: int = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        K = centers.shape[1]
        if labels.ndim != 1:
            raise DataError("labels must be 1-D")
        if labels.size and (labels.min() < 1 or labels.max() > K):
            raise DataError(f"labels must lie in [1, {K}]")
        counts = np.bincount(labels, minlength=K + 1)[1:]
        if K and not np.all(counts == counts[0]):
            raise DataError(f"clusters must have equal sizes, got {counts.tolist()}")
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "centers", _readonly(centers))
        object.__setattr__(self, "K", int(K))
        object.__setattr__(self, "M", int(counts[0]) if K else 0)

    @property
    def groups(self):
        return [tuple(np.flatnonzero(self.labels == k).tolist())
                for k in range(1, self.K + 1)]


@dataclass(frozen=True)
class ClusterStats:
    delta: float
    epsilon: float
    mu0: float
    c: float
    P: int

    @property
    def kappa(self) -> float:
        return self.epsilon * math.sqrt(self.P) / self.delta if self.delta > 0 else math.inf

    @property
    def kappa_prime(self) -> float:
        return self.epsilon * math.sqrt(self.P) / self.c if self.c > 0 else math.inf

    def as_dict(self):
        return {"delta": self.delta, "epsilon": self.epsilon, "kappa": self.kappa,
                "mu0": self.mu0, "c": self.c, "kappa_prime": self.kappa_prime}


def coherence(y) -> float:
    """P * ||y||_inf^2 / ||y||_2^2, which lies in [1, P]."""
    y = np.asarray(y, dtype=float).ravel()
    sq = float(np.dot(y, y))
    if sq == 0.0:
        raise DataError("coherence of the zero vector is undefined")
    return y.size * float(np.max(np.abs(y))) ** 2 / sq


def partial_distance(x1, x2, mask1=None, mask2=None) -> Optional[float]:
    """Distance on commonly observed features, rescaled by sqrt(P / |common|).

    Returns None when the two points share no observed feature.
    """
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise DataError(f"length mismatch: {x1.size} vs {x2.size}")
    m1 = np.isfinite(x1) if mask1 is None else np.asarray(mask1, dtype=bool).ravel()
    m2 = np.isfinite(x2) if mask2 is None else np.asarray(mask2, dtype=bool).ravel()
    if m1.shape != x1.shape or m2.shape != x2.shape:
        raise DataError("mask length does not match point length")
    common = m1 & m2
    q = int(common.sum())
    if q == 0:
        return None
    d = x1[common] - x2[common]
    return math.sqrt(x1.size / q) * float(np.sqrt(np.dot(d, d)))


def partial_distance_matrix(data: DataSet) -> np.ndarray:
    """All pairwise partial distances; NaN where no feature is shared."""
    m = data.mask
    x = np.where(m, data.values, 0.0)
    P, N = data.shape
    d = np.full((N, N), np.nan)
    for i in range(N):
        common = m[:, i:i + 1] & m[:, i:]
        diff = np.where(common, x[:, i:i + 1] - x[:, i:], 0.0)
        q = common.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            row = np.sqrt(P / q * np.einsum("pj,pj->j", diff, diff))
        row[q == 0] = np.nan
        d[i, i:] = row
        d[i:, i] = row
    return d


def pairwise_distances(U) -> np.ndarray:
    """Euclidean distances between the columns of ``U``."""
    U = np.asarray(U, dtype=float)
    if U.shape[1] < 2:
        return np.zeros((U.shape[1], U.shape[1]))
    return squareform(pdist(U.T))


def dataset_stats(data: DataSet, truth: GroundTruth) -> ClusterStats:
    """delta, epsilon, mu0 and c of a fully observed labelled dataset."""
    if not data.is_complete():
        raise DataError("dataset_stats needs a fully observed dataset")
    if truth.K < 2:
        raise DataError("at least two clusters are needed for separation statistics")
    if truth.labels.size != data.points:
        raise DataError("labels do not match the number of points")
    X = data.values
    labels = truth.labels
    delta = math.inf
    mu0 = 1.0
    eps = 0.0
    for k in range(1, truth.K + 1):
        A = X[:, labels == k]
        spread = A.max(axis=1) - A.min(axis=1)
        eps = max(eps, float(spread.max()))
        for l in range(k + 1, truth.K + 1):
            B = X[:, labels == l]
            diff = A[:, :, None] - B[:, None, :]
            sq = np.einsum("pij,pij->ij", diff, diff)
            delta = min(delta, float(np.sqrt(sq.min())))
            inf2 = np.max(np.abs(diff), axis=0) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                mu = np.where(sq > 0, data.features * inf2 / sq, 1.0)
            mu0 = max(mu0, float(mu.max()))
    C = truth.centers
    c = math.inf
    for k in range(truth.K):
        for l in range(k + 1, truth.K):
            c = min(c, float(np.linalg.norm(C[:, k] - C[:, l])))
    return ClusterStats(delta=delta, epsilon=eps, mu0=mu0, c=c, P=data.features)


def _is_missing(cell, tokens):
    return cell.strip().lower() in tokens


def load_csv(source: Union[str, TextIO], missing_tokens: Iterable[str] = None,
             orientation="rows-are-points", header=False) -> DataSet:
    """Parse a numeric CSV table into a DataSet.

    Parameters
    ----------
    source : str or file-like
        CSV text, or an open text stream.
    missing_tokens : iterable of str, optional
        Cell contents (case-insensitive, whitespace-stripped) meaning
        "not observed". Defaults to empty, ``NA`` and ``NaN``.
    orientation : {"rows-are-points", "rows-are-features"}
    header : bool
        Skip the first row.
    """
    if orientation not in ("rows-are-points", "rows-are-features"):
        raise ValueError(f"unknown orientation {orientation!r}")
    tokens = (DEFAULT_MISSING_TOKENS if missing_tokens is None
              else frozenset(t.strip().lower() for t in missing_tokens))
    stream = io.StringIO(source) if isinstance(source, str) else source
    rows = [r for r in csv.reader(stream) if r]
    if header and rows:
        rows = rows[1:]
    if not rows:
        raise ParseError("empty table")
    width = len(rows[0])
    first = 2 if header else 1
    values = np.empty((len(rows), width))
    mask = np.ones((len(rows), width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"expected {width} cells, found {len(row)}", row=r + first)
        for c, cell in enumerate(row):
            if _is_missing(cell, tokens):
                mask[r, c] = False
                values[r, c] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=r + first, col=c + 1) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell!r}", row=r + first, col=c + 1)
            values[r, c] = v
    if orientation == "rows-are-points":
        values, mask = values.T, mask.T
    return DataSet(values, mask)


def dump_csv(data: DataSet, orientation="rows-are-points", header=None) -> str:
    """Emit CSV text; missing cells are written as ``NA``.

    ``repr`` of floats round-trips exactly, so ``load_csv(dump_csv(d))``
    reproduces values and mask bit for bit.
    """
    vals, mask = data.values, data.mask
    if orientation == "rows-are-points":
        vals, mask = vals.T, mask.T
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for vrow, mrow in zip(vals, mask):
        w.writerow([repr(float(v)) if m else "NA" for v, m in zip(vrow, mrow)])
    return out.getvalue()


def load_labels(source: Union[str, TextIO]) -> np.ndarray:
    """Read one integer label per line (or first CSV column)."""
    stream = io.StringIO(source) if isinstance(source, str) else source
    labels = []
    for n, row in enumerate(csv.reader(stream), start=1):
        if not row or not row[0].strip():
            continue
        try:
            labels.append(int(float(row[0])))
        except ValueError:
            if n == 1:
                continue  # header
            raise ParseError(f"bad label {row[0]!r}", row=n) from None
    return np.asarray(labels, dtype=int)


def load_wine(path):
    """Load the UCI ``wine.data`` file: class label followed by 13 features.

    Returns ``(DataSet, labels)`` with labels in {1, 2, 3}.
    """
    with open(path, newline="") as f:
        table = [r for r in csv.reader(f) if r]
    try:
        arr = np.array([[float(c) for c in r] for r in table])
    except ValueError:
        arr = np.array([[float(c) for c in r] for r in table[1:]])
    labels = arr[:, 0].astype(int)
    return DataSet(arr[:, 1:].T), labels
