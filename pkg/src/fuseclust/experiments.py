"""Synthetic clusters, random sub-sampling and Monte Carlo success curves."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exact import Partition
from .model import DataError, DataSet, GroundTruth, pairwise_distances
from .solver import SolverConfig, run_irls

log = logging.getLogger(__name__)

MAX_CENTER_ATTEMPTS = 1000
EXACT_MATCHING_MAX_K = 12


@dataclass(frozen=True)
class SyntheticSpec:
    """How to draw ``K`` clusters of ``M`` points in ``R^P``.

    Centers are either given (``centers``, P x K) or drawn uniformly in the
    unit cube and rescaled so the closest pair is ``center_sep`` apart.
    ``noise`` is ``"uniform"`` (a cube of side ``epsilon`` around each
    center) or ``"gaussian"`` (per-entry ``variance``).
    """

    K: int
    M: int
    P: int
    noise: str = "uniform"
    epsilon: float = 0.0
    variance: float = 0.0
    center_sep: float = 1.0
    centers: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.M < 1 or self.P < 1:
            raise ValueError("K, M and P must be positive")
        if self.noise not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.epsilon < 0 or self.variance < 0:
            raise ValueError("noise scale must be non-negative")
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=float)
            if c.shape != (self.P, self.K):
                raise ValueError(f"centers must be {self.P} x {self.K}, got {c.shape}")

    def with_(self, **kw):
        return replace(self, **kw)


def draw_centers(K, P, center_sep, rng) -> np.ndarray:
    """Uniform centers in the unit cube, scaled to minimum separation ``center_sep``."""
    if K == 1:
        return rng.random((P, 1))
    for _ in range(MAX_CENTER_ATTEMPTS):
        C = rng.random((P, K))
        d = pairwise_distances(C)
        dmin = d[np.triu_indices(K, k=1)].min()
        if dmin > 1e-12:
            return C * (center_sep / dmin)
    raise DataError(f"could not draw separated centers in {MAX_CENTER_ATTEMPTS} attempts")


def spec_centers(spec: SyntheticSpec) -> np.ndarray:
    if spec.centers is not None:
        return np.asarray(spec.centers, dtype=float)
    return draw_centers(spec.K, spec.P, spec.center_sep,
                        np.random.default_rng([spec.seed, 0xC0FFEE]))


def sample_points(spec: SyntheticSpec, centers, rng):
    """Noisy points around ``centers`` in a random order, with their labels."""
    K, M, P = spec.K, spec.M, spec.P
    if spec.noise == "uniform":
        noise = (rng.random((P, K * M)) - 0.5) * spec.epsilon
    else:
        noise = rng.standard_normal((P, K * M)) * math.sqrt(spec.variance)
    labels = np.repeat(np.arange(1, K + 1), M)
    Z = centers[:, labels - 1] + noise
    order = rng.permutation(K * M)
    return Z[:, order], labels[order]


def generate_clusters(spec: SyntheticSpec, rng=None):
    """Draw a dataset following ``spec``; returns ``(DataSet, GroundTruth)``.

    Deterministic given ``spec.seed`` unless an explicit generator is passed.
    """
    centers = spec_centers(spec)
    if rng is None:
        rng = np.random.default_rng([spec.seed, 1])
    X, labels = sample_points(spec, centers, rng)
    return DataSet(X), GroundTruth(labels, centers)


def apply_sampling(data: DataSet, p0: float, seed=None) -> DataSet:
    """Keep each observed entry independently with probability ``p0``."""
    if not 0.0 < p0 <= 1.0:
        raise ValueError(f"p0 must be in (0, 1], got {p0}")
    if p0 == 1.0:
        return data
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.random(data.shape) < p0
    return data.with_mask(keep)


def calibrated_centers(P, epsilon, kappa, mu0, M=25, seed=0, iters=60):
    """Two centers whose uniform-noise clusters have roughly the target kappa and mu0.

    The center difference has entries ``a * s_p * (1 + shape * g_p)`` with
    random signs ``s_p`` and a fixed spread profile ``g_p``. ``shape`` is
    tuned by bisection so a reference sample of ``M`` points per cluster has
    coherence ``mu0``; the amplitude ``a`` is rescaled so its ``kappa``
    matches. The reference sample uses its own seed, so the returned
    statistics are approximate for other draws.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    signs = np.where(rng.random(P) < 0.5, -1.0, 1.0)
    profile = rng.permutation(np.linspace(-1.0, 1.0, P))
    ref_rng = np.random.default_rng([seed, 0xBEEF])
    noise = (ref_rng.random((P, 2 * M)) - 0.5) * epsilon

    def stats(shape, a):
        diff = a * signs * (1.0 + shape * profile)
        C = np.column_stack([np.zeros(P), diff])
        X = C[:, np.repeat([0, 1], M)] + noise
        A, B = X[:, :M], X[:, M:]
        D = A[:, :, None] - B[:, None, :]
        sq = np.einsum("pij,pij->ij", D, D)
        mu = P * np.max(np.abs(D), axis=0) ** 2 / sq
        eps_emp = max(float(np.ptp(A, axis=1).max()), float(np.ptp(B, axis=1).max()))
        return eps_emp * math.sqrt(P) / math.sqrt(sq.min()), float(mu.max()), C

    def fit_amplitude(shape):
        a = epsilon / kappa
        for _ in range(iters):
            k, mu, C = stats(shape, a)
            if abs(k - kappa) <= 1e-9 * kappa:
                break
            a *= k / kappa
        return a

    lo, hi = 0.0, 0.999
    if stats(lo, fit_amplitude(lo))[1] > mu0:
        hi = lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if stats(mid, fit_amplitude(mid))[1] < mu0:
            lo = mid
        else:
            hi = mid
    shape = 0.5 * (lo + hi)
    a = fit_amplitude(shape)
    return stats(shape, a)[2]


@dataclass(frozen=True)
class TrialReport:
    success: bool
    misclassification_rate: float
    center_error: float
    iterations: int = 0
    groups: int = 0


def _truth_labels(truth):
    if isinstance(truth, GroundTruth):
        return truth.labels, truth.centers
    return np.asarray(truth, dtype=int), None


def evaluate_partition(found: Partition, truth: Union[GroundTruth, Sequence[int]]) -> TrialReport:
    """Compare a partition with the true labels.

    The misclassification rate counts the points outside the best one-to-one
    matching of found groups to true clusters. The center error is the
    largest distance between a true center and the center of its matched
    group (infinite when some cluster is left unmatched).
    """
    labels, centers = _truth_labels(truth)
    N = labels.size
    if found.n_points != N:
        raise ValueError(f"partition has {found.n_points} points, truth has {N}")
    classes = np.unique(labels)
    G = len(found.groups)
    counts = np.zeros((G, classes.size), dtype=int)
    col = {c: k for k, c in enumerate(classes.tolist())}
    for g, members in enumerate(found.groups):
        for i in members:
            counts[g, col[labels[i]]] += 1
    if classes.size <= EXACT_MATCHING_MAX_K or G <= EXACT_MATCHING_MAX_K:
        rows, cols = linear_sum_assignment(counts, maximize=True)
    else:
        rows, cols = _greedy_matching(counts)
    matched = int(counts[rows, cols].sum())
    true_groups = {tuple(np.flatnonzero(labels == c).tolist()) for c in classes.tolist()}
    success = set(found.groups) == true_groups
    err = math.nan
    if centers is not None and found.centers is not None:
        err = 0.0
        if len(cols) < classes.size:
            err = math.inf
        for g, k in zip(rows, cols):
            k_true = int(classes[k]) - 1
            err = max(err, float(np.linalg.norm(found.centers[:, g] - centers[:, k_true])))
    return TrialReport(success=success, misclassification_rate=(N - matched) / N,
                       center_error=err, groups=G)


def _greedy_matching(counts):
    counts = counts.astype(float).copy()
    rows, cols = [], []
    for _ in range(min(counts.shape)):
        g, k = np.unravel_index(np.argmax(counts), counts.shape)
        rows.append(g)
        cols.append(k)
        counts[g, :] = -1
        counts[:, k] = -1
    return np.array(rows), np.array(cols)


@dataclass(frozen=True)
class CurveRow:
    p0: float
    M: int
    trials: int
    success_prob: float
    mean_misclass: float


@dataclass
class SuccessCurve:
    rows: List[CurveRow]

    def lookup(self, p0, M) -> CurveRow:
        for r in self.rows:
            if r.M == M and math.isclose(r.p0, p0):
                return r
        raise KeyError((p0, M))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["p0", "M", "trials", "success_prob", "mean_misclass"])
        for r in self.rows:
            w.writerow([repr(r.p0), r.M, r.trials, repr(r.success_prob), repr(r.mean_misclass)])
        return out.getvalue()


Solver = Union[SolverConfig, Callable[[DataSet], Partition]]


def _solve(solver: Solver, data: DataSet):
    if isinstance(solver, SolverConfig):
        res = run_irls(data, solver)
        return res.partition, res.iterations
    return solver(data), 0


def run_trial(spec: SyntheticSpec, centers, solver: Solver, p0, seed) -> TrialReport:
    """One draw of points and mask, solved and scored."""
    rng = np.random.default_rng(seed)
    X, labels = sample_points(spec, centers, rng)
    truth = GroundTruth(labels, centers)
    data = apply_sampling(DataSet(X), p0, rng)
    try:
        part, iters = _solve(solver, data)
    except Exception as exc:  # counted as a failed trial
        log.warning("trial %s failed: %s", seed, exc)
        return TrialReport(False, 1.0, math.inf)
    rep = evaluate_partition(part, truth)
    return replace(rep, iterations=iters)


def success_curve(spec: SyntheticSpec, solver: Solver, p0_list, M_list, trials: int,
                  seed: int = 0, threads: int = 1) -> SuccessCurve:
    """Empirical probability of exact recovery over a grid of ``p0`` and ``M``.

    Centers are fixed once from ``spec``; every trial draws fresh noise and a
    fresh mask from a stream keyed by ``(seed, p0 index, M index, trial)``,
    so the result does not depend on ``threads`` or evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    centers = spec_centers(spec)
    jobs = []
    for a, p0 in enumerate(p0_list):
        for b, M in enumerate(M_list):
            s = spec.with_(M=int(M))
            for t in range(trials):
                jobs.append((a, b, s, p0, [seed, a, b, t]))

    def work(job):
        a, b, s, p0, key = job
        return run_trial(s, centers, solver, p0, key)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(work, jobs))
    else:
        reports = [work(j) for j in jobs]

    rows = []
    k = 0
    for a, p0 in enumerate(p0_list):
        for b, M in enumerate(M_list):
            batch = reports[k:k + trials]
            k += trials
            rows.append(CurveRow(float(p0), int(M), trials,
                                 sum(r.success for r in batch) / trials,
                                 sum(r.misclassification_rate for r in batch) / trials))
    return SuccessCurve(rows)


def pca_basis(points):
    """Column mean and the top-2 principal directions (P x 2) of ``points``.

    Each direction is signed so its largest-magnitude loading is positive
    (the first such loading on ties).
    """
    X = np.asarray(points, dtype=float)
    P, N = X.shape
    if N < 2:
        raise ValueError("PCA needs at least two points")
    mean = X.mean(axis=1, keepdims=True)
    Xc = X - mean
    cov = Xc @ Xc.T / (N - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    V = np.zeros((P, 2))
    scale = max(float(vals.max()), 0.0)
    for k, j in enumerate(order):
        if vals[j] <= 1e-12 * scale or scale == 0.0:
            continue
        v = vecs[:, j]
        big = np.argmax(np.abs(v))
        V[:, k] = v if v[big] > 0 else -v
    return mean, V


def pca2(points) -> np.ndarray:
    """2 x N projection on the two leading principal components."""
    mean, V = pca_basis(points)
    return V.T @ (np.asarray(points, dtype=float) - mean)


def pca_table(data_points, centers, labels) -> str:
    """CSV of point and center projections sharing the basis of the points."""
    mean, V = pca_basis(data_points)
    pts = V.T @ (np.asarray(data_points) - mean)
    ctr = V.T @ (np.asarray(centers) - mean)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["pc1", "pc2", "label", "center_pc1", "center_pc2"])
    for i in range(pts.shape[1]):
        w.writerow([repr(float(pts[0, i])), repr(float(pts[1, i])), int(labels[i]),
                    repr(float(ctr[0, i])), repr(float(ctr[1, i]))])
    return out.getvalue()



def standardize(data: DataSet) -> DataSet:
    """Scale every feature to zero mean and unit variance over its observed entries."""
    mean = data.observed_means()
    X = data.filled(mean) - mean[:, None]
    sd = np.sqrt((np.where(data.mask, X, 0.0) ** 2).sum(axis=1)
                 / np.maximum(data.mask.sum(axis=1), 1))
    sd[sd == 0] = 1.0
    return DataSet(X / sd[:, None], data.mask)


def core_subset(data: DataSet, labels, M: int):
    """Indices of the ``M`` points of each class closest to their class mean.

    A simple outlier trim for labelled benchmarks; needs complete data.
    Returns indices grouped by class in ascending label order.
    """
    if not data.is_complete():
        raise DataError("core_subset needs a fully observed dataset")
    labels = np.asarray(labels)
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < M:
            raise DataError(f"class {c} has only {idx.size} points, need {M}")
        A = data.values[:, idx]
        d = np.linalg.norm(A - A.mean(axis=1, keepdims=True), axis=0)
        keep.extend(idx[np.argsort(d, kind="stable")[:M]].tolist())
    return np.array(keep, dtype=int)
