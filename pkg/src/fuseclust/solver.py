"""Iteratively reweighted least squares for non-convex fusion clustering.

Both relaxations replace the l0 indicator by a penalty ``phi`` on the
distances ``||u_i - u_j||`` and alternate

1. ``w_ij = phi'(d_ij) / (2 d_ij)`` at the current centers, and
2. a weighted least-squares problem in the centers ``U`` (P x N):

   * constrained:   min sum_ij w_ij ||u_i - u_j||^2
                    s.t. |u_i(p) - x_i(p)| <= eps/2 on observed entries
   * unconstrained: min sum_i ||S_i (u_i - x_i)||^2 + lam sum_ij w_ij ||u_i - u_j||^2

Sums run over ordered pairs. Each step majorizes the relaxed objective; a
backtracking safeguard keeps the objective from increasing when round-off
or the l1/lp weight guard breaks that.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg

from .exact import Partition
from .model import DataError, DataSet, partial_distance_matrix, pairwise_distances
from .penalties import Penalty, penalty_value, penalty_weight

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("partial", "zero", "mean")
DENSE_LIMIT = 2000
_FEAS_SLACK = 1e-9
MAX_BACKTRACK = 30


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`run_irls`.

    ``mode`` is ``"constrained"`` (needs ``epsilon``) or ``"unconstrained"``
    (needs ``lam``). ``cluster_tol=None`` picks ``1e-4`` times the median
    pairwise distance of the initial centers. ``sigma_decay`` enables an
    optional geometric shrinking of the h1 width after every outer step,
    down to ``sigma_floor``; descent is only guaranteed without it.
    """

    penalty: Penalty = field(default_factory=Penalty)
    mode: str = "unconstrained"
    epsilon: Optional[float] = None
    lam: Optional[float] = None
    init: str = "partial"
    max_outer: int = 100
    outer_tol: float = 1e-6
    inner_tol: float = 1e-8
    inner_max: int = 10_000
    cluster_tol: Optional[float] = None
    sigma_decay: Optional[float] = None
    sigma_floor: float = 0.0

    def __post_init__(self):
        if self.mode not in ("constrained", "unconstrained"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "constrained" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("constrained mode needs epsilon > 0")
        if self.mode == "unconstrained" and not (self.lam is not None and self.lam > 0):
            raise ValueError("unconstrained mode needs lam > 0")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"init must be one of {INIT_STRATEGIES}, got {self.init!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        for name in ("outer_tol", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inner_max < 1:
            raise ValueError("inner_max must be >= 1")
        if self.cluster_tol is not None and self.cluster_tol < 0:
            raise ValueError("cluster_tol must be non-negative")
        if self.sigma_decay is not None and not 0 < self.sigma_decay < 1:
            raise ValueError("sigma_decay must lie in (0, 1)")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class SolveResult:
    centers: np.ndarray
    partition: Partition
    objective_trace: List[float]
    iterations: int
    converged: bool
    cluster_tol: float
    weights: np.ndarray = field(repr=False, default=None)


def initial_centers(data: DataSet, strategy="mean") -> np.ndarray:
    """``u_i = S_i x_i + (I - S_i) m`` with ``m`` zero or the observed feature means."""
    if strategy == "zero":
        return data.filled(0.0)
    return data.filled(data.observed_means())


def _median_defined(d):
    iu = np.triu_indices(d.shape[0], k=1)
    vals = d[iu]
    vals = vals[np.isfinite(vals)]
    return float(np.median(vals)) if vals.size else math.nan


def init_weights(data: DataSet, pen: Penalty, strategy="partial") -> np.ndarray:
    """Weights for the first least-squares step.

    ``partial`` uses rescaled distances on commonly observed features (pairs
    sharing none get the median defined distance); ``zero`` and ``mean``
    impute the missing entries and use full distances.
    """
    if data.points < 2:
        raise DataError("need at least two points")
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}")
    if strategy == "partial":
        d = partial_distance_matrix(data)
        np.fill_diagonal(d, 0.0)
        undefined = ~np.isfinite(d)
        if undefined.any():
            med = _median_defined(d)
            if math.isnan(med):
                raise DataError("no pair of points shares an observed feature; "
                                "use the 'zero' or 'mean' initialization instead")
            d[undefined] = med
    else:
        d = pairwise_distances(initial_centers(data, strategy))
    W = penalty_weight(pen, d)
    np.fill_diagonal(W, 0.0)
    return W


def update_weights(U, pen: Penalty) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    W = penalty_weight(pen, pairwise_distances(U))
    np.fill_diagonal(W, 0.0)
    return W


def _laplacian(W):
    W = np.array(W, dtype=float)
    np.fill_diagonal(W, 0.0)
    return np.diag(W.sum(axis=1)) - W


def _solve_spd(A, B, inner_tol):
    """Solve ``A X = B`` for symmetric positive (semi)definite ``A``."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        try:
            with warnings.catch_warnings():
                # weights spanning many decades; accuracy is checked by the residual tests
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                return scipy.linalg.solve(A, B, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            return scipy.linalg.lstsq(A, B, check_finite=False)[0]
    op = LinearOperator(A.shape, matvec=lambda v: A @ v, dtype=float)
    diag = np.diag(A).copy()
    diag[diag == 0] = 1.0
    pre = LinearOperator(A.shape, matvec=lambda v: v / diag, dtype=float)
    B2 = B.reshape(n, -1)
    out = np.empty_like(B2)
    for k in range(B2.shape[1]):
        out[:, k], info = cg(op, B2[:, k], rtol=inner_tol, atol=0.0, M=pre,
                             maxiter=10 * n)
        if info > 0:
            log.warning("conjugate gradient stopped before reaching rtol=%g", inner_tol)
    return out.reshape(B.shape)


def solve_unconstrained_subproblem(data: DataSet, W, lam: float,
                                   inner_tol: float = 1e-8) -> np.ndarray:
    """Exact minimizer of the weighted least-squares step of the unconstrained relaxation.

    Features decouple; feature ``p`` solves ``(D_p + 2 lam L) u = D_p x`` with
    ``D_p`` the observation indicator of row ``p`` and ``L`` the graph
    Laplacian of ``W``. Nodes in weight-graph components where feature ``p``
    is never observed are set to 0 (the limit of a vanishing ridge).
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    W = np.asarray(W, dtype=float)
    P, N = data.shape
    X = np.where(data.mask, data.values, 0.0)
    L2 = 2.0 * lam * _laplacian(W)
    _, comp = connected_components(W > 0, directed=False)
    U = np.zeros((P, N))
    rows_by_mask = {}
    for p in range(P):
        rows_by_mask.setdefault(data.mask[p].tobytes(), []).append(p)
    for key, rows in rows_by_mask.items():
        obs = data.mask[rows[0]]
        if not obs.any():
            continue
        live = np.isin(comp, np.unique(comp[obs]))
        idx = np.flatnonzero(live)
        A = L2[np.ix_(idx, idx)].copy()
        A[np.diag_indices_from(A)] += obs[idx]
        B = (X[rows][:, idx] * obs[idx]).T
        sol = _solve_spd(A, B, inner_tol)
        U[np.ix_(rows, idx)] = sol.T
    return U


def stationarity_residual(data: DataSet, W, lam: float, U) -> float:
    """Relative residual of the normal equations of the unconstrained step."""
    X = np.where(data.mask, data.values, 0.0)
    m = data.mask.astype(float)
    L = _laplacian(W)
    r = m * (U - X) + 2.0 * lam * (U @ L)
    scale = np.linalg.norm(m * X) + np.linalg.norm(m * U) + 2.0 * lam * np.linalg.norm(U @ L)
    return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def _bounds(data: DataSet, epsilon):
    half = 0.5 * epsilon
    lo = np.where(data.mask, data.values - half, -np.inf)
    hi = np.where(data.mask, data.values + half, np.inf)
    return lo, hi


def is_feasible(data: DataSet, U, epsilon, slack=_FEAS_SLACK) -> bool:
    gap = np.abs(np.where(data.mask, np.asarray(U) - data.values, 0.0))
    return bool(np.all(gap <= 0.5 * epsilon + slack))


def solve_constrained_subproblem(data: DataSet, W, epsilon: float, warm_start,
                                 inner_tol: float = 1e-8, inner_max: int = 10_000,
                                 cd_sweeps: int = 50):
    """Box-constrained weighted least squares from a feasible warm start.

    Runs cyclic projected coordinate descent: each point's best center with
    the others fixed is the weighted average of its neighbours clipped to its
    box, and all features move together since they do not interact. Sweeps
    stop once no entry moves by more than ``inner_tol``.

    Weakly coupled groups make plain sweeps crawl, so after ``cd_sweeps``
    sweeps the features that are still moving are finished by an exact
    active-set solve (see :func:`_active_set_feature`) and checked with one
    more sweep. Every step is a descent step, so the result never has a
    larger objective than ``warm_start``.
    """
    W = np.asarray(W, dtype=float)
    U = np.array(warm_start, dtype=float, copy=True)
    if U.shape != data.shape:
        raise ValueError(f"warm start shape {U.shape} != data shape {data.shape}")
    if not is_feasible(data, U, epsilon):
        raise ValueError("warm start violates the box constraints")
    lo, hi = _bounds(data, epsilon)
    np.clip(U, lo, hi, out=U)
    deg = W.sum(axis=1)
    active = np.flatnonzero(deg > 0)
    if active.size == 0:
        return U
    L = None
    sweeps = 0
    while sweeps < inner_max:
        moved = _cd_sweep(U, W, deg, active, lo, hi)
        sweeps += 1
        if moved.max() <= inner_tol:
            break
        if sweeps % cd_sweeps == 0:
            if L is None:
                L = _laplacian(W)
            for p in np.flatnonzero(moved > inner_tol):
                U[p] = _active_set_feature(L, U[p], lo[p], hi[p])
    else:
        log.debug("constrained step hit inner_max=%d sweeps", inner_max)
    return U


def _cd_sweep(U, W, deg, active, lo, hi):
    """One Gauss-Seidel pass over points; returns the largest move per feature."""
    S = U @ W
    moved = np.zeros(U.shape[0])
    for i in active:
        new = np.clip(S[:, i] / deg[i], lo[:, i], hi[:, i])
        delta = new - U[:, i]
        if np.any(delta):
            U[:, i] = new
            S += np.outer(delta, W[i])
            np.maximum(moved, np.abs(delta), out=moved)
    return moved


def _quad(L, u):
    return float(u @ (L @ u))


def _active_set_feature(L, u, lo, hi, max_iter=None):
    """Minimize ``u' L u`` over the box ``[lo, hi]`` by a primal active-set method.

    Starting from feasible ``u``: minimize over the free coordinates with the
    bound ones held fixed, move as far toward that minimizer as the box
    allows, pin any coordinate that hits a bound, and release bound
    coordinates whose multiplier has the wrong sign. Steps on a convex
    quadratic toward a subspace minimizer never increase it; if round-off
    makes one do so the step is discarded.
    """
    n = u.size
    u = u.copy()
    max_iter = max_iter or 4 * n + 10
    at_lo = np.isclose(u, lo, rtol=0.0, atol=1e-15) & np.isfinite(lo)
    at_hi = np.isclose(u, hi, rtol=0.0, atol=1e-15) & np.isfinite(hi)
    g = L @ u
    fixed = (at_lo & (g >= 0)) | (at_hi & (g <= 0))
    f = _quad(L, u)
    for _ in range(max_iter):
        free = np.flatnonzero(~fixed)
        if free.size == 0:
            break
        g = L @ u
        A = L[np.ix_(free, free)]
        try:
            with warnings.catch_warnings():
                # tiny weights make A ill-conditioned; the descent check below guards it
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                step = -scipy.linalg.solve(A, g[free], assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = -scipy.linalg.lstsq(A, g[free], check_finite=False)[0]
        d = np.zeros(n)
        d[free] = step
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hi = np.where(d > 0, (hi - u) / d, np.inf)
            t_lo = np.where(d < 0, (lo - u) / d, np.inf)
        t_block = np.minimum(t_hi, t_lo)
        t = min(1.0, float(t_block.min()))
        trial = np.clip(u + t * d, lo, hi)
        f_trial = _quad(L, trial)
        if f_trial > f + 1e-14 * max(1.0, abs(f)):
            break
        u, f = trial, f_trial
        if t < 1.0:
            fixed |= t_block <= t
            continue
        g = L @ u
        wrong = fixed & (((u <= lo) & (g < 0)) | ((u >= hi) & (g > 0)) | ((u > lo) & (u < hi)))
        if not wrong.any():
            break
        fixed &= ~wrong
    return u


def relaxed_objective(data: DataSet, U, cfg: SolverConfig, pen: Penalty = None) -> float:
    """Relaxed objective with ``phi`` summed over ordered pairs."""
    pen = pen or cfg.penalty
    U = np.asarray(U, dtype=float)
    d = pairwise_distances(U)
    fusion = float(penalty_value(pen, d[np.triu_indices(d.shape[0], k=1)]).sum()) * 2.0
    if cfg.mode == "constrained":
        if not is_feasible(data, U, cfg.epsilon):
            raise ValueError("centers violate the box constraints")
        return fusion
    r = np.where(data.mask, U - data.values, 0.0)
    return float(np.sum(r * r)) + cfg.lam * fusion


def extract_partition(U, tol: float) -> Partition:
    """Connected components of the graph linking centers within ``tol``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    U = np.asarray(U, dtype=float)
    N = U.shape[1]
    if N == 0:
        return Partition(())
    adj = pairwise_distances(U) <= tol
    _, comp = connected_components(adj, directed=False)
    part = Partition.from_labels(comp)
    centers = np.column_stack([U[:, list(g)].mean(axis=1) for g in part.groups])
    return Partition(part.groups, centers)


def default_cluster_tol(U0) -> float:
    d = pairwise_distances(U0)
    med = _median_defined(d) if d.shape[0] > 1 else 0.0
    return max(1e-4 * (med if math.isfinite(med) else 0.0), 1e-12)


def _safeguard(data, cfg, pen, U, U_new, ref):
    """Backtrack from ``U_new`` toward ``U`` until the objective is at most ``ref``.

    With exact weights each step is a majorize-minimize step, but the
    alpha-guarded l1/lp weights do not majorize their penalty near zero and
    saturated weights make the linear solve inexact. Points on the segment
    stay feasible since the boxes are convex. Returns ``(U, objective)``;
    ``U`` itself when no step length helps.
    """
    d = U_new - U
    t = 1.0
    for _ in range(MAX_BACKTRACK):
        t *= 0.5
        trial = U + t * d
        obj = relaxed_objective(data, trial, cfg, pen)
        if obj <= ref:
            return trial, obj
    return U, ref


def run_irls(data: DataSet, cfg: SolverConfig) -> SolveResult:
    """Alternate weight updates and least-squares steps until the centers settle.

    From the second step on, a step that would raise the objective is
    shortened by :func:`_safeguard`, so ``objective_trace`` never increases
    unless ``sigma_decay`` changes the penalty between steps.
    """
    if data.points < 2:
        raise DataError("need at least two points")
    pen = cfg.penalty
    U = initial_centers(data, "zero" if cfg.init == "zero" else "mean")
    W = init_weights(data, pen, cfg.init)
    tol = cfg.cluster_tol if cfg.cluster_tol is not None else default_cluster_tol(U)
    trace = []
    converged = False
    ref = None
    n = 0
    for n in range(1, cfg.max_outer + 1):
        if cfg.mode == "constrained":
            U_new = solve_constrained_subproblem(data, W, cfg.epsilon, U,
                                                 cfg.inner_tol, cfg.inner_max)
        else:
            U_new = solve_unconstrained_subproblem(data, W, cfg.lam, cfg.inner_tol)
        if not np.all(np.isfinite(U_new)):
            raise NumericalError(f"non-finite centers at outer iteration {n}")
        obj = relaxed_objective(data, U_new, cfg, pen)
        if not math.isfinite(obj):
            raise NumericalError(f"non-finite objective at outer iteration {n}")
        if ref is not None and obj > ref:
            log.debug("step %d raised the objective by %g; backtracking", n, obj - ref)
            U_new, obj = _safeguard(data, cfg, pen, U, U_new, ref)
        trace.append(obj)
        norm = np.linalg.norm(U)
        change = np.linalg.norm(U_new - U) / (norm if norm > 0 else 1.0)
        U = U_new
        ref = obj
        if change <= cfg.outer_tol:
            converged = True
            break
        if cfg.sigma_decay is not None and pen.kind == "h1":
            pen = pen.with_sigma(max(pen.sigma * cfg.sigma_decay, cfg.sigma_floor))
            ref = relaxed_objective(data, U, cfg, pen)
        W = update_weights(U, pen)
    return SolveResult(centers=U, partition=extract_partition(U, tol),
                       objective_trace=trace, iterations=n, converged=converged,
                       cluster_tol=tol, weights=W)
