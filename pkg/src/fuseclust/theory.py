"""Recovery-guarantee quantities for l0 fusion clustering.

All combinatorial sums are accumulated in log space; individual terms of
the failure bound underflow double precision well before M = 50.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

from scipy.special import logsumexp

from .exact import CapacityError

MAX_COMPOSITIONS = 10 ** 8
KAPPA_PRIME_MAX = math.sqrt(6.0 / 5.0)


def _check_prob(name, v, allow_zero=False):
    lo_ok = v >= 0.0 if allow_zero else v > 0.0
    if not (lo_ok and v <= 1.0) or math.isnan(v):
        raise ValueError(f"{name} must be in {'[' if allow_zero else '('}0, 1], got {v}")


def gamma0(p0: float, P: int) -> float:
    """Bound on the chance two points share fewer than p0^2 P / 2 observed features."""
    _check_prob("p0", p0)
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    return math.exp(-(p0 * p0 * P / 2.0) * (1.0 - math.log(2.0)))


def delta0(p0: float, P: int, kappa: float, mu0: float) -> float:
    _check_prob("p0", p0)
    if not 0.0 <= kappa < 1.0:
        raise ValueError(f"kappa must satisfy 0 <= kappa < 1 for this bound, got {kappa}")
    if not 1.0 <= mu0 <= P:
        raise ValueError(f"mu0 must lie in [1, P={P}], got {mu0}")
    return math.exp(-p0 * p0 * P * (1.0 - kappa * kappa) ** 2 / (mu0 * mu0))


def beta0(g0: float, d0: float) -> float:
    """Chance that two points from different clusters can share a center."""
    _check_prob("gamma0", g0, allow_zero=True)
    _check_prob("delta0", d0, allow_zero=True)
    return 1.0 - (1.0 - d0) * (1.0 - g0)


def beta1(kappa_prime: float, P: int) -> float:
    """Same-center probability for uniformly distributed clusters without missing data."""
    if not 0.0 < kappa_prime < KAPPA_PRIME_MAX:
        raise ValueError(
            f"kappa_prime must lie in (0, sqrt(6/5)={KAPPA_PRIME_MAX:.6f}), got {kappa_prime}")
    k2 = kappa_prime * kappa_prime
    return math.exp(-P * (1.0 - 5.0 * k2 / 6.0) ** 2 / (8.0 * k2))


def log_comb(n: int, k: int) -> float:
    return math.log(math.comb(n, k))


def compositions(M: int, K: int) -> Iterator[tuple]:
    """Ordered K-tuples of non-negative integers summing to M."""
    if K == 1:
        yield (M,)
        return
    for first in range(M, -1, -1):
        for rest in compositions(M - first, K - 1):
            yield (first,) + rest


def count_mixed_compositions(M: int, K: int) -> int:
    """Compositions with at least two positive parts."""
    return math.comb(M + K - 1, K - 1) - K


def _log_eta(b: float, M: int, K: int) -> float:
    if M < 2 or K < 2:
        raise ValueError(f"need M >= 2 and K >= 2, got M={M}, K={K}")
    _check_prob("beta", b, allow_zero=True)
    n = count_mixed_compositions(M, K)
    if n > MAX_COMPOSITIONS:
        raise CapacityError(
            f"{n} compositions exceed the enumeration limit; use eta0_approx instead")
    if b == 0.0:
        return -math.inf
    log_b = math.log(b)
    log_binom = [log_comb(M, m) for m in range(M + 1)]
    terms = []
    for comp in compositions(M, K):
        if sum(1 for m in comp if m) < 2:
            continue
        half_pairs = (M * M - sum(m * m for m in comp)) // 2
        terms.append(half_pairs * log_b + sum(log_binom[m] for m in comp))
    return float(logsumexp(terms))


def log_eta_two_clusters(b: float, M: int) -> float:
    """log of sum_{i=1}^{M-1} b^{i(M-i)} C(M, i)^2, the K = 2 closed sum."""
    if b == 0.0:
        return -math.inf
    log_b = math.log(b)
    return float(logsumexp([i * (M - i) * log_b + 2.0 * log_comb(M, i)
                            for i in range(1, M)]))


def eta0(b0: float, M: int, K: int):
    """Failure-probability bound; returns ``(value, log_value)``.

    For K = 2 the enumeration is cross-checked against the closed sum.
    """
    lg = _log_eta(b0, M, K)
    if K == 2:
        closed = log_eta_two_clusters(b0, M)
        if not (lg == closed or abs(lg - closed) <= 1e-9 * max(1.0, abs(lg))):
            raise ArithmeticError(f"K=2 closed form {closed} disagrees with enumeration {lg}")
    return math.exp(lg), lg


def eta1(b1: float, M: int, K: int):
    """The same composition sum as ``eta0`` with beta1 in place of beta0."""
    return eta0(b1, M, K)


def approx_condition(b0: float, M: int) -> Optional[bool]:
    """Whether log b0 <= 1/(M-1) + 2/(M-2) log(1/(M-1)); None when M < 3."""
    if M < 3:
        return None
    if b0 == 0.0:
        return True
    rhs = 1.0 / (M - 1) + (2.0 / (M - 2)) * math.log(1.0 / (M - 1))
    return math.log(b0) <= rhs


def eta0_approx(b0: float, M: int):
    """M^3 b0^(M-1) and whether the condition for it to bound eta0 holds."""
    _check_prob("beta0", b0, allow_zero=True)
    return M ** 3 * b0 ** (M - 1), approx_condition(b0, M)


@dataclass(frozen=True)
class BoundInputs:
    p0: float
    P: int
    kappa: float
    mu0: float
    M: int
    K: int
    kappa_prime: Optional[float] = None


@dataclass(frozen=True)
class BoundReport:
    gamma0: float
    delta0: float
    beta0: float
    eta0: float
    eta0_log: float
    eta0_approx: float
    approx_condition_holds: Optional[bool]
    beta1: Optional[float] = None
    eta1: Optional[float] = None
    eta1_log: Optional[float] = None

    def as_dict(self):
        return asdict(self)


def bound_report(inp: BoundInputs) -> BoundReport:
    g = gamma0(inp.p0, inp.P)
    d = delta0(inp.p0, inp.P, inp.kappa, inp.mu0)
    b = beta0(g, d)
    e, elog = eta0(b, inp.M, inp.K)
    ea, cond = eta0_approx(b, inp.M)
    b1 = e1 = e1log = None
    if inp.kappa_prime is not None:
        b1 = beta1(inp.kappa_prime, inp.P)
        e1, e1log = eta1(b1, inp.M, inp.K)
    return BoundReport(g, d, b, e, elog, ea, cond, b1, e1, e1log)


def vertex_catalog(M: int, K: int):
    """Candidate cluster-size tuples at the vertices of the relaxed size problem.

    Zeroing ``j`` of the ``K`` pure clusters (size ``M``) forces their
    ``j*M`` points into mixed clusters of size at most ``M - 1``: as many
    full ``M - 1`` blocks as fit plus one remainder block. For ``j < M`` this
    is ``j`` blocks of ``M - 1`` and a remainder of ``j``.

    Returns ``(catalog, best)`` where ``catalog`` is a list of
    ``(sizes, sum_of_squares)`` and ``best`` the tuple maximizing it.
    """
    if M < 2 or K < 1:
        raise ValueError(f"need M >= 2 and K >= 1, got M={M}, K={K}")
    if M * K > 10 ** 4:
        raise CapacityError("M*K too large for the vertex catalog")
    catalog = []
    for j in range(K + 1):
        moved = j * M
        full, rem = divmod(moved, M - 1)
        sizes = (M,) * (K - j) + ((rem,) if rem else ()) + (M - 1,) * full
        catalog.append((sizes, sum(s * s for s in sizes)))
    best = max(catalog, key=lambda t: t[1])[0]
    return catalog, best


def max_size_objective(M: int, K: int, extra: int) -> int:
    """Exhaustive max of sum(M_i^2) over integer size vectors.

    ``K`` pure sizes in [0, M], ``extra`` mixed sizes in [0, M - 1], total
    ``K*M``. Reference for checking ``vertex_catalog`` on small cases.
    """
    bounds = [M] * K + [M - 1] * extra
    best = -1

    def rec(i, left, acc):
        nonlocal best
        if i == len(bounds):
            if left == 0:
                best = max(best, acc)
            return
        cap = sum(bounds[i:])
        if cap < left:
            return
        for s in range(min(bounds[i], left) + 1):
            rec(i + 1, left - s, acc + s * s)

    rec(0, K * M, 0)
    return best


def sweep(grid: dict, M: int, K: int, P: int, kappa_prime=None):
    """Evaluate ``bound_report`` over a grid of p0, kappa and mu0 values.

    ``grid`` maps "p0", "kappa", "mu0" (and optionally "M", "P") to lists.
    Returns a list of dicts in row-major grid order.
    """
    keys = ("p0", "kappa", "mu0", "M", "P")
    axes = [list(grid.get(k, [None])) for k in keys]
    rows = []
    for p0, kappa, mu0, m, pp in itertools.product(*axes):
        m = int(m) if m is not None else M
        pp = int(pp) if pp is not None else P
        rep = bound_report(BoundInputs(p0, pp, kappa, mu0, m, K, kappa_prime))
        row = {"p0": p0, "P": pp, "kappa": kappa, "mu0": mu0, "M": m, "K": K}
        row.update(rep.as_dict())
        rows.append(row)
    return rows


def success_lower_bound(p0, P, kappa, mu0, M, K=2):
    """1 - eta0, clipped at 0; the curve plotted against p0 in bound studies."""
    rep = bound_report(BoundInputs(p0, P, kappa, mu0, M, K))
    return max(0.0, 1.0 - rep.eta0)
