"""Exact l0 fusion clustering for tiny instances.

The l0 problem asks for centers ``u_i`` with ``|x_i(p) - u_i(p)| <= eps/2``
on every observed entry, minimizing the number of ordered pairs with
``u_i != u_j``. Points can share a center iff, feature by feature, the
observed values of the group lie in an interval of length ``eps`` (take
the midpoint). So the problem is a search over set partitions whose groups
all pass that test, minimizing ``N**2 - sum(size**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .model import DataSet

MAX_EXACT_POINTS = 13
_FEAS_SLACK = 1e-12


class CapacityError(RuntimeError):
    """The requested computation is too large to run exactly."""


@dataclass(frozen=True)
class Partition:
    """Disjoint groups of point indices covering ``range(N)``.

    Groups are stored sorted, and ordered by their smallest member, so two
    partitions compare equal iff they are the same set of sets.
    """

    groups: tuple
    centers: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        groups = [tuple(sorted(int(i) for i in g)) for g in self.groups]
        if any(len(g) == 0 for g in groups):
            raise ValueError("partition groups must be non-empty")
        order = sorted(range(len(groups)), key=lambda k: groups[k][0])
        flat = [i for g in groups for i in g]
        if len(flat) != len(set(flat)):
            raise ValueError("partition groups overlap")
        if flat and sorted(flat) != list(range(len(flat))):
            raise ValueError("partition must cover 0..N-1")
        object.__setattr__(self, "groups", tuple(groups[k] for k in order))
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=float)
            object.__setattr__(self, "centers", c[:, order])

    @classmethod
    def from_labels(cls, labels, centers=None):
        labels = np.asarray(labels)
        groups = {}
        for i, lab in enumerate(labels.tolist()):
            groups.setdefault(lab, []).append(i)
        return cls(tuple(groups.values()), centers)

    @property
    def sizes(self):
        return [len(g) for g in self.groups]

    @property
    def n_points(self):
        return sum(self.sizes)

    def __len__(self):
        return len(self.groups)

    def labels(self) -> np.ndarray:
        """Group id per point, contiguous from 1 in order of first occurrence."""
        out = np.empty(self.n_points, dtype=int)
        for k, g in enumerate(self.groups, start=1):
            out[list(g)] = k
        return out

    def rgs(self) -> tuple:
        return tuple((self.labels() - 1).tolist())


def group_feasible(data: DataSet, indices: Sequence[int], epsilon: float) -> bool:
    """True iff the given points can share one center within ``epsilon / 2``."""
    idx = list(indices)
    if not idx:
        raise ValueError("group must be non-empty")
    if len(idx) == 1:
        return True
    vals = data.values[:, idx]
    seen = data.mask[:, idx].sum(axis=1)
    rows = seen >= 2
    if not rows.any():
        return True
    v = vals[rows]
    spread = np.nanmax(v, axis=1) - np.nanmin(v, axis=1)
    return bool(np.all(spread <= epsilon + _FEAS_SLACK * max(1.0, abs(epsilon))))


def compatibility_matrix(data: DataSet, epsilon: float) -> np.ndarray:
    """Pairwise ``group_feasible`` for every pair of points.

    One-dimensional intervals that pairwise intersect have a common point,
    so a group is feasible iff every pair in it is.
    """
    X = data.values
    M = data.mask
    N = data.points
    tol = epsilon + _FEAS_SLACK * max(1.0, abs(epsilon))
    comp = np.ones((N, N), dtype=bool)
    for i in range(N):
        both = M[:, i:i + 1] & M
        gap = np.where(both, np.abs(X[:, i:i + 1] - np.where(M, X, 0.0)), 0.0)
        comp[i] = np.all(gap <= tol, axis=0)
    return comp


def l0_cost(part: Partition, N: int) -> int:
    """Number of ordered pairs split across groups: N**2 - sum(size**2)."""
    sizes = part.sizes
    if sum(sizes) != N:
        raise ValueError(f"partition covers {sum(sizes)} points, expected {N}")
    return N * N - sum(s * s for s in sizes)


def restricted_growth_strings(n: int) -> Iterator[tuple]:
    """Every set partition of ``range(n)`` once, as a restricted-growth string.

    Yields in lexicographic order: ``a[0] = 0`` and
    ``a[i] <= 1 + max(a[:i])``.
    """
    if n == 0:
        yield ()
        return
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[:i])
    while True:
        yield tuple(a)
        j = n - 1
        while j > 0 and a[j] == b[j]:
            j -= 1
        if j == 0:
            return
        a[j] += 1
        m = b[j] + (a[j] == b[j])
        for k in range(j + 1, n):
            a[k] = 0
            b[k] = m


def solve_l0_exact(data: DataSet, epsilon: float) -> Partition:
    """Globally optimal l0 partition by depth-first search over set partitions.

    Ties are broken by fewer groups, then by the lexicographically smallest
    restricted-growth string. Branches are cut only when no completion can
    beat or tie the incumbent, so the answer equals that of exhaustive
    enumeration.
    """
    N = data.points
    if N > MAX_EXACT_POINTS:
        raise CapacityError(
            f"exact l0 search is limited to {MAX_EXACT_POINTS} points, got {N}")
    if N == 0:
        return Partition(())
    comp = compatibility_matrix(data, epsilon)
    compat_bits = [sum(1 << j for j in range(N) if comp[i, j]) for i in range(N)]

    best_sq = -1
    best_groups = N + 1
    best_rgs = None
    labels = [0] * N
    members = []  # bitmask per group
    sizes = []

    def search(i, sum_sq):
        nonlocal best_sq, best_groups, best_rgs
        if i == N:
            g = len(sizes)
            if sum_sq > best_sq or (sum_sq == best_sq and g < best_groups):
                best_sq, best_groups, best_rgs = sum_sq, g, tuple(labels)
            return
        r = N - i
        smax = max(sizes) if sizes else 0
        bound = sum_sq - smax * smax + (smax + r) ** 2
        if bound < best_sq or (bound == best_sq and max(len(sizes), 1) >= best_groups):
            return
        bits = compat_bits[i]
        for g in range(len(sizes)):
            if members[g] & ~bits:
                continue
            s = sizes[g]
            labels[i] = g
            members[g] |= 1 << i
            sizes[g] = s + 1
            search(i + 1, sum_sq + 2 * s + 1)
            sizes[g] = s
            members[g] &= ~(1 << i)
        labels[i] = len(sizes)
        members.append(1 << i)
        sizes.append(1)
        search(i + 1, sum_sq + 1)
        sizes.pop()
        members.pop()

    search(0, 0)
    part = Partition.from_labels(best_rgs)
    centers = np.column_stack([_midpoint_center(data, g) for g in part.groups])
    return Partition(part.groups, centers)


def _midpoint_center(data: DataSet, group) -> np.ndarray:
    """Per-feature midpoint of the observed range; 0 where nobody is observed."""
    v = data.values[:, list(group)]
    seen = data.mask[:, list(group)].any(axis=1)
    out = np.zeros(data.features)
    if seen.any():
        out[seen] = 0.5 * (np.nanmax(v[seen], axis=1) + np.nanmin(v[seen], axis=1))
    return out


def brute_force_l0(data: DataSet, epsilon: float) -> Partition:
    """Reference solver: plain enumeration of every set partition.

    Exponential (Bell numbers); meant for cross-checking at N <= 9.
    """
    N = data.points
    best = None
    for a in restricted_growth_strings(N):
        part = Partition.from_labels(a)
        if not all(group_feasible(data, g, epsilon) for g in part.groups):
            continue
        key = (l0_cost(part, N), len(part), a)
        if best is None or key < best[0]:
            best = (key, part)
    return best[1]
