"""Fusion penalties that approximate the l0 indicator, and their IRLS weights.

Each penalty ``phi`` is a function of a pairwise distance ``x >= 0``. Since
``phi(sqrt(s))`` is concave in ``s = x**2``, it is majorized at ``x0`` by

    phi(x) <= w(x0) * x**2 + (phi(x0) - w(x0) * x0**2),

with ``w(x) = phi'(x) / (2 x)``. Replacing every penalty term by this
quadratic gives the weighted least-squares step of the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA = 1e-10


@dataclass(frozen=True)
class Penalty:
    """One of ``l1``, ``lp`` or ``h1``.

    ``p`` and ``alpha`` are used by ``lp`` (``alpha`` also guards ``l1`` at
    zero); ``sigma`` is the width of ``h1``.
    """

    kind: str = "h1"
    p: float = 1.0
    alpha: float = DEFAULT_ALPHA
    sigma: float = 0.5

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("l1", "lp", "h1"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if kind == "lp" and not 0.0 < self.p <= 1.0:
            raise ValueError(f"lp needs 0 < p <= 1, got p={self.p}")
        if kind in ("lp", "l1") and not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if kind == "h1" and not self.sigma > 0.0:
            raise ValueError(f"h1 needs sigma > 0, got {self.sigma}")

    @classmethod
    def l1(cls, alpha=DEFAULT_ALPHA):
        return cls("l1", alpha=alpha)

    @classmethod
    def lp(cls, p, alpha=DEFAULT_ALPHA):
        return cls("lp", p=p, alpha=alpha)

    @classmethod
    def h1(cls, sigma=0.5):
        return cls("h1", sigma=sigma)

    def with_sigma(self, sigma):
        return Penalty(self.kind, self.p, self.alpha, sigma)

    def value(self, x):
        return penalty_value(self, x)

    def weight(self, x):
        return penalty_weight(self, x)

    def __str__(self):
        if self.kind == "h1":
            return f"h1(sigma={self.sigma:g})"
        if self.kind == "lp":
            return f"lp(p={self.p:g}, alpha={self.alpha:g})"
        return "l1"


def _check_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("penalty arguments must be non-negative")
    return x


def _out(r, x):
    return float(r) if np.ndim(x) == 0 else r


def penalty_value(pen: Penalty, x):
    """phi(x) for scalar or array ``x >= 0``."""
    xa = _check_nonneg(x)
    if pen.kind == "l1":
        r = xa.copy()
    elif pen.kind == "lp":
        r = np.power(xa, pen.p)
    else:
        r = -np.expm1(-(xa * xa) / (2.0 * pen.sigma ** 2))
    return _out(r, x)


def penalty_weight(pen: Penalty, x):
    """IRLS weight phi'(x) / (2x), finite at x = 0."""
    xa = _check_nonneg(x)
    if pen.kind == "l1":
        r = 1.0 / (2.0 * xa + pen.alpha)
    elif pen.kind == "lp":
        r = 1.0 / ((2.0 / pen.p) * np.power(xa, 2.0 - pen.p) + pen.alpha)
    else:
        s2 = pen.sigma ** 2
        r = np.exp(-(xa * xa) / (2.0 * s2)) / (2.0 * s2)
    return _out(r, x)


def penalty_derivative(pen: Penalty, x):
    """phi'(x) in closed form (x > 0 for l1/lp)."""
    xa = _check_nonneg(x)
    if pen.kind == "l1":
        r = np.ones_like(xa)
    elif pen.kind == "lp":
        r = pen.p * np.power(xa, pen.p - 1.0)
    else:
        s2 = pen.sigma ** 2
        r = xa / s2 * np.exp(-(xa * xa) / (2.0 * s2))
    return _out(r, x)


def saturation_point(pen: Penalty, level=0.99) -> float:
    """Smallest x with h1 value >= ``level``."""
    if pen.kind != "h1":
        raise ValueError("only h1 saturates")
    return pen.sigma * math.sqrt(-2.0 * math.log1p(-level))
