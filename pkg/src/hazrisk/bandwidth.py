"""Bandwidth rules and asymptotically optimal bandwidth evaluation.

The optimal rate for a degree-p local fit paired with a second-step contrast
is n^(-1/(2p+3)); the constant multiplies a ratio of plug-in integrals:

    h_opt = C0p(K) * (variance_integral / curvature_integral)^(1/(2p+3))
            * n^(-1/(2p+3))

``default_c0p`` derives the kernel constant by minimizing the leading
squared-bias-plus-variance expansion. For even p and a symmetric kernel the
(p+1)-st kernel moment vanishes, the leading bias term is zero, and no finite
constant exists; callers must then supply one explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import KernelSpec, kernel_moment, kernel_square_integral

__all__ = [
    "VariableBandwidthRule",
    "BandwidthPlan",
    "bandwidth_at",
    "default_c0p",
    "h_opt_relative_risk",
    "h_opt_group_diff",
    "curvature_integral_pairwise",
    "curvature_integral_group",
    "parse_h_rule",
]


@dataclass(frozen=True)
class VariableBandwidthRule:
    """A base bandwidth with piecewise multipliers on closed intervals."""

    base: float
    pieces: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not (self.base > 0):
            raise ValueError("base bandwidth must be positive")
        norm = []
        for piece in self.pieces:
            if len(piece) != 3:
                raise ValueError("each piece must be (lo, hi, multiplier)")
            lo, hi, mult = (float(v) for v in piece)
            if not (lo <= hi):
                raise ValueError(f"piece interval [{lo}, {hi}] is empty")
            if not (mult > 0):
                raise ValueError("piece multiplier must be positive")
            norm.append((lo, hi, mult))
        norm.sort()
        for (_, hi_a, _), (lo_b, _, _) in zip(norm, norm[1:]):
            if lo_b <= hi_a:
                raise ValueError("piece intervals must be disjoint")
        object.__setattr__(self, "pieces", tuple(norm))


def bandwidth_at(rule: VariableBandwidthRule, x: float) -> float:
    """Bandwidth at x: base times the multiplier of the covering piece."""
    for lo, hi, mult in rule.pieces:
        if lo <= x <= hi:
            return rule.base * mult
    return rule.base


@dataclass(frozen=True)
class BandwidthPlan:
    """Inputs for optimal-bandwidth evaluation at polynomial degree p."""

    p: int
    kernel: KernelSpec
    c0p: float
    weight: Callable | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not (self.c0p > 0):
            raise ValueError("c0p must be positive")


def default_c0p(p: int, kernel: KernelSpec) -> float:
    """Kernel constant from minimizing the leading MSE expansion.

    C0p = [ ((p+1)!)^2 * int K^2 / (2(p+1) * (int u^(p+1) K)^2) ]^(1/(2p+3)).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    mu = kernel_moment(kernel, p + 1)
    if mu == 0.0:
        raise ValueError(
            f"kernel moment of order {p + 1} vanishes for a symmetric kernel; "
            "the leading bias is zero and no finite default constant exists, "
            "supply c0p explicitly"
        )
    r = kernel_square_integral(kernel)
    fact = math.factorial(p + 1)
    return (fact * fact * r / (2.0 * (p + 1) * mu * mu)) ** (1.0 / (2 * p + 3))


def _h_opt(plan: BandwidthPlan, variance_integral: float,
           curvature_integral: float, n: int) -> float:
    if not (variance_integral > 0):
        raise ValueError("variance integral must be positive")
    if not (curvature_integral > 0):
        raise ValueError(
            "curvature integral must be positive; a flat contrast has no "
            "finite optimal bandwidth"
        )
    if n < 1:
        raise ValueError("n must be at least 1")
    expo = 1.0 / (2 * plan.p + 3)
    return plan.c0p * (variance_integral / curvature_integral) ** expo * n ** (-expo)


def h_opt_relative_risk(plan: BandwidthPlan, variance_integral: float,
                        curvature_integral: float, n: int) -> float:
    """Optimal bandwidth for the pairwise relative risk contrast.

    ``curvature_integral`` is the double integral of the squared difference of
    (p+1)-st derivatives over weighted anchor pairs; ``variance_integral`` the
    matching double integral of the asymptotic variance factor.
    """
    return _h_opt(plan, variance_integral, curvature_integral, n)


def h_opt_group_diff(plan: BandwidthPlan, variance_integral: float,
                     curvature_integral: float, n: int) -> float:
    """Optimal bandwidth for the two-group difference; single integrals."""
    return _h_opt(plan, variance_integral, curvature_integral, n)


def _weights_on(grid: np.ndarray, weight: Callable | None) -> np.ndarray:
    if weight is None:
        span = float(grid[-1] - grid[0])
        return np.full(grid.shape, 1.0 / span)
    w = np.asarray(weight(grid), dtype=float)
    if w.shape != grid.shape or np.any(w < 0):
        raise ValueError("weight must map the grid to nonnegative values")
    return w


def curvature_integral_pairwise(grid, values, weight=None) -> float:
    """Double integral of (g(x2) - g(x1))^2 w(x1) w(x2) by trapezoid rule.

    ``values`` is a pilot estimate of the (p+1)-st derivative g on ``grid``.
    Expanding the square reduces the double integral to single ones.
    """
    grid = np.asarray(grid, dtype=float)
    g = np.asarray(values, dtype=float)
    w = _weights_on(grid, weight)
    a = np.trapezoid(g * g * w, grid)
    b = np.trapezoid(g * w, grid)
    c = np.trapezoid(w, grid)
    return float(2.0 * (a * c - b * b))


def curvature_integral_group(grid, values1, values2, weight=None) -> float:
    """Single integral of (g2 - g1)^2 w over the grid by trapezoid rule."""
    grid = np.asarray(grid, dtype=float)
    diff = np.asarray(values2, dtype=float) - np.asarray(values1, dtype=float)
    w = _weights_on(grid, weight)
    return float(np.trapezoid(diff * diff * w, grid))


def parse_h_rule(text: str) -> VariableBandwidthRule:
    """Parse ``const:<h>`` or ``piecewise:<base>[,<lo>:<hi>:<mult>...]``."""
    text = text.strip()
    kind, sep, rest = text.partition(":")
    if not sep:
        raise ValueError(f"bad bandwidth rule {text!r}: expected const:<h> or piecewise:<spec>")
    if kind == "const":
        try:
            return VariableBandwidthRule(base=float(rest))
        except ValueError as exc:
            raise ValueError(f"bad bandwidth rule {text!r}: {exc}") from exc
    if kind != "piecewise":
        raise ValueError(f"bad bandwidth rule kind {kind!r}")
    parts = rest.split(",")
    try:
        base = float(parts[0])
        pieces = []
        for part in parts[1:]:
            lo, hi, mult = part.split(":")
            pieces.append((float(lo), float(hi), float(mult)))
        return VariableBandwidthRule(base=base, pieces=tuple(pieces))
    except ValueError as exc:
        raise ValueError(f"bad bandwidth rule {text!r}: {exc}") from exc
