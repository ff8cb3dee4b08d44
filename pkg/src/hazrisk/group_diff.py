"""Nonparametric group differences in log relative risk at a covariate value.

For two groups sharing a baseline hazard, the difference
rho(x) = psi2(x) - psi1(x) is estimated by a kernel-localized partial
likelihood: first-step polynomial fits run separately on each group's data,
then a scalar concave likelihood (the pair machinery with group-masked kernel
weights) is maximized in rho. Confidence intervals subtract a kernel-smoothed
bias estimate before adding normal critical values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InputError
from .kernels import (
    EPANECHNIKOV,
    KernelSpec,
    kernel_moment,
    kernel_square_integral,
    kernel_weight,
)
from .local_fit import LocalPolyFit, fit_local
from .relative_risk import (
    STANDARD_GRID_SIZE,
    EstimatorConfig,
    PairLikelihood,
    PairLikTerms,
    _poly_part,
    _z_quantile,
)
from .survival import SurvivalDataset, dataset_from_arrays

__all__ = [
    "GroupDiffEstimate",
    "subset_by_group",
    "estimate_rho",
    "rho_bias",
    "rho_variance",
    "smooth_bias",
    "estimate_group_difference",
    "group_difference_curve",
    "windowed_censoring",
]


@dataclass
class GroupDiffEstimate:
    """Estimated group contrast at x with bias-corrected interval."""

    x: float
    z1: int
    z2: int
    rho_hat: float
    bias_hat: float
    bias_smoothed: float
    se_hat: float
    ci_level: float
    ci: tuple[float, float]
    counts: tuple[int, int]
    converged: bool
    error: str | None = None


def _require_groups(data: SurvivalDataset) -> np.ndarray:
    if data.group is None:
        raise InputError("dataset has no group labels")
    return data.group


def subset_by_group(data: SurvivalDataset, z: int) -> SurvivalDataset:
    """The one-group sub-dataset; risk sets are rebuilt within the group."""
    g = _require_groups(data)
    mask = g == z
    if not np.any(mask):
        raise InputError(f"group {z} is absent from the dataset")
    return dataset_from_arrays(data.covariate[mask], data.time[mask],
                               data.status[mask], g[mask])


def _group_terms(data: SurvivalDataset, x: float, z1: int, z2: int,
                 fit1: LocalPolyFit, fit2: LocalPolyFit, h: float,
                 kernel: KernelSpec, p: int | None) -> PairLikTerms:
    g = _require_groups(data)
    for fit, z in ((fit1, z1), (fit2, z2)):
        if not fit.converged:
            raise EstimationError(
                f"first-step fit for group {z} at x={x:g} did not converge")
    deg = p if p is not None else min(fit1.degree, fit2.degree)
    if deg > fit1.degree or deg > fit2.degree:
        raise ValueError("p exceeds the degree of the supplied fits")
    dx = data.covariate - x
    k = kernel_weight(kernel, dx, h)
    return PairLikTerms(
        eta=_poly_part(fit1.beta_star, dx, deg),
        zeta=_poly_part(fit2.beta_star, dx, deg),
        k1=k * (g == z1),
        k2=k * (g == z2),
    )


def estimate_rho(data: SurvivalDataset, x: float, z1: int, z2: int,
                 fit1: LocalPolyFit, fit2: LocalPolyFit, h: float,
                 kernel: KernelSpec = EPANECHNIKOV, *,
                 p: int | None = None) -> float:
    """Maximize the localized two-group likelihood for psi2(x) - psi1(x)."""
    terms = _group_terms(data, x, z1, z2, fit1, fit2, h, kernel, p)
    return PairLikelihood(data, terms).solve()


def rho_bias(fit1_hi: LocalPolyFit, fit2_hi: LocalPolyFit, p: int, h: float,
             kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Leading bias h^(p+1) (beta2_{p+1} - beta1_{p+1}) int u^(p+1) K."""
    if fit1_hi.degree < p + 1 or fit2_hi.degree < p + 1:
        raise ValueError(
            "bias estimation needs first-step fits of degree at least p + 1")
    diff = float(fit2_hi.beta_star[p] - fit1_hi.beta_star[p])
    return h ** (p + 1) * diff * kernel_moment(kernel, p + 1)


def rho_variance(data: SurvivalDataset, x: float, z1: int, z2: int, h: float,
                 kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Plug-in variance: int K^2 times summed inverse weighted failure mass."""
    g = _require_groups(data)
    kd = kernel_weight(kernel, data.covariate - x, h) * data.status
    out = 0.0
    for z in (z1, z2):
        m = float(np.sum(kd[g == z])) / data.n
        if m <= 0.0:
            raise EstimationError(
                f"group {z} has no failures with positive kernel weight at "
                f"x={x:g}")
        out += 1.0 / m
    return kernel_square_integral(kernel) * out


def smooth_bias(grid, bias_values, x: float, h: float,
                kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Kernel-weighted average of a bias curve around x.

    Normalizes by the realized kernel mass on the grid so the average of a
    constant curve is that constant. Grid points with nonfinite bias are
    skipped.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(bias_values, dtype=float)
    if grid.shape != vals.shape or grid.ndim != 1:
        raise ValueError("grid and bias_values must be aligned 1-d arrays")
    w = kernel_weight(kernel, grid - x, h)
    mask = (w > 0.0) & np.isfinite(vals)
    total = float(np.sum(w[mask]))
    if total <= 0.0:
        raise EstimationError(
            f"no usable bias grid points inside the window at x={x:g}")
    return float(np.sum(w[mask] * vals[mask]) / total)


def windowed_censoring(data: SurvivalDataset, x: float, h: float,
                       kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Fraction of censored subjects among those with positive weight at x."""
    k = kernel_weight(kernel, data.covariate - x, h)
    inside = k > 0.0
    total = int(np.count_nonzero(inside))
    if total == 0:
        return float("nan")
    return float(np.count_nonzero(inside & (data.status == 0)) / total)


def _windowed_failures(data: SurvivalDataset, x: float, h: float,
                       kernel: KernelSpec, z1: int, z2: int) -> tuple[int, int]:
    g = _require_groups(data)
    k = kernel_weight(kernel, data.covariate - x, h)
    infail = (k > 0.0) & (data.status == 1)
    return (int(np.count_nonzero(infail & (g == z1))),
            int(np.count_nonzero(infail & (g == z2))))


def _bias_curve(sub1: SurvivalDataset, sub2: SurvivalDataset, grid: np.ndarray,
                config: EstimatorConfig) -> np.ndarray:
    """b(y) on the grid from per-group fits; failed points become nan."""
    out = np.full(grid.shape, np.nan)
    for i, y in enumerate(grid):
        try:
            f1 = fit_local(sub1, y, config.p1, config.h1, config.kernel)
            f2 = fit_local(sub2, y, config.p1, config.h1, config.kernel)
        except EstimationError:
            continue
        out[i] = rho_bias(f1, f2, config.p, config.step_h, config.kernel)
    return out


def estimate_group_difference(data: SurvivalDataset, x: float, z1: int,
                              z2: int, config: EstimatorConfig, *,
                              smooth: bool = True,
                              bias_grid=None) -> GroupDiffEstimate:
    """Full group contrast at x: rho, bias, smoothed bias, interval."""
    h = config.step_h
    sub1 = subset_by_group(data, z1)
    sub2 = subset_by_group(data, z2)
    fit1 = fit_local(sub1, x, config.p1, config.h1, config.kernel)
    fit2 = fit_local(sub2, x, config.p1, config.h1, config.kernel)
    rho = estimate_rho(data, x, z1, z2, fit1, fit2, h, config.kernel,
                       p=config.p)
    bias_warning = config.p1 == config.p
    bias = 0.0 if bias_warning else rho_bias(fit1, fit2, config.p, h,
                                             config.kernel)

    if smooth and not bias_warning:
        if bias_grid is None:
            lo_x, hi_x = data.covariate_range
            full = np.linspace(lo_x, hi_x, STANDARD_GRID_SIZE)
            bias_grid = full[(full >= x - h) & (full <= x + h)]
        bias_grid = np.asarray(bias_grid, dtype=float)
        if bias_grid.size == 0:
            raise EstimationError(
                f"empty bias smoothing grid inside the window at x={x:g}")
        curve = _bias_curve(sub1, sub2, bias_grid, config)
        bias_smoothed = smooth_bias(bias_grid, curve, x, h, config.kernel)
    else:
        bias_smoothed = bias

    var = rho_variance(data, x, z1, z2, h, config.kernel)
    se = float(np.sqrt(var / (data.n * h)))
    z = _z_quantile(config.ci_level)
    center = rho - bias_smoothed
    counts = _windowed_failures(data, x, h, config.kernel, z1, z2)
    return GroupDiffEstimate(
        x=float(x), z1=int(z1), z2=int(z2), rho_hat=float(rho),
        bias_hat=float(bias), bias_smoothed=float(bias_smoothed), se_hat=se,
        ci_level=config.ci_level, ci=(center - z * se, center + z * se),
        counts=counts, converged=True,
    )


def group_difference_curve(data: SurvivalDataset, grid, z1: int, z2: int,
                           config: EstimatorConfig, *,
                           smooth: bool = True) -> list[GroupDiffEstimate]:
    """Group contrasts over a grid, sharing per-group fits and bias curve."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    sub1 = subset_by_group(data, z1)
    sub2 = subset_by_group(data, z2)
    h = config.step_h
    bias_warning = config.p1 == config.p

    fits1, fits2 = [], []
    for y in grid:
        try:
            fits1.append(fit_local(sub1, y, config.p1, config.h1, config.kernel))
        except EstimationError as exc:
            fits1.append(exc)
        try:
            fits2.append(fit_local(sub2, y, config.p1, config.h1, config.kernel))
        except EstimationError as exc:
            fits2.append(exc)

    bias_curve = np.full(grid.shape, np.nan)
    if not bias_warning:
        for i in range(grid.size):
            if isinstance(fits1[i], LocalPolyFit) and isinstance(fits2[i], LocalPolyFit):
                bias_curve[i] = rho_bias(fits1[i], fits2[i], config.p, h,
                                         config.kernel)

    z = _z_quantile(config.ci_level)
    out = []
    for i, x in enumerate(grid):
        counts = _windowed_failures(data, x, h, config.kernel, z1, z2)
        if not (isinstance(fits1[i], LocalPolyFit) and isinstance(fits2[i], LocalPolyFit)):
            err = fits1[i] if not isinstance(fits1[i], LocalPolyFit) else fits2[i]
            out.append(GroupDiffEstimate(
                x=float(x), z1=int(z1), z2=int(z2), rho_hat=float("nan"),
                bias_hat=float("nan"), bias_smoothed=float("nan"),
                se_hat=float("nan"), ci_level=config.ci_level,
                ci=(float("nan"), float("nan")), counts=counts,
                converged=False, error=str(err)))
            continue
        try:
            rho = estimate_rho(data, x, z1, z2, fits1[i], fits2[i], h,
                               config.kernel, p=config.p)
            bias = 0.0 if bias_warning else bias_curve[i]
            bias_smoothed = (smooth_bias(grid, bias_curve, x, h, config.kernel)
                             if smooth and not bias_warning else bias)
            var = rho_variance(data, x, z1, z2, h, config.kernel)
        except EstimationError as exc:
            out.append(GroupDiffEstimate(
                x=float(x), z1=int(z1), z2=int(z2), rho_hat=float("nan"),
                bias_hat=float("nan"), bias_smoothed=float("nan"),
                se_hat=float("nan"), ci_level=config.ci_level,
                ci=(float("nan"), float("nan")), counts=counts,
                converged=False, error=str(exc)))
            continue
        se = float(np.sqrt(var / (data.n * h)))
        center = rho - bias_smoothed
        out.append(GroupDiffEstimate(
            x=float(x), z1=int(z1), z2=int(z2), rho_hat=float(rho),
            bias_hat=float(bias), bias_smoothed=float(bias_smoothed),
            se_hat=se, ci_level=config.ci_level,
            ci=(center - z * se, center + z * se), counts=counts,
            converged=True))
    return out
