"""Two-step estimation of the log relative risk between covariate values.

Step one fits local polynomials at the two anchors (see ``local_fit``); step
two maximizes a pair likelihood in a single scalar: the log relative risk
alpha of x2 against x1. Each failure contributes its kernel weight at either
anchor times a log ratio over its risk set, where risk-set members enter
through exp(polynomial part) weighted by their own kernel weights. The
objective is concave in alpha, so a safeguarded Newton iteration on the score
with a bracketing fallback is exact and fast.

The plug-in variance follows the sandwich form evaluated with estimated
relative risks D_i = psi(X_i) - psi(x1), interpolated from an anchored curve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtri

from . import _accel
from .bandwidth import VariableBandwidthRule, bandwidth_at
from .errors import (
    ConvergenceError,
    DivergenceError,
    EstimationError,
    VarianceUndefinedError,
)
from .kernels import (
    EPANECHNIKOV,
    KernelSpec,
    kernel_moment,
    kernel_square_integral,
    kernel_weight,
)
from .local_fit import LocalPolyFit, fit_local
from .survival import SurvivalDataset

__all__ = [
    "STANDARD_GRID_SIZE",
    "EstimatorConfig",
    "PairLikTerms",
    "PairLikelihood",
    "build_pair_terms",
    "estimate_alpha",
    "alpha_bias",
    "alpha_variance",
    "RelativeRiskEstimate",
    "RiskCurve",
    "estimate_relative_risk",
    "estimate_curve",
    "estimate_alpha_chained",
]

STANDARD_GRID_SIZE = 101
SCORE_TOL = 1e-10


@dataclass(frozen=True)
class EstimatorConfig:
    """Bandwidths, degrees and CI level for the two-step estimator.

    ``h`` defaults to 0.8 * h1 and must stay strictly below h1: the second
    step needs a narrower window than the derivative fits it plugs in.
    """

    h1: float
    h: float | None = None
    p: int = 1
    p1: int = 2
    kernel: KernelSpec = EPANECHNIKOV
    ci_level: float = 0.95

    def __post_init__(self):
        if not (self.h1 > 0):
            raise ValueError("h1 must be positive")
        if self.p < 1 or self.p1 < self.p:
            raise ValueError("need 1 <= p <= p1")
        if not (0.0 < self.ci_level < 1.0):
            raise ValueError("ci_level must be in (0, 1)")
        if not (self.step_h < self.h1):
            raise ValueError("second-step bandwidth h must be smaller than h1")

    @property
    def step_h(self) -> float:
        return 0.8 * self.h1 if self.h is None else self.h


@dataclass
class PairLikTerms:
    """Per-subject ingredients of the pair likelihood.

    eta/zeta: polynomial parts anchored at x1/x2; k1/k2: kernel weights at
    x1/x2. Arrays align with the dataset's time-sorted order.
    """

    eta: np.ndarray
    zeta: np.ndarray
    k1: np.ndarray
    k2: np.ndarray


def _poly_part(beta_star: np.ndarray, dx: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros_like(dx)
    for k in range(p, 0, -1):
        out = (out + beta_star[k - 1]) * dx
    return out


def build_pair_terms(data: SurvivalDataset, x1: float, x2: float,
                     fit1: LocalPolyFit, fit2: LocalPolyFit, h: float,
                     kernel: KernelSpec, p: int | None = None) -> PairLikTerms:
    """Assemble the per-subject terms; ``p`` truncates the polynomial parts."""
    for fit, x in ((fit1, x1), (fit2, x2)):
        if not fit.converged:
            raise EstimationError(f"first-step fit at x={x:g} did not converge")
    p1 = p if p is not None else fit1.degree
    if p1 > fit1.degree or p1 > fit2.degree:
        raise ValueError("p exceeds the degree of the supplied fits")
    eta = _poly_part(fit1.beta_star, data.covariate - x1, p1)
    zeta = _poly_part(fit2.beta_star, data.covariate - x2, p1)
    k1 = kernel_weight(kernel, data.covariate - x1, h)
    k2 = kernel_weight(kernel, data.covariate - x2, h)
    return PairLikTerms(eta=eta, zeta=zeta, k1=k1, k2=k2)


class PairLikelihood:
    """Concave scalar likelihood for the log relative risk alpha.

    Works for the anchored-pair contrast and, with group-masked weights, for
    the two-group difference at a single covariate value.
    """

    def __init__(self, data: SurvivalDataset, terms: PairLikTerms):
        n = data.n
        for name in ("eta", "zeta", "k1", "k2"):
            arr = getattr(terms, name)
            if arr.shape != (n,):
                raise ValueError(f"terms.{name} must have length n")
        fp = data.failure_positions
        kf1 = terms.k1[fp]
        kf2 = terms.k2[fp]
        keep = (kf1 + kf2) > 0.0
        self.kf1 = kf1[keep]
        self.kf2 = kf2[keep]
        self.wf = self.kf1 + self.kf2

        a = np.zeros(n)
        m1 = terms.k1 > 0.0
        a[m1] = terms.k1[m1] * np.exp(terms.eta[m1])
        b = np.zeros(n)
        m2 = terms.k2 > 0.0
        b[m2] = terms.k2[m2] * np.exp(terms.zeta[m2])
        ptr = np.ascontiguousarray(data.risk_start[keep])
        self.A, self.B = _accel.pair_suffix(a, b, ptr)

        fpk = fp[keep]
        self._lin_const = float(np.sum(self.kf1 * terms.eta[fpk])
                                + np.sum(self.kf2 * terms.zeta[fpk]))
        self._sum_kf2 = float(self.kf2.sum())
        self._sum_kf1 = float(self.kf1.sum())
        with np.errstate(divide="ignore"):
            self._logA = np.log(self.A)
            self._logB = np.log(self.B)

    def _w(self, alpha: float) -> np.ndarray:
        # share of the second window in each risk-set denominator
        w = np.empty_like(self.A)
        bzero = self.B == 0.0
        azero = self.A == 0.0
        both = ~(bzero | azero)
        w[bzero] = 0.0
        w[azero & ~bzero] = 1.0
        w[both] = expit(alpha + self._logB[both] - self._logA[both])
        return w

    def objective(self, alpha: float) -> float:
        logsum = np.logaddexp(self._logA, alpha + self._logB)
        return self._lin_const + alpha * self._sum_kf2 - float(np.sum(self.wf * logsum))

    def score(self, alpha: float) -> float:
        return self._sum_kf2 - float(np.sum(self.wf * self._w(alpha)))

    def curvature(self, alpha: float) -> float:
        w = self._w(alpha)
        return -float(np.sum(self.wf * w * (1.0 - w)))

    def _score_limits(self) -> tuple[float, float]:
        at_minus = self._sum_kf2 - float(np.sum(self.wf[self.A == 0.0]))
        at_plus = self._sum_kf2 - float(np.sum(self.wf[self.B > 0.0]))
        return at_minus, at_plus

    def solve(self, score_tol: float = SCORE_TOL, max_iter: int = 200) -> float:
        if self.wf.size == 0 or self._sum_kf1 <= 0.0 or self._sum_kf2 <= 0.0:
            raise DivergenceError(
                "no failures carry positive weight in one of the windows; "
                "the pair likelihood is monotone")
        s_lo, s_hi = self._score_limits()
        if not (s_lo > 0.0 and s_hi < 0.0):
            raise DivergenceError(
                "risk sets never weigh both windows together; the pair "
                "likelihood has no finite maximizer")

        alpha = 0.0
        s = self.score(alpha)
        if abs(s) <= score_tol:
            return 0.0
        # expanding bracket [lo, hi] with score(lo) > 0 > score(hi)
        if s > 0.0:
            lo, hi = alpha, 1.0
            while self.score(hi) > 0.0:
                lo, hi = hi, hi * 2.0
                if hi > 1e6:
                    raise DivergenceError("failed to bracket the score root")
        else:
            lo, hi = -1.0, alpha
            while self.score(lo) < 0.0:
                lo, hi = lo * 2.0, lo
                if lo < -1e6:
                    raise DivergenceError("failed to bracket the score root")

        for _ in range(max_iter):
            s = self.score(alpha)
            if abs(s) <= score_tol:
                return float(alpha)
            if s > 0.0:
                lo = alpha
            else:
                hi = alpha
            curv = self.curvature(alpha)
            nxt = alpha - s / curv if curv < 0.0 else None
            if nxt is None or not np.isfinite(nxt) or not (lo < nxt < hi):
                nxt = 0.5 * (lo + hi)
            if hi - lo <= 1e-15 * max(1.0, abs(alpha)):
                if abs(s) <= score_tol:
                    return float(alpha)
                raise ConvergenceError(
                    f"pair score stuck at {s:.3e} with an exhausted bracket")
            alpha = nxt
        raise ConvergenceError("pair likelihood did not converge")


def estimate_alpha(data: SurvivalDataset, x1: float, x2: float,
                   fit1: LocalPolyFit, fit2: LocalPolyFit, h: float,
                   kernel: KernelSpec = EPANECHNIKOV, *,
                   p: int | None = None) -> float:
    """Maximize the pair likelihood for psi(x2) - psi(x1)."""
    terms = build_pair_terms(data, x1, x2, fit1, fit2, h, kernel, p=p)
    return PairLikelihood(data, terms).solve()


def alpha_bias(fit1_hi: LocalPolyFit, fit2_hi: LocalPolyFit, p: int, h: float,
               kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Leading bias h^(p+1) (beta2_{p+1} - beta1_{p+1}) int u^(p+1) K."""
    if fit1_hi.degree < p + 1 or fit2_hi.degree < p + 1:
        raise ValueError(
            "bias estimation needs first-step fits of degree at least p + 1")
    diff = float(fit2_hi.beta_star[p] - fit1_hi.beta_star[p])
    return h ** (p + 1) * diff * kernel_moment(kernel, p + 1)


def alpha_variance(data: SurvivalDataset, x1: float, x2: float, h: float,
                   kernel: KernelSpec, d_hat) -> float:
    """Plug-in asymptotic variance of the pair contrast.

    ``d_hat[i]`` estimates psi(X_i) - psi(x1) in dataset order. Only failures
    whose risk sets carry weight in both windows contribute.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    if d_hat.shape != data.time.shape:
        raise ValueError("d_hat must align with the dataset")
    if not np.all(np.isfinite(d_hat)):
        raise ValueError("d_hat must be finite")
    ed = np.exp(d_hat)
    k1 = kernel_weight(kernel, data.covariate - x1, h)
    k2 = kernel_weight(kernel, data.covariate - x2, h)
    ptr = np.ascontiguousarray(data.risk_start)
    inner = _accel.risk_ratio_sum(ed, k1 * ed, k2 * ed, ptr) / data.n
    if inner <= 0.0:
        raise VarianceUndefinedError(
            "no failure's risk set carries weight in both windows")
    return kernel_square_integral(kernel) / inner


@dataclass
class RelativeRiskEstimate:
    """Point estimate with bias correction and a normal confidence interval."""

    x1: float
    x2: float
    alpha_hat: float
    bias_hat: float
    se_hat: float
    ci_level: float
    ci: tuple[float, float]
    h: float
    converged: bool
    bias_warning: bool = False
    error: str | None = None


@dataclass
class RiskCurve:
    """Relative risk curve against a fixed anchor."""

    anchor: float
    grid: np.ndarray
    estimates: list[RelativeRiskEstimate]

    @property
    def alphas(self) -> np.ndarray:
        return np.array([e.alpha_hat for e in self.estimates])


def _fit_or_none(data, x, degree, h1, kernel):
    try:
        return fit_local(data, x, degree, h1, kernel), None
    except EstimationError as exc:
        return None, str(exc)


def _curve_alphas(data: SurvivalDataset, anchor: float, grid: np.ndarray,
                  config: EstimatorConfig, *,
                  bandwidth_rule: VariableBandwidthRule | None = None,
                  fits: list[LocalPolyFit] | None = None,
                  anchor_fit: LocalPolyFit | None = None,
                  workers: int = 1):
    """Alphas over the grid plus per-point h and error strings."""
    def h1_at(x):
        return config.h1 if bandwidth_rule is None else bandwidth_at(bandwidth_rule, x)

    def h_at(x):
        if bandwidth_rule is None:
            return config.step_h
        return 0.8 * bandwidth_at(bandwidth_rule, x)

    if fits is None:
        from .local_fit import fit_derivative_curve
        fits = fit_derivative_curve(
            data, grid, config.p1, config.kernel,
            h1=None if bandwidth_rule is not None else config.h1,
            bandwidth_rule=bandwidth_rule, workers=workers)
    if anchor_fit is None:
        hits = np.flatnonzero(grid == anchor)
        if hits.size and fits[hits[0]].converged:
            anchor_fit = fits[hits[0]]
        else:
            anchor_fit = fit_local(data, anchor, config.p1, h1_at(anchor),
                                   config.kernel)

    alphas = np.full(grid.shape, np.nan)
    h_used = np.empty(grid.shape)
    errors: list[str | None] = [None] * grid.size

    def one(i):
        x = grid[i]
        h_used[i] = h_at(x)
        fit_x = fits[i]
        if not fit_x.converged:
            errors[i] = fit_x.error or "first-step fit failed"
            return
        try:
            alphas[i] = estimate_alpha(data, anchor, x, anchor_fit, fit_x,
                                       h_used[i], config.kernel, p=config.p)
        except EstimationError as exc:
            errors[i] = str(exc)

    if workers > 1 and grid.size > 1:
        _accel.warmup()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(grid.size)))
    else:
        for i in range(grid.size):
            one(i)
    return alphas, h_used, errors, fits, anchor_fit


def _interp_d_hat(data: SurvivalDataset, grid: np.ndarray,
                  alphas: np.ndarray) -> np.ndarray:
    ok = np.isfinite(alphas)
    if ok.sum() < 2:
        raise VarianceUndefinedError(
            "anchored curve failed almost everywhere; cannot build plug-in "
            "relative risks")
    # clamp outside the grid: np.interp holds endpoint values
    return np.interp(data.covariate, grid[ok], alphas[ok])


def _z_quantile(level: float) -> float:
    return float(ndtri(0.5 + 0.5 * level))


def estimate_relative_risk(data: SurvivalDataset, x1: float, x2: float,
                           config: EstimatorConfig) -> RelativeRiskEstimate:
    """Full pair estimate: alpha, bias, standard error, confidence interval."""
    h = config.step_h
    fit1 = fit_local(data, x1, config.p1, config.h1, config.kernel)
    fit2 = fit1 if x2 == x1 else fit_local(data, x2, config.p1, config.h1,
                                           config.kernel)
    alpha = estimate_alpha(data, x1, x2, fit1, fit2, h, config.kernel,
                           p=config.p)
    bias_warning = config.p1 == config.p
    bias = 0.0 if bias_warning else alpha_bias(fit1, fit2, config.p, h,
                                               config.kernel)

    lo_x, hi_x = data.covariate_range
    grid = np.linspace(lo_x, hi_x, STANDARD_GRID_SIZE)
    alphas, _, _, _, _ = _curve_alphas(data, x1, grid, config,
                                       anchor_fit=fit1)
    d_hat = _interp_d_hat(data, grid, alphas)
    var = alpha_variance(data, x1, x2, h, config.kernel, d_hat)
    se = float(np.sqrt(var / (data.n * h)))
    z = _z_quantile(config.ci_level)
    center = alpha - bias
    return RelativeRiskEstimate(
        x1=float(x1), x2=float(x2), alpha_hat=float(alpha),
        bias_hat=float(bias), se_hat=se, ci_level=config.ci_level,
        ci=(center - z * se, center + z * se), h=float(h), converged=True,
        bias_warning=bias_warning,
    )


def estimate_curve(data: SurvivalDataset, x1: float, grid,
                   config: EstimatorConfig, *,
                   bandwidth_rule: VariableBandwidthRule | None = None,
                   fits: list[LocalPolyFit] | None = None,
                   workers: int = 1) -> RiskCurve:
    """Relative risk curve over a grid against the anchor ``x1``.

    The anchor fit is computed once and shared; the variance plug-in uses
    relative risks interpolated from this same curve. Failed grid points are
    flagged in place.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    if not (grid[0] <= x1 <= grid[-1]):
        raise ValueError("anchor must lie inside the grid range")

    alphas, h_used, errors, fits, anchor_fit = _curve_alphas(
        data, x1, grid, config, bandwidth_rule=bandwidth_rule, fits=fits,
        workers=workers)
    d_hat = _interp_d_hat(data, grid, alphas)
    z = _z_quantile(config.ci_level)
    bias_warning = config.p1 == config.p

    estimates = []
    for i, x in enumerate(grid):
        if not np.isfinite(alphas[i]):
            estimates.append(RelativeRiskEstimate(
                x1=float(x1), x2=float(x), alpha_hat=float("nan"),
                bias_hat=float("nan"), se_hat=float("nan"),
                ci_level=config.ci_level, ci=(float("nan"), float("nan")),
                h=float(h_used[i]), converged=False, error=errors[i]))
            continue
        bias = 0.0 if bias_warning else alpha_bias(anchor_fit, fits[i],
                                                   config.p, h_used[i],
                                                   config.kernel)
        try:
            var = alpha_variance(data, x1, x, h_used[i], config.kernel, d_hat)
            se = float(np.sqrt(var / (data.n * h_used[i])))
        except VarianceUndefinedError as exc:
            estimates.append(RelativeRiskEstimate(
                x1=float(x1), x2=float(x), alpha_hat=float(alphas[i]),
                bias_hat=float(bias), se_hat=float("nan"),
                ci_level=config.ci_level, ci=(float("nan"), float("nan")),
                h=float(h_used[i]), converged=False, error=str(exc),
                bias_warning=bias_warning))
            continue
        center = alphas[i] - bias
        estimates.append(RelativeRiskEstimate(
            x1=float(x1), x2=float(x), alpha_hat=float(alphas[i]),
            bias_hat=float(bias), se_hat=se, ci_level=config.ci_level,
            ci=(center - z * se, center + z * se), h=float(h_used[i]),
            converged=True, bias_warning=bias_warning))
    return RiskCurve(anchor=float(x1), grid=grid, estimates=estimates)


def estimate_alpha_chained(data: SurvivalDataset, x1: float, x3: float,
                           x2: float, config: EstimatorConfig) -> float:
    """Chain the contrast through x3: alpha(x1, x3) + alpha(x3, x2)."""
    h = config.step_h
    fits: dict[float, LocalPolyFit] = {}
    for x in (x1, x3, x2):
        if x not in fits:
            fits[x] = fit_local(data, x, config.p1, config.h1, config.kernel)
    first = estimate_alpha(data, x1, x3, fits[x1], fits[x3], h, config.kernel,
                           p=config.p)
    second = estimate_alpha(data, x3, x2, fits[x3], fits[x2], h, config.kernel,
                            p=config.p)
    return first + second
