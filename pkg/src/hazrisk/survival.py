"""Right-censored survival data, risk sets, and baseline hazard estimation.

A dataset is stored sorted by observed time (stable sort, so ties keep input
order). Risk sets are then suffixes of the sorted arrays: the risk set at a
failure time t contains exactly the subjects with observed time >= t, which
keeps censored subjects tied with a failure inside the risk set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DivergenceError, InputError

__all__ = [
    "SurvivalSample",
    "SurvivalDataset",
    "build_dataset",
    "dataset_from_arrays",
    "load_csv",
    "BaselineHazard",
    "breslow_baseline",
    "two_sample_partial_likelihood_mle",
]


@dataclass(frozen=True)
class SurvivalSample:
    """One subject: covariate, observed time, failure indicator, optional group."""

    covariate: float
    time: float
    status: int
    group: int | None = None


@dataclass(frozen=True)
class SurvivalDataset:
    """Time-sorted survival data with precomputed risk-set bounds.

    Arrays are aligned and sorted by ``time`` ascending. ``failure_positions``
    holds the sorted-array positions of the failures in time order, and
    ``risk_start[j]`` is the first position belonging to the risk set of the
    j-th failure; the risk set is the suffix ``risk_start[j] .. n-1``.
    """

    covariate: np.ndarray
    time: np.ndarray
    status: np.ndarray
    group: np.ndarray | None
    failure_positions: np.ndarray
    risk_start: np.ndarray

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def n_failures(self) -> int:
        return self.failure_positions.shape[0]

    @property
    def failure_times(self) -> np.ndarray:
        return self.time[self.failure_positions]

    @property
    def covariate_range(self) -> tuple[float, float]:
        return float(self.covariate.min()), float(self.covariate.max())

    def group_labels(self) -> np.ndarray:
        if self.group is None:
            raise InputError("dataset has no group labels")
        return np.unique(self.group)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def dataset_from_arrays(covariate, time, status, group=None) -> SurvivalDataset:
    """Validate, sort by time (stable), and precompute risk-set bounds."""
    x = np.asarray(covariate, dtype=float)
    t = np.asarray(time, dtype=float)
    d = np.asarray(status)
    if x.ndim != 1 or x.shape != t.shape or x.shape != d.shape:
        raise ValueError("covariate, time and status must be equal-length 1-d arrays")
    if x.size == 0:
        raise ValueError("empty dataset")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise ValueError(f"covariate at index {bad} is not finite")
    if not np.all(np.isfinite(t)):
        bad = int(np.flatnonzero(~np.isfinite(t))[0])
        raise ValueError(f"time at index {bad} is not finite")
    if np.any(t <= 0):
        bad = int(np.flatnonzero(t <= 0)[0])
        raise ValueError(f"time at index {bad} must be positive")
    d_int = d.astype(np.int64)
    if np.any((d_int != 0) & (d_int != 1)) or np.any(d_int != np.asarray(d, dtype=float)):
        raise ValueError("status must contain only 0 (censored) or 1 (failure)")
    g = None
    if group is not None:
        g = np.asarray(group)
        if g.shape != t.shape:
            raise ValueError("group must match the length of time")
        if np.any(g != g.astype(np.int64)):
            raise ValueError("group labels must be integers")
        g = g.astype(np.int64)

    order = np.argsort(t, kind="stable")
    t_s = t[order].copy()
    x_s = x[order].copy()
    d_s = d_int[order].copy()
    g_s = g[order].copy() if g is not None else None

    failure_positions = np.flatnonzero(d_s == 1)
    if failure_positions.size == 0:
        raise ValueError("dataset contains no failures")
    risk_start = np.searchsorted(t_s, t_s[failure_positions], side="left")

    return SurvivalDataset(
        covariate=_freeze(x_s),
        time=_freeze(t_s),
        status=_freeze(d_s),
        group=_freeze(g_s) if g_s is not None else None,
        failure_positions=_freeze(failure_positions.astype(np.int64)),
        risk_start=_freeze(risk_start.astype(np.int64)),
    )


def build_dataset(samples) -> SurvivalDataset:
    """Build a dataset from an iterable of :class:`SurvivalSample`."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty dataset")
    groups = [s.group for s in samples]
    has_groups = any(g is not None for g in groups)
    if has_groups and any(g is None for g in groups):
        raise ValueError("either all samples carry a group label or none do")
    return dataset_from_arrays(
        [s.covariate for s in samples],
        [s.time for s in samples],
        [s.status for s in samples],
        groups if has_groups else None,
    )


_REQUIRED_COLUMNS = ("x", "time", "status")


def load_csv(path) -> SurvivalDataset:
    """Load a dataset from CSV with columns x, time, status[, group].

    Any malformed row aborts with its line number (header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        cols = [c.strip() for c in reader.fieldnames]
        missing = [c for c in _REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise InputError(f"{path}: missing required column(s): {', '.join(missing)}")
        has_group = "group" in cols

        xs, ts, ds, gs = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                x = float(row["x"])
                t = float(row["time"])
            except (TypeError, ValueError):
                raise InputError(f"{path}: line {lineno}: x and time must be numeric")
            if not (math.isfinite(x) and math.isfinite(t)):
                raise InputError(f"{path}: line {lineno}: x and time must be finite")
            if t <= 0:
                raise InputError(f"{path}: line {lineno}: time must be positive")
            raw_status = (row["status"] or "").strip()
            if raw_status not in ("0", "1"):
                raise InputError(f"{path}: line {lineno}: status must be 0 or 1")
            if has_group:
                raw_group = (row.get("group") or "").strip()
                try:
                    g = int(raw_group)
                except ValueError:
                    raise InputError(f"{path}: line {lineno}: group must be an integer")
                gs.append(g)
            xs.append(x)
            ts.append(t)
            ds.append(int(raw_status))

    if not xs:
        raise InputError(f"{path}: no data rows")
    try:
        return dataset_from_arrays(xs, ts, ds, gs if has_group else None)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class BaselineHazard:
    """Right-continuous step function: cumulative baseline hazard."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate(([0.0], self.values))
        out = padded[idx]
        if out.ndim == 0:
            return float(out)
        return out


def breslow_baseline(data: SurvivalDataset, risk_scores) -> BaselineHazard:
    """Cumulative baseline hazard with one jump per failure.

    ``risk_scores[i]`` is the log relative risk of subject i in the dataset's
    (time-sorted) order; each failure contributes 1 / sum of exp(score) over
    its risk set. Tied failures share a risk set and contribute one term each.
    """
    scores = np.asarray(risk_scores, dtype=float)
    if scores.shape != data.time.shape:
        raise ValueError("risk_scores must align with the dataset")
    if not np.all(np.isfinite(scores)):
        raise ValueError("risk_scores must be finite")
    e = np.exp(scores)
    suffix = np.zeros(data.n + 1)
    suffix[: data.n] = np.cumsum(e[::-1])[::-1]
    denom = suffix[data.risk_start]
    jumps = 1.0 / denom
    ftimes = data.failure_times
    # collapse tied failure times into single steps
    uniq, inverse = np.unique(ftimes, return_inverse=True)
    step = np.zeros(uniq.size)
    np.add.at(step, inverse, jumps)
    return BaselineHazard(times=_freeze(uniq), values=_freeze(np.cumsum(step)))


def _two_sample_counts(data: SurvivalDataset, value1: float, value2: float):
    in2 = data.covariate == value2
    suffix2 = np.zeros(data.n + 1)
    suffix2[: data.n] = np.cumsum(in2[::-1].astype(float))[::-1]
    total = np.zeros(data.n + 1)
    total[: data.n] = np.arange(data.n, 0, -1, dtype=float)
    n2 = suffix2[data.risk_start]
    n1 = total[data.risk_start] - n2
    fail_in2 = in2[data.failure_positions].astype(float)
    return n1, n2, fail_in2


def two_sample_partial_likelihood_mle(
    data: SurvivalDataset, value1: float | None = None, value2: float | None = None
) -> float:
    """Log hazard ratio MLE for a covariate taking exactly two values.

    Maximizes the two-group partial likelihood; the returned estimate is the
    log relative risk of ``value2`` against ``value1`` (defaults: the smaller
    and larger covariate value).
    """
    values = np.unique(data.covariate)
    if values.size != 2:
        raise ValueError("covariate must take exactly two distinct values")
    if value1 is None and value2 is None:
        value1, value2 = float(values[0]), float(values[1])
    if value1 is None or value2 is None:
        raise ValueError("pass both value1 and value2 or neither")
    if sorted((value1, value2)) != list(values):
        raise ValueError("value1 and value2 must match the covariate values")

    n1, n2, fail_in2 = _two_sample_counts(data, value1, value2)

    # score limits at -inf / +inf decide whether a finite maximizer exists
    s_lo = fail_in2.sum() - np.count_nonzero(n1 == 0)
    s_hi = fail_in2.sum() - np.count_nonzero(n2 > 0)
    if s_lo <= 0 or s_hi >= 0:
        raise DivergenceError(
            "two-sample partial likelihood is monotone; no finite estimate "
            "(one group contributes no comparable failures)"
        )

    def neg_loglik(alpha):
        return -(np.sum(fail_in2 * alpha) - np.sum(np.log(n1 + n2 * np.exp(alpha))))

    res = minimize_scalar(neg_loglik, bounds=(-40.0, 40.0), method="bounded",
                          options={"xatol": 1e-12})
    alpha = float(res.x)
    if abs(alpha) > 39.0:
        raise DivergenceError("two-sample estimate ran to the search boundary")
    return alpha
