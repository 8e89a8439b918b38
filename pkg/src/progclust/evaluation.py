"""Cluster quality statistics: silhouette, Kaplan-Meier, pairwise log-rank.

The log-rank statistic for two groups is LRS = (O1 - E1)^2 / V with the
usual hypergeometric variance at each distinct event time; its p-value is
the upper chi-square(1) tail, computed from the regularized upper
incomplete gamma function (series / continued fraction, relative error
well below 1e-10).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 1000


@dataclass
class SilhouetteResult:
    mean: float
    std: float  # population standard deviation, reported as "mean +/- std"
    values: np.ndarray


def _matrix_values(matrix) -> np.ndarray:
    return matrix.values if hasattr(matrix, "values") else np.asarray(matrix, dtype=float)


def silhouette(matrix, labels) -> SilhouetteResult:
    """Per-point silhouette over a precomputed distance matrix.

    Singletons score 0, as does a point with zero cohesion and zero
    separation; otherwise s = (b - a) / max(a, b).
    """
    D = _matrix_values(matrix)
    labels = np.asarray(getattr(labels, "labels", labels), dtype=int)
    n = D.shape[0]
    if labels.shape[0] != n:
        raise ValueError("one label per matrix row required")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette requires at least 2 clusters")

    members = {c: np.flatnonzero(labels == c) for c in uniq}
    sums = np.stack([D[:, idx].sum(axis=1) for c, idx in members.items()], axis=1)
    counts = np.array([idx.size for idx in members.values()], dtype=float)
    col_of = {c: j for j, c in enumerate(members)}

    s = np.zeros(n)
    for i in range(n):
        j = col_of[labels[i]]
        own = counts[j]
        if own == 1:
            continue
        a = sums[i, j] / (own - 1.0)
        b = np.inf
        for jj in range(counts.size):
            if jj != j:
                b = min(b, sums[i, jj] / counts[jj])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return SilhouetteResult(float(s.mean()), float(s.std()), s)


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous product-limit step function."""

    times: tuple[float, ...]
    survival: tuple[float, ...]
    at_risk: tuple[int, ...]
    events: tuple[int, ...]


def kaplan_meier(times, events) -> SurvivalCurve:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise ValueError("empty survival input")
    if np.any(times < 0):
        raise ValueError("times must be >= 0")

    knots = [0.0]
    surv = [1.0]
    at_risk = [int(times.size)]
    n_events = [0]
    s = 1.0
    for t in np.unique(times[events]):
        n_at = int((times >= t).sum())
        d = int(((times == t) & events).sum())
        s *= 1.0 - d / n_at
        if t == 0.0:  # event at origin: the start knot takes the drop
            surv[0], at_risk[0], n_events[0] = s, n_at, d
            continue
        knots.append(float(t))
        surv.append(s)
        at_risk.append(n_at)
        n_events.append(d)
    return SurvivalCurve(tuple(knots), tuple(surv), tuple(at_risk), tuple(n_events))


def _gamma_upper_series(a: float, x: float) -> float:
    # P(a, x) by series, then Q = 1 - P; valid for x < a + 1
    term = 1.0 / a
    total = term
    for k in range(1, _GAMMA_MAX_ITER):
        term *= x / (a + k)
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    return 1.0 - total * math.exp(log_prefactor)


def _gamma_upper_contfrac(a: float, x: float) -> float:
    # Q(a, x) by Lentz's continued fraction; valid for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, _GAMMA_MAX_ITER):
        an = -k * (k - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, min(1.0, _gamma_upper_series(a, x)))
    return max(0.0, min(1.0, _gamma_upper_contfrac(a, x)))


def chi2_sf_1df(x: float) -> float:
    """Upper tail of the chi-square distribution with 1 degree of freedom."""
    return regularized_upper_gamma(0.5, x / 2.0)


@dataclass
class LogRankResult:
    statistic: float
    p_value: float
    observed: tuple[float, float]
    expected: tuple[float, float]
    variance: float


def logrank_pair(times1, events1, times2, events2) -> LogRankResult:
    """Two-group log-rank test over the pooled distinct event times."""
    t1 = np.asarray(times1, dtype=float)
    e1 = np.asarray(events1, dtype=bool)
    t2 = np.asarray(times2, dtype=float)
    e2 = np.asarray(events2, dtype=bool)
    if t1.size == 0 or t2.size == 0:
        raise ValueError("both groups must be non-empty")

    event_times = np.unique(np.concatenate([t1[e1], t2[e2]]))
    o1 = e1_total = o2 = e2_total = variance = 0.0
    for t in event_times:
        n1 = float((t1 >= t).sum())
        n2 = float((t2 >= t).sum())
        n = n1 + n2
        d1 = float(((t1 == t) & e1).sum())
        d2 = float(((t2 == t) & e2).sum())
        d = d1 + d2
        o1 += d1
        o2 += d2
        e1_total += n1 * d / n
        e2_total += n2 * d / n
        if n > 1.0:
            variance += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0)

    if variance == 0.0:
        return LogRankResult(0.0, 1.0, (o1, o2), (e1_total, e2_total), 0.0)
    statistic = (o1 - e1_total) ** 2 / variance
    return LogRankResult(
        statistic, chi2_sf_1df(statistic), (o1, o2), (e1_total, e2_total), variance
    )


@dataclass
class SeparationResult:
    max_p: float
    min_lrs: float
    pair_results: dict[tuple[int, int], LogRankResult]


def survival_separation(labels, times, events) -> SeparationResult:
    """Worst-case pairwise log-rank over all cluster pairs."""
    labels = np.asarray(getattr(labels, "labels", labels), dtype=int)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("survival separation requires at least 2 clusters")

    results: dict[tuple[int, int], LogRankResult] = {}
    max_p, min_lrs = 0.0, math.inf
    for i, ci in enumerate(uniq):
        for cj in uniq[i + 1:]:
            mi = labels == ci
            mj = labels == cj
            res = logrank_pair(times[mi], events[mi], times[mj], events[mj])
            results[(int(ci), int(cj))] = res
            max_p = max(max_p, res.p_value)
            min_lrs = min(min_lrs, res.statistic)
    return SeparationResult(max_p, min_lrs, results)
