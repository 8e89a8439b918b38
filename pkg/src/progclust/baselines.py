"""Published comparator stratifications: GOM, GRO, MEY thresholds and HAL's DTW pipeline.

The three threshold rules each bin one progression feature (six-month
percentage decline, fitted one-year score, D50 in months). HAL compares
multivariate subscore sequences with dimension-independent dynamic time
warping and clusters the dissimilarity matrix hierarchically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .clustering import Assignment, ahc_complete
from .distances import DistanceMatrix, matrix_from_points
from .embedding import EmbeddingParams, embed
from .features import FeatureVector

GOM_DECLINE_THRESHOLD = 0.186
GOM_PERCENTILE = 0.90
GRO_SCORE_EDGES = (10.0, 20.0, 30.0)
MEY_MONTH_EDGES = (20.0, 40.0)
DAYS_PER_MONTH = 30.4375


class MissingSubscoresError(ValueError):
    """HAL needs per-item subscores; raised when any patient lacks them."""


def _strata_assignment(raw_labels, nominal_k, tag, ids) -> Assignment:
    # densify preserving stratum order (bin 0 stays below bin 1, ...)
    raw = np.asarray(raw_labels)
    occupied, dense = np.unique(raw, return_inverse=True)
    k = occupied.size
    if k < nominal_k:
        warnings.warn(
            f"{tag}: only {k} of {nominal_k} strata are occupied (degenerate)",
            stacklevel=3,
        )
    return Assignment(dense, k, tag, None, tuple(ids))


def gom_strata(
    features: list[FeatureVector],
    threshold: float = GOM_DECLINE_THRESHOLD,
    percentile_mode: bool = False,
) -> Assignment:
    """Two strata by six-month percentage decline: slow (< threshold) / fast.

    ``percentile_mode`` recomputes the cut as the 90th percentile of the
    observed decline distribution instead of the fixed constant.
    """
    declines = np.array([f.pc_change_m6 for f in features])
    if percentile_mode:
        threshold = float(np.quantile(declines, GOM_PERCENTILE))
    raw = (declines >= threshold).astype(int)
    ids = [f.patient_id for f in features]
    return _strata_assignment(raw, 2, "GOM", ids)


def gro_strata(features: list[FeatureVector]) -> Assignment:
    """Four strata by the fitted one-year score: <=10, (10,20], (20,30], >30."""
    scores = np.array([f.score_m12 for f in features])
    raw = np.searchsorted(np.asarray(GRO_SCORE_EDGES), scores, side="left")
    ids = [f.patient_id for f in features]
    return _strata_assignment(raw, 4, "GRO", ids)


def mey_strata(features: list[FeatureVector]) -> Assignment:
    """Three strata by D50 in months: severe < 20, intermediate [20, 40), mild >= 40."""
    months = np.array([f.d50 for f in features]) / DAYS_PER_MONTH
    raw = np.searchsorted(np.asarray(MEY_MONTH_EDGES), months, side="right")
    ids = [f.patient_id for f in features]
    return _strata_assignment(raw, 3, "MEY", ids)


@njit(cache=True)
def _dtw_cost(a, b):  # pragma: no cover - exercised via dtw()
    n = a.shape[0]
    m = b.shape[0]
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = abs(a[i - 1] - b[j - 1])
            best = D[i - 1, j - 1]
            if D[i - 1, j] < best:
                best = D[i - 1, j]
            if D[i, j - 1] < best:
                best = D[i, j - 1]
            D[i, j] = cost + best
    return D[n, m]


def dtw(a, b) -> float:
    """Classic dynamic time warping cost with |x - y| local cost, full window."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("DTW requires non-empty series")
    return float(_dtw_cost(a, b))


@dataclass(frozen=True)
class MultiSeries:
    """One patient's subscore trajectories: (n_visits, n_items) values by day."""

    patient_id: str
    days: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.days):
            raise ValueError("values must be (n_visits, n_items)")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ValueError("days must be strictly increasing")

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


def multiseries_from_sequence(seq, items=None) -> MultiSeries:
    if not seq.has_subscores():
        raise MissingSubscoresError(
            f"patient {seq.patient_id} lacks subscores; the DTW baseline is disabled "
            f"for cohorts without the q1..q12 block"
        )
    values = np.array([v.subscores for v in seq.visits], dtype=float)
    if items is not None:
        values = values[:, list(items)]
    return MultiSeries(seq.patient_id, seq.days, values)


def dtw_independent(p: MultiSeries, q: MultiSeries) -> float:
    """Sum of per-dimension DTW costs."""
    if p.n_items != q.n_items:
        raise ValueError(f"dimension mismatch: {p.n_items} vs {q.n_items}")
    return float(
        sum(dtw(p.values[:, d], q.values[:, d]) for d in range(p.n_items))
    )


def dtw_matrix(cohort, items=None) -> DistanceMatrix:
    """DTW_I dissimilarity matrix over the cohort's subscore sequences."""
    series = [multiseries_from_sequence(seq, items) for seq in cohort]
    ids = tuple(s.patient_id for s in series)
    n = len(series)
    D = np.zeros((n, n))
    for i in range(n - 1):
        for j in range(i + 1, n):
            cost = dtw_independent(series[i], series[j])
            D[i, j] = cost
            D[j, i] = cost
    return DistanceMatrix(D, "DTWI", ids)


def hal_workflow(
    cohort,
    k: int,
    use_embedding: bool = False,
    items=None,
    embed_params: EmbeddingParams | None = None,
) -> Assignment:
    """DTW_I matrix -> (optional 2-D embedding) -> complete-linkage AHC.

    The original's minimum-cluster-size constraint is not enforced; sizes
    are left to the report.
    """
    matrix = dtw_matrix(cohort, items)
    if use_embedding:
        emb = embed(matrix, embed_params or EmbeddingParams())
        matrix = matrix_from_points(emb.coords, emb.ids)
    return ahc_complete(matrix, k)


def mean_intervisit_gap(cohort) -> dict[str, float]:
    """Mean day gap between consecutive visits, per patient.

    DTW aligns by visit index, not calendar time; this makes the irregular
    sampling it ignores inspectable next to the HAL results.
    """
    return {
        seq.patient_id: float(np.diff(np.asarray(seq.days)).mean())
        for seq in cohort
    }
