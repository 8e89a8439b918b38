"""Per-patient progression features and the pairwise descriptive-variable table.

Seven features per patient: four read straight off the visit sequence
(follow-up duration, first score, overall slope, stiffest consecutive
slope) and three off the fitted curve (one-year score, six-month percentage
decline, D50). A descriptive variable is the absolute difference of one
feature across a patient pair; variables are min-max normalized over all
pairs and de-duplicated with a Spearman correlation filter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .sigmoid import SigmoidFit, eval_sigmoid, invert_for_score

FEATURE_NAMES = (
    "duration",
    "first_score",
    "overall_slope",
    "stiffest_slope",
    "score_m12",
    "pc_change_m6",
    "d50",
)

# descriptive-variable names in the canonical enumeration order 1..7
VARIABLE_NAMES = (
    "DURATION_DIFF",
    "FIRST_SCORE_DIFF",
    "SLOPE_DIFF",
    "HIGHEST_CONSECUTIVE_SLOPE_DIFF",
    "ALS_SCORE_M12_DIFF",
    "PC_CHANGE_M6_DIFF",
    "D50_DIFF",
)

ONE_YEAR_DAY = 365.0
SIX_MONTH_DAY = 183.0
DEFAULT_SPEARMAN_THRESHOLD = 0.7


@dataclass(frozen=True)
class FeatureVector:
    patient_id: str
    duration: float
    first_score: float
    overall_slope: float
    stiffest_slope: float
    score_m12: float
    pc_change_m6: float
    d50: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)


def sequence_features(seq, fit: SigmoidFit, horizon_days: float = 3650.0) -> FeatureVector:
    """Extract the 7 features for one patient.

    The six-month decline uses the fitted curve's own day-0 value, not the
    raw first score, so all curve-based features share one estimator.
    """
    days = np.asarray(seq.days, dtype=float)
    scores = np.asarray(seq.scores, dtype=float)
    duration = float(days[-1])
    if duration <= 0:
        raise ValueError(f"patient {seq.patient_id}: follow-up duration must be positive")

    overall_slope = float((scores[-1] - scores[0]) / duration)
    segment_slopes = np.diff(scores) / np.diff(days)
    stiffest_slope = float(segment_slopes.min())

    score_m12 = float(eval_sigmoid(fit, ONE_YEAR_DAY))
    s0 = float(eval_sigmoid(fit, 0.0))
    s183 = float(eval_sigmoid(fit, SIX_MONTH_DAY))
    pc_change_m6 = 0.0 if s0 == 0.0 else (s0 - s183) / s0
    d50 = invert_for_score(fit, horizon_days=horizon_days)

    return FeatureVector(
        patient_id=seq.patient_id,
        duration=duration,
        first_score=float(scores[0]),
        overall_slope=overall_slope,
        stiffest_slope=stiffest_slope,
        score_m12=score_m12,
        pc_change_m6=pc_change_m6,
        d50=d50,
    )


def compute_features(sequences, fits: dict, horizon_days: float = 3650.0) -> list[FeatureVector]:
    return [
        sequence_features(seq, fits[seq.patient_id], horizon_days=horizon_days)
        for seq in sequences
    ]


def feature_matrix(features: list[FeatureVector]) -> np.ndarray:
    return np.vstack([f.as_array() for f in features])


def minmax_scale(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise map to [0, 1]; constant columns become all-zero."""
    values = np.asarray(values, dtype=float)
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    span = hi - lo
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (values - lo) / safe
    scaled[:, span == 0.0] = 0.0
    return scaled, lo, hi


@dataclass
class PairTable:
    """All unordered patient pairs x descriptive variables.

    ``values`` holds raw absolute differences until :func:`minmax_normalize`
    replaces them with scaled ones and fills the normalization fields.
    """

    pairs: tuple[tuple[str, str], ...]
    values: np.ndarray
    columns: tuple[str, ...]
    col_min: np.ndarray | None = None
    col_max: np.ndarray | None = None
    constant_mask: np.ndarray | None = None

    @property
    def n_pairs(self) -> int:
        return self.values.shape[0]

    @property
    def normalized(self) -> bool:
        return self.col_min is not None

    def select_columns(self, mask: np.ndarray) -> "PairTable":
        mask = np.asarray(mask, dtype=bool)
        return PairTable(
            pairs=self.pairs,
            values=self.values[:, mask],
            columns=tuple(np.array(self.columns)[mask]),
            col_min=None if self.col_min is None else self.col_min[mask],
            col_max=None if self.col_max is None else self.col_max[mask],
            constant_mask=None if self.constant_mask is None else self.constant_mask[mask],
        )


def pairwise_table(features: list[FeatureVector]) -> PairTable:
    """Absolute feature differences for all C(n, 2) pairs, ordered by id."""
    if len(features) < 2:
        raise ValueError("need at least 2 patients to form pairs")
    ordered = sorted(features, key=lambda f: f.patient_id)
    ids = [f.patient_id for f in ordered]
    X = np.vstack([f.as_array() for f in ordered])

    pairs = []
    blocks = []
    for i in range(len(ids) - 1):
        blocks.append(np.abs(X[i] - X[i + 1:]))
        pairs.extend((ids[i], ids[j]) for j in range(i + 1, len(ids)))
    return PairTable(tuple(pairs), np.vstack(blocks), VARIABLE_NAMES)


def minmax_normalize(table: PairTable) -> PairTable:
    """Scale each descriptive variable to [0, 1] over all pairs."""
    if table.n_pairs == 0:
        raise ValueError("empty pair table")
    scaled, lo, hi = minmax_scale(table.values)
    return PairTable(
        pairs=table.pairs,
        values=scaled,
        columns=table.columns,
        col_min=lo,
        col_max=hi,
        constant_mask=(hi - lo) == 0.0,
    )


def denormalize(table: PairTable) -> np.ndarray:
    """Invert :func:`minmax_normalize` (constant columns recover their min)."""
    if not table.normalized:
        raise ValueError("table is not normalized")
    return table.values * (table.col_max - table.col_min) + table.col_min


def spearman_filter(table: PairTable, threshold: float = DEFAULT_SPEARMAN_THRESHOLD) -> np.ndarray:
    """Boolean mask of retained columns after correlation de-duplication.

    For any pair with |rho| strictly above the threshold the column with
    the larger enumeration index is dropped. Constant columns correlate
    with nothing and are kept.
    """
    values = table.values
    n_cols = values.shape[1]
    retained = np.ones(n_cols, dtype=bool)
    if n_cols < 2:
        return retained

    rho = stats.spearmanr(values).statistic
    if n_cols == 2:  # spearmanr returns a scalar for two columns
        rho = np.array([[1.0, float(rho)], [float(rho), 1.0]])
    rho = np.nan_to_num(rho, nan=0.0)

    for i in range(n_cols):
        if not retained[i]:
            continue
        for j in range(i + 1, n_cols):
            if retained[j] and abs(rho[i, j]) > threshold:
                retained[j] = False
    return retained


def write_features_csv(features: list[FeatureVector], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("patient_id",) + FEATURE_NAMES)
        for f in sorted(features, key=lambda f: f.patient_id):
            writer.writerow([f.patient_id] + [repr(float(v)) for v in f.as_array()])


def write_pairs_csv(table: PairTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("patient_a", "patient_b") + table.columns)
        for (a, b), row in zip(table.pairs, table.values):
            writer.writerow([a, b] + [repr(float(v)) for v in row])
