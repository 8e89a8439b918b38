"""Pairwise patient distances and the empirical metric-property audit.

Four measures over per-patient feature vectors (min-max normalized per
feature across the cohort): Manhattan (MAN), Euclidean (EUC), cosine (COS)
and the learned weighted sum WSD(X, Y) = sum_i w_i * |x_i - y_i|. Matrices
are dense, exactly symmetric with a zero diagonal, and can be audited for
positivity / symmetry / identity / triangle inequality.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import minmax_scale

MEASURES = ("MAN", "EUC", "COS", "WSD")

_MATRIX_SYMMETRY_TOL = 1e-12
_TRIANGLE_TOL = 1e-12
DEFAULT_TRIANGLE_TRIPLES = 1_000_000


@dataclass
class DistanceMatrix:
    values: np.ndarray
    measure: str
    ids: tuple[str, ...]
    normalization: dict | None = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if len(self.ids) != v.shape[0]:
            raise ValueError("one id per row required")
        if np.abs(np.diag(v)).max(initial=0.0) > _MATRIX_SYMMETRY_TOL:
            raise ValueError("diagonal must be zero")
        if np.abs(v - v.T).max(initial=0.0) > _MATRIX_SYMMETRY_TOL:
            raise ValueError("matrix must be symmetric")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def pair_distance(x, y, measure: str, weights=None) -> float:
    """Distance between two (already normalized) feature vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal dimensions")
    if measure == "MAN":
        return float(np.abs(x - y).sum())
    if measure == "EUC":
        return float(np.sqrt(((x - y) ** 2).sum()))
    if measure == "COS":
        nx = float(np.sqrt(x @ x))
        ny = float(np.sqrt(y @ y))
        if nx == 0.0 and ny == 0.0:
            return 0.0
        if nx == 0.0 or ny == 0.0:
            warnings.warn("cosine distance against a zero vector, defined as 1", stacklevel=2)
            return 1.0
        return float(1.0 - (x @ y) / (nx * ny))
    if measure == "WSD":
        if weights is None:
            raise ValueError("WSD requires weights")
        weights = np.asarray(weights, dtype=float)
        if weights.shape != x.shape:
            raise ValueError("one weight per variable required")
        return float(np.abs(x - y) @ weights)
    raise ValueError(f"unknown measure {measure!r}")


def distance_matrix(
    features: np.ndarray,
    measure: str,
    ids,
    weights=None,
    normalize: bool = True,
) -> DistanceMatrix:
    """All-pairs distance matrix over per-patient features.

    When ``normalize`` is set, each feature is min-max scaled across
    patients first and the parameters are recorded on the matrix.
    """
    X = np.asarray(features, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 patients")
    normalization = None
    if normalize:
        X, lo, hi = minmax_scale(X)
        normalization = {"min": lo.tolist(), "max": hi.tolist()}

    n = X.shape[0]
    D = np.zeros((n, n))
    if measure == "COS":
        norms = np.sqrt((X ** 2).sum(axis=1))
        if np.any(norms == 0.0):
            warnings.warn("cosine distance against a zero vector, defined as 1", stacklevel=2)
    if measure == "WSD":
        if weights is None:
            raise ValueError("WSD requires weights")
        weights = np.asarray(weights, dtype=float)

    for i in range(n - 1):
        rest = X[i + 1:]
        if measure == "MAN":
            row = np.abs(X[i] - rest).sum(axis=1)
        elif measure == "EUC":
            row = np.sqrt(((X[i] - rest) ** 2).sum(axis=1))
        elif measure == "WSD":
            row = np.abs(X[i] - rest) @ weights
        elif measure == "COS":
            rest_norms = norms[i + 1:]
            both_zero = (norms[i] == 0.0) & (rest_norms == 0.0)
            either_zero = (norms[i] == 0.0) | (rest_norms == 0.0)
            safe = np.where(either_zero, 1.0, norms[i] * rest_norms)
            row = 1.0 - (rest @ X[i]) / safe
            row = np.where(both_zero, 0.0, np.where(either_zero, 1.0, row))
        else:
            raise ValueError(f"unknown measure {measure!r}")
        D[i, i + 1:] = row
        D[i + 1:, i] = row
    return DistanceMatrix(D, measure, tuple(ids), normalization)


def matrix_from_points(points: np.ndarray, ids, measure: str = "EMB") -> DistanceMatrix:
    """Euclidean distance matrix of embedded coordinates."""
    P = np.asarray(points, dtype=float)
    n = P.shape[0]
    D = np.zeros((n, n))
    for i in range(n - 1):
        row = np.sqrt(((P[i] - P[i + 1:]) ** 2).sum(axis=1))
        D[i, i + 1:] = row
        D[i + 1:, i] = row
    return DistanceMatrix(D, measure, tuple(ids))


@dataclass
class MetricAudit:
    measure: str
    n: int
    positivity_pct: float
    symmetry_pct: float
    identity_pct: float
    triangle_pct: float
    max_violation: float
    triples_checked: int
    exhaustive: bool
    violation_bands: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "n": self.n,
            "positivity_pct": self.positivity_pct,
            "symmetry_pct": self.symmetry_pct,
            "identity_pct": self.identity_pct,
            "triangle_pct": self.triangle_pct,
            "max_violation": self.max_violation,
            "triples_checked": self.triples_checked,
            "exhaustive": self.exhaustive,
            "violation_bands": self.violation_bands,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _violation_bands(violations: np.ndarray) -> dict[str, int]:
    bands: dict[str, int] = {}
    if violations.size == 0:
        return bands
    exponents = np.floor(np.log10(violations)).astype(int)
    for e in sorted(set(exponents.tolist())):
        bands[f"1e{e:+03d} to 1e{e + 1:+03d}"] = int((exponents == e).sum())
    return bands


def audit_metric(
    matrix: DistanceMatrix, triples: int = DEFAULT_TRIANGLE_TRIPLES, seed: int = 0
) -> MetricAudit:
    """Empirical check of the four distance axioms.

    Positivity, symmetry and identity are exhaustive; the triangle
    inequality is checked on all ordered triples when n^3 fits the budget,
    otherwise on seeded uniform triples.
    """
    D = matrix.values
    n = matrix.n
    off = ~np.eye(n, dtype=bool)
    positivity = 100.0 * float((D[off] >= 0.0).mean()) if n > 1 else 100.0
    iu = np.triu_indices(n, k=1)
    symmetry = (
        100.0 * float((np.abs(D[iu] - D.T[iu]) <= _MATRIX_SYMMETRY_TOL).mean())
        if n > 1 else 100.0
    )
    identity = 100.0 * float((np.abs(np.diag(D)) <= _MATRIX_SYMMETRY_TOL).mean())

    exhaustive = n ** 3 <= triples
    if exhaustive:
        checked = n ** 3
        excess = []
        for a in range(n):
            # d(a,c) - d(a,b) - d(b,c) over all (b, c)
            diff = D[a][None, :] - D[a][:, None] - D
            excess.append(diff)
        excess = np.concatenate([e.ravel() for e in excess])
    else:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n, size=(triples, 3))
        a, b, c = idx[:, 0], idx[:, 1], idx[:, 2]
        excess = D[a, c] - D[a, b] - D[b, c]
        checked = triples

    violations = excess[excess > _TRIANGLE_TOL]
    triangle_pct = 100.0 * (1.0 - violations.size / checked)
    max_violation = float(violations.max()) if violations.size else 0.0

    return MetricAudit(
        measure=matrix.measure,
        n=n,
        positivity_pct=positivity,
        symmetry_pct=symmetry,
        identity_pct=identity,
        triangle_pct=triangle_pct,
        max_violation=max_violation,
        triples_checked=checked,
        exhaustive=exhaustive,
        violation_bands=_violation_bands(violations),
    )


def save_matrix_bin(matrix: DistanceMatrix, path) -> None:
    """Dense binary dump: u32 n, u32 tag length, ascii tag, f64-LE row-major."""
    tag = matrix.measure.encode("ascii")
    with open(path, "wb") as handle:
        handle.write(struct.pack("<II", matrix.n, len(tag)))
        handle.write(tag)
        handle.write(matrix.values.astype("<f8").tobytes(order="C"))


def load_matrix_bin(path, ids=None) -> DistanceMatrix:
    with open(path, "rb") as handle:
        n, tag_len = struct.unpack("<II", handle.read(8))
        tag = handle.read(tag_len).decode("ascii")
        data = np.frombuffer(handle.read(n * n * 8), dtype="<f8").reshape(n, n)
    if ids is None:
        ids = tuple(str(i) for i in range(n))
    return DistanceMatrix(np.array(data, dtype=float), tag, tuple(ids))


def save_matrix_csv(matrix: DistanceMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("patient_id," + ",".join(matrix.ids) + "\n")
        for pid, row in zip(matrix.ids, matrix.values):
            handle.write(pid + "," + ",".join(repr(float(v)) for v in row) + "\n")
