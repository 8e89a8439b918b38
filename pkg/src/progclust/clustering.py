"""Clustering over embeddings (k-means) or precomputed matrices (PAM, AHC).

All three algorithms canonicalize patient order internally (sorted by id),
so results are invariant to input permutations, and relabel clusters by
first occurrence so assignments are stable and reportable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .seeds import rng_for

KMEANS_TOL = 1e-4
KMEANS_MAX_ITER = 300
DEFAULT_KMEANS_RESTARTS = 10
_SWAP_EPS = 1e-12


@dataclass
class Assignment:
    labels: np.ndarray
    k: int
    method: str
    objective: float | None
    ids: tuple[str, ...]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        present = np.unique(self.labels)
        if not np.array_equal(present, np.arange(self.k)):
            raise ValueError(f"labels must densely cover 0..{self.k - 1}")
        if len(self.ids) != self.labels.shape[0]:
            raise ValueError("one id per label required")

    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(int((self.labels == c).sum()) for c in range(self.k))


def densify_labels(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Map arbitrary labels onto dense 0..k-1 in order of first occurrence."""
    raw = np.asarray(raw)
    mapping: dict = {}
    out = np.empty(raw.shape[0], dtype=int)
    for i, value in enumerate(raw):
        key = value.item() if hasattr(value, "item") else value
        if key not in mapping:
            mapping[key] = len(mapping)
        out[i] = mapping[key]
    return out, len(mapping)


def _canonical_order(ids) -> np.ndarray:
    return np.argsort(np.asarray(ids, dtype=object), kind="stable")


def kmeans(embedding, k: int, seed: int = 0, restarts: int = DEFAULT_KMEANS_RESTARTS) -> Assignment:
    """k-means++ / Lloyd over embedded coordinates, best inertia of ``restarts``."""
    points = np.asarray(embedding.coords, dtype=float)
    ids = tuple(embedding.ids)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    order = _canonical_order(ids)
    P = points[order]

    best_labels, best_inertia = None, np.inf
    for restart in range(restarts):
        rng = rng_for(seed, "kmeans", restart)
        centers = _kmeanspp_init(P, k, rng)
        labels, inertia = _lloyd(P, centers, k)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia

    dense, _ = densify_labels(best_labels)
    out = np.empty(n, dtype=int)
    out[order] = dense
    return Assignment(out, k, "KME", float(best_inertia), ids)


def _kmeanspp_init(P, k, rng):
    n = P.shape[0]
    centers = np.empty((k, P.shape[1]))
    centers[0] = P[rng.integers(n)]
    d2 = ((P - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[j] = P[rng.integers(n)]
        else:
            centers[j] = P[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((P - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(P, centers, k):
    n = P.shape[0]
    labels = np.zeros(n, dtype=int)
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((P[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), labels]
        # repair empty clusters with the farthest point from its centroid
        for c in range(k):
            if not np.any(labels == c):
                far = int(point_d2.argmax())
                labels[far] = c
                point_d2[far] = 0.0
        new_centers = np.vstack([P[labels == c].mean(axis=0) for c in range(k)])
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if movement < KMEANS_TOL:
            break
    d2 = ((P[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    for c in range(k):
        if not np.any(labels == c):
            far = int(d2[np.arange(n), labels].argmax())
            labels[far] = c
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, inertia


def kmedoids(matrix, k: int, seed: int = 0) -> Assignment:
    """PAM over a precomputed matrix: greedy BUILD, then best-improvement SWAP.

    Fully deterministic (``seed`` is accepted for interface symmetry but
    unused); ties break toward the lowest patient index.
    """
    ids = tuple(matrix.ids)
    n = len(ids)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    order = _canonical_order(ids)
    D = matrix.values[np.ix_(order, order)]

    medoids = _pam_build(D, k)
    medoids, cost = _pam_swap(D, medoids)

    medoids = sorted(medoids)
    labels_c = np.argmin(D[:, medoids], axis=1)
    labels = np.empty(n, dtype=int)
    labels[order] = labels_c
    return Assignment(labels, k, "KMD", float(cost), ids)


def _pam_build(D, k):
    n = D.shape[0]
    medoids = [int(D.sum(axis=1).argmin())]
    nearest = D[medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[None, :] - D, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        best = int(gains.argmax())
        medoids.append(best)
        nearest = np.minimum(nearest, D[best])
    return medoids


def _pam_swap(D, medoids):
    n = D.shape[0]
    medoids = list(medoids)
    while True:
        med = np.array(sorted(medoids))
        dist_to_med = D[:, med]
        nearest_pos = dist_to_med.argmin(axis=1)
        d1 = dist_to_med[np.arange(n), nearest_pos]
        cost = float(d1.sum())
        if len(med) > 1:
            masked = dist_to_med.copy()
            masked[np.arange(n), nearest_pos] = np.inf
            d2 = masked.min(axis=1)
        else:
            d2 = np.full(n, np.inf)

        candidates = np.setdiff1d(np.arange(n), med)
        if candidates.size == 0:  # k == n
            return sorted(medoids), cost
        best_delta, best_swap = 0.0, None
        for pos, m in enumerate(med):
            affected = nearest_pos == pos
            DX = D[candidates]
            with_removed = np.where(affected[None, :], np.minimum(DX, d2[None, :]),
                                    np.minimum(DX, d1[None, :]))
            deltas = (with_removed - d1[None, :]).sum(axis=1)
            j = int(deltas.argmin())
            if deltas[j] < best_delta - _SWAP_EPS:
                best_delta, best_swap = float(deltas[j]), (int(m), int(candidates[j]))
        if best_swap is None:
            return sorted(medoids), cost
        out, inn = best_swap
        medoids.remove(out)
        medoids.append(inn)
        new_cost = float(D[:, sorted(medoids)].min(axis=1).sum())
        assert new_cost <= cost + 1e-9, "PAM swap increased total cost"


def ahc_linkage(matrix) -> list[tuple[tuple[str, ...], tuple[str, ...], float]]:
    """Full complete-linkage merge sequence.

    Each entry is (members_a, members_b, height) with members as sorted
    patient-id tuples; merge heights are non-decreasing. Ties break toward
    the lexicographically smallest active index pair.
    """
    ids = tuple(matrix.ids)
    n = len(ids)
    order = _canonical_order(ids)
    sorted_ids = [ids[i] for i in order]
    D = matrix.values[np.ix_(order, order)].copy()

    active = np.ones(n, dtype=bool)
    members: list[list[int]] = [[i] for i in range(n)]
    merges = []
    work = D.copy()
    np.fill_diagonal(work, np.inf)
    work[~active] = np.inf

    for _ in range(n - 1):
        idx = np.flatnonzero(active)
        sub = work[np.ix_(idx, idx)]
        iu = np.triu_indices(len(idx), k=1)
        flat = sub[iu]
        pos = int(flat.argmin())  # row-major scan = smallest (i, j) on ties
        i, j = int(idx[iu[0][pos]]), int(idx[iu[1][pos]])
        height = float(work[i, j])
        merges.append(
            (
                tuple(sorted(sorted_ids[m] for m in members[i])),
                tuple(sorted(sorted_ids[m] for m in members[j])),
                height,
            )
        )
        # Lance-Williams update for complete linkage
        new_row = np.maximum(work[i], work[j])
        work[i] = new_row
        work[:, i] = new_row
        work[i, i] = np.inf
        active[j] = False
        work[j] = np.inf
        work[:, j] = np.inf
        members[i] = members[i] + members[j]
        members[j] = []
    return merges


def ahc_complete(matrix, k: int) -> Assignment:
    """Cut the complete-linkage dendrogram at exactly k clusters."""
    ids = tuple(matrix.ids)
    n = len(ids)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    merges = ahc_linkage(matrix)

    id_index = {pid: i for i, pid in enumerate(ids)}
    raw = np.arange(n)
    height = 0.0
    for members_a, members_b, h in merges[: n - k]:
        target = min(raw[id_index[p]] for p in members_a + members_b)
        for pid in members_a + members_b:
            raw[id_index[pid]] = target
        height = h

    order = _canonical_order(ids)
    dense_c, _ = densify_labels(raw[order])
    labels = np.empty(n, dtype=int)
    labels[order] = dense_c
    return Assignment(labels, k, "AHC", height, ids)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two partitions of the same points."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("partitions must cover the same points")
    n = a.shape[0]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def write_assignments_csv(assignments: dict[str, Assignment], path) -> None:
    """Persist workflow assignments as ``workflow_id,patient_id,cluster``."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("workflow_id", "patient_id", "cluster"))
        for workflow_id in sorted(assignments):
            asg = assignments[workflow_id]
            for pid, label in zip(asg.ids, asg.labels):
                writer.writerow([workflow_id, pid, int(label)])
