"""2-D manifold projection of a precomputed distance matrix (UMAP-style).

Pipeline: k-nearest neighbors from the matrix; per-point bandwidths by
bisection so each fuzzy neighborhood has cardinality log2(k); fuzzy union
of the directed graph; stochastic gradient layout under the low-dimensional
kernel 1 / (1 + a * r^(2b)).

Everything is keyed off per-point RNG streams derived from (seed,
patient_id) and a canonical internal patient order, so embeddings are
bitwise reproducible and equivariant to input reordering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from .seeds import derive_seed, rng_for

SMOOTH_K_TOL = 1e-8
BANDWIDTH_ITER = 64
GRADIENT_CLIP = 4.0
REPULSION_EPS = 0.001
INIT_RANGE = 10.0


@dataclass(frozen=True)
class EmbeddingParams:
    n_neighbors: int = 15
    n_components: int = 2
    min_dist: float = 0.1
    n_epochs: int = 500
    negative_samples: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_components != 2:
            raise ValueError("only 2-D output is supported")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.min_dist <= 0:
            raise ValueError("min_dist must be > 0")


@dataclass
class Embedding:
    coords: np.ndarray
    params: EmbeddingParams
    ids: tuple[str, ...]


def find_kernel_params(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares (a, b) so 1/(1+a r^(2b)) tracks the offset exponential."""

    def kernel(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(kernel, xv, yv)
    return float(a), float(b)


def _knn_from_matrix(D: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    n = D.shape[0]
    indices = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    for i in range(n):
        order = np.argsort(D[i], kind="stable")
        order = order[order != i][:k]
        indices[i] = order
        dists[i] = D[i, order]
    return indices, dists


def _smooth_bandwidths(knn_dists: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """rho = nearest-neighbor distance; sigma solves the log2(k) cardinality
    equation by bisection."""
    target = np.log2(k)
    n = knn_dists.shape[0]
    rho = knn_dists[:, 0].copy()
    sigma = np.empty(n)
    for i in range(n):
        shifted = np.maximum(knn_dists[i] - rho[i], 0.0)
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(BANDWIDTH_ITER):
            psum = np.exp(-shifted / mid).sum()
            if abs(psum - target) < SMOOTH_K_TOL:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = max(mid, 1e-12)
    return rho, sigma


def fuzzy_graph(D: np.ndarray, k: int) -> np.ndarray:
    """Symmetrized membership matrix W = A + A^T - A o A^T, entries in [0, 1]."""
    n = D.shape[0]
    indices, dists = _knn_from_matrix(D, k)
    rho, sigma = _smooth_bandwidths(dists, k)
    A = np.zeros((n, n))
    for i in range(n):
        A[i, indices[i]] = np.exp(-np.maximum(dists[i] - rho[i], 0.0) / sigma[i])
    return A + A.T - A * A.T


def _connected_components(adjacency: np.ndarray) -> int:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            for nbr in np.flatnonzero(adjacency[node] > 0.0):
                if not seen[nbr]:
                    seen[nbr] = True
                    stack.append(int(nbr))
    return components


@njit(cache=True)
def _splitmix_next(state):  # pragma: no cover
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _init_coords(states, n):  # pragma: no cover
    coords = np.empty((n, 2))
    for i in range(n):
        for d in range(2):
            states[i], z = _splitmix_next(states[i])
            u = (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            coords[i, d] = u * 2.0 * INIT_RANGE - INIT_RANGE
    return coords


@njit(cache=True)
def _sgd_layout(coords, head, tail, epochs_per_sample, states,
                n_epochs, negative_samples, a, b):  # pragma: no cover
    n = coords.shape[0]
    n_edges = head.shape[0]
    epoch_of_next = epochs_per_sample.copy()
    eps_neg = epochs_per_sample / negative_samples
    epoch_of_next_neg = eps_neg.copy()

    for epoch in range(n_epochs):
        alpha = 1.0 - epoch / n_epochs
        for e in range(n_edges):
            if epoch_of_next[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            dx = coords[i, 0] - coords[j, 0]
            dy = coords[i, 1] - coords[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2 ** b + 1.0)
                gx = coeff * dx
                gy = coeff * dy
                if gx > GRADIENT_CLIP:
                    gx = GRADIENT_CLIP
                elif gx < -GRADIENT_CLIP:
                    gx = -GRADIENT_CLIP
                if gy > GRADIENT_CLIP:
                    gy = GRADIENT_CLIP
                elif gy < -GRADIENT_CLIP:
                    gy = -GRADIENT_CLIP
                coords[i, 0] += alpha * gx
                coords[i, 1] += alpha * gy
                coords[j, 0] -= alpha * gx
                coords[j, 1] -= alpha * gy
            epoch_of_next[e] += epochs_per_sample[e]

            n_neg = int((epoch - epoch_of_next_neg[e]) / eps_neg[e])
            for _ in range(n_neg):
                states[i], z = _splitmix_next(states[i])
                t = int(z % np.uint64(n))
                if t == i:
                    continue
                dx = coords[i, 0] - coords[t, 0]
                dy = coords[i, 1] - coords[t, 1]
                d2 = dx * dx + dy * dy
                if d2 > 0.0:
                    coeff = (2.0 * b) / ((REPULSION_EPS + d2) * (a * d2 ** b + 1.0))
                    gx = coeff * dx
                    gy = coeff * dy
                else:
                    gx = GRADIENT_CLIP
                    gy = GRADIENT_CLIP
                if gx > GRADIENT_CLIP:
                    gx = GRADIENT_CLIP
                elif gx < -GRADIENT_CLIP:
                    gx = -GRADIENT_CLIP
                if gy > GRADIENT_CLIP:
                    gy = GRADIENT_CLIP
                elif gy < -GRADIENT_CLIP:
                    gy = -GRADIENT_CLIP
                coords[i, 0] += alpha * gx
                coords[i, 1] += alpha * gy
            epoch_of_next_neg[e] += n_neg * eps_neg[e]
    return coords


def embed(matrix, params: EmbeddingParams) -> Embedding:
    """Project a distance matrix to 2-D coordinates.

    Deterministic for a given (matrix, params): per-point streams seed the
    initialization and negative sampling, the edge schedule is a single
    seeded shuffle, and the layout loop is single threaded.
    """
    ids = tuple(matrix.ids)
    n = len(ids)
    k = params.n_neighbors
    if n <= k:
        raise ValueError(f"n_neighbors={k} requires more than {k} points, got {n}")

    order = np.argsort(np.asarray(ids, dtype=object), kind="stable")
    D = matrix.values[np.ix_(order, order)]
    sorted_ids = [ids[i] for i in order]

    W = fuzzy_graph(D, k)
    if _connected_components(W) > 1:
        warnings.warn("kNN graph is disconnected; embedding proceeds per component",
                      stacklevel=2)

    head, tail = np.nonzero(W > 0.0)
    weights = W[head, tail]
    epochs_per_sample = weights.max() / weights
    shuffle = rng_for(params.seed, "edge-order").permutation(head.size)
    head = head[shuffle].astype(np.int64)
    tail = tail[shuffle].astype(np.int64)
    epochs_per_sample = epochs_per_sample[shuffle]

    states = np.array(
        [derive_seed(params.seed, "point", pid) for pid in sorted_ids], dtype=np.uint64
    )
    a, b = find_kernel_params(params.min_dist)

    coords = _init_coords(states, n)
    coords = _sgd_layout(
        coords, head, tail, epochs_per_sample, states,
        params.n_epochs, params.negative_samples, a, b,
    )

    out = np.empty((n, 2))
    out[order] = coords
    return Embedding(out, params, ids)


def write_embedding_csv(embedding: Embedding, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("patient_id,u1,u2\n")
        for pid, (u1, u2) in zip(embedding.ids, embedding.coords):
            handle.write(f"{pid},{float(u1)!r},{float(u2)!r}\n")
