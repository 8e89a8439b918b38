"""Weak supervision of patient pairs: quartile votes, EM label model, WSD weights.

Each retained descriptive variable becomes a labeling function that votes
"grouped together" (T) when the pair's value sits below the first quartile,
"separated" (S) above the third, and abstains (U) in between. A naive
generative model - latent pair label Y, per-function abstention propensity
and accuracy, functions conditionally independent given Y - is fitted by
EM, votes are aggregated into posterior labels, and a linear max-margin
classifier trained on the labeled pairs yields one weight per variable.
The weak-supervised distance is then WSD(X, Y) = sum_i w_i * |x_i - y_i|.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .features import PairTable

LABEL_T = 1  # grouped together
LABEL_S = -1  # separated
LABEL_U = 0  # undetermined / abstain

_LOG_FLOOR = 1e-300
DEFAULT_SVM_C = 1.0
DEFAULT_GAP_TOL = 1e-6
MAX_PASSES = 100_000


def label_code_to_text(code: int) -> str:
    return {LABEL_T: "T", LABEL_S: "S", LABEL_U: "U"}[int(code)]


@dataclass
class LabelMatrix:
    """Per-pair votes of every labeling function plus the quartile cuts."""

    votes: np.ndarray  # int8, (n_pairs, n_functions)
    q1: np.ndarray
    q3: np.ndarray
    columns: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]


def apply_labeling_functions(table: PairTable) -> LabelMatrix:
    """Quartile votes over a normalized, filtered pair table.

    Strict inequalities: a value exactly at a quartile abstains. A constant
    column abstains everywhere (warned).
    """
    values = table.values
    q1 = np.quantile(values, 0.25, axis=0)
    q3 = np.quantile(values, 0.75, axis=0)
    votes = np.where(
        values < q1, LABEL_T, np.where(values > q3, LABEL_S, LABEL_U)
    ).astype(np.int8)
    constant = values.max(axis=0) == values.min(axis=0)
    for j in np.flatnonzero(constant):
        warnings.warn(
            f"labeling function {table.columns[j]} abstains everywhere "
            f"(constant variable)", stacklevel=2,
        )
    return LabelMatrix(votes, q1, q3, table.columns, table.pairs)


@dataclass
class LabelModel:
    """Naive generative vote model: prior, per-function propensity and accuracy."""

    prior: float
    propensity: np.ndarray
    accuracy: np.ndarray
    log_likelihood: tuple[float, ...]
    n_iter: int
    converged: bool


def _vote_log_probs(votes, prior, propensity, accuracy):
    """Per-pair joint log probabilities under Y=T and Y=S, plus posterior."""
    n, k = votes.shape
    log_t = np.full(n, np.log(max(prior, _LOG_FLOOR)))
    log_s = np.full(n, np.log(max(1.0 - prior, _LOG_FLOOR)))
    for j in range(k):
        v = votes[:, j]
        p, a = propensity[j], accuracy[j]
        lp_match = np.log(max(p * a, _LOG_FLOOR))
        lp_flip = np.log(max(p * (1.0 - a), _LOG_FLOOR))
        lp_abstain = np.log(max(1.0 - p, _LOG_FLOOR))
        log_t += np.where(v == LABEL_T, lp_match, np.where(v == LABEL_S, lp_flip, lp_abstain))
        log_s += np.where(v == LABEL_T, lp_flip, np.where(v == LABEL_S, lp_match, lp_abstain))
    peak = np.maximum(log_t, log_s)
    ll = float(np.sum(peak + np.log(np.exp(log_t - peak) + np.exp(log_s - peak))))
    posterior = 1.0 / (1.0 + np.exp(np.clip(log_s - log_t, -709, 709)))
    return posterior, ll


def fit_label_model(lm: LabelMatrix, max_iter: int = 100, tol: float = 1e-6) -> LabelModel:
    """EM fit of the generative vote model.

    Abstention is label independent, so propensities stay at their empirical
    rates; the E step computes pair posteriors from non-abstaining votes and
    the M step updates the prior and accuracies in closed form. After
    convergence the label-switching symmetry is resolved toward accuracies
    averaging at least 0.5.
    """
    votes = lm.votes
    if votes.size == 0 or np.all(votes == LABEL_U):
        raise ValueError("no signal: every labeling function abstained on every pair")

    non_abstain = votes != LABEL_U
    counts = non_abstain.sum(axis=0)
    propensity = counts / votes.shape[0]

    prior = 0.5
    accuracy = np.full(votes.shape[1], 0.7)
    trace: list[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        posterior, ll = _vote_log_probs(votes, prior, propensity, accuracy)
        if trace:
            assert ll >= trace[-1] - 1e-9 * max(1.0, abs(trace[-1])), (
                f"EM log-likelihood decreased: {trace[-1]} -> {ll}"
            )
        trace.append(ll)

        new_prior = float(posterior.mean())
        matches = (
            (votes == LABEL_T) * posterior[:, None]
            + (votes == LABEL_S) * (1.0 - posterior)[:, None]
        ).sum(axis=0)
        new_accuracy = np.where(counts > 0, matches / np.maximum(counts, 1), accuracy)

        delta = max(abs(new_prior - prior), float(np.max(np.abs(new_accuracy - accuracy))))
        prior, accuracy = new_prior, new_accuracy
        if delta < tol:
            converged = True
            break

    _, final_ll = _vote_log_probs(votes, prior, propensity, accuracy)
    trace.append(final_ll)

    if accuracy.mean() < 0.5:  # label-switching symmetry: flip Y
        accuracy = 1.0 - accuracy
        prior = 1.0 - prior

    return LabelModel(prior, propensity, accuracy, tuple(trace), iterations, converged)


def model_log_likelihood(lm: LabelMatrix, prior, propensity, accuracy) -> float:
    """Joint log likelihood of the votes for arbitrary parameters."""
    _, ll = _vote_log_probs(lm.votes, float(prior), np.asarray(propensity, float),
                            np.asarray(accuracy, float))
    return ll


def infer_labels(model: LabelModel, lm: LabelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Posterior pair labels: T above 0.5, S below, U at exactly 0.5 or all-abstain."""
    posterior, _ = _vote_log_probs(lm.votes, model.prior, model.propensity, model.accuracy)
    labels = np.where(
        posterior > 0.5, LABEL_T, np.where(posterior < 0.5, LABEL_S, LABEL_U)
    ).astype(np.int8)
    labels[(lm.votes == LABEL_U).all(axis=1)] = LABEL_U
    return labels, posterior


@njit(cache=True)
def _dual_cd(X, y, C, tol, max_passes):  # pragma: no cover - exercised via train_wsd
    n, d = X.shape
    w = np.zeros(d)
    alpha = np.zeros(n)
    q = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += X[i, k] * X[i, k]
        q[i] = s

    gap = np.inf
    passes = 0
    while passes < max_passes:
        passes += 1
        for i in range(n):
            margin = 0.0
            for k in range(d):
                margin += w[k] * X[i, k]
            g = y[i] * margin - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0 and q[i] > 0.0:
                old = alpha[i]
                new = alpha[i] - g / q[i]
                if new < 0.0:
                    new = 0.0
                elif new > C:
                    new = C
                alpha[i] = new
                delta = (new - old) * y[i]
                for k in range(d):
                    w[k] += delta * X[i, k]
        # duality gap: primal - dual with w(alpha)
        wsq = 0.0
        for k in range(d):
            wsq += w[k] * w[k]
        hinge = 0.0
        for i in range(n):
            margin = 0.0
            for k in range(d):
                margin += w[k] * X[i, k]
            slack = 1.0 - y[i] * margin
            if slack > 0.0:
                hinge += slack
        primal = 0.5 * wsq + C * hinge
        dual = alpha.sum() - 0.5 * wsq
        gap = primal - dual
        if gap < tol:
            break
    return w, alpha, passes, gap, primal


@dataclass
class WsdWeights:
    """Linear classifier weights reused as descriptive-variable weights."""

    weights: np.ndarray
    intercept: float
    columns: tuple[str, ...]
    c: float
    n_passes: int
    duality_gap: float
    objective: float
    converged: bool


def train_wsd(
    table: PairTable,
    labels: np.ndarray,
    c: float = DEFAULT_SVM_C,
    gap_tol: float = DEFAULT_GAP_TOL,
    max_passes: int = MAX_PASSES,
) -> WsdWeights:
    """Train the hinge-loss linear classifier on T/S pairs (U pairs dropped).

    Classes are S -> +1 and T -> -1, so a positive weight marks a variable
    whose large differences argue for separating a pair. Solved by
    deterministic coordinate descent on the dual (fixed sweep order) until
    the duality gap falls below ``gap_tol``; the intercept is fitted through
    an appended constant feature and excluded from the distance.
    """
    labels = np.asarray(labels)
    mask = labels != LABEL_U
    if not mask.any():
        raise ValueError("no labeled pairs to train on")
    X = table.values[mask]
    y = np.where(labels[mask] == LABEL_S, 1.0, -1.0)
    if np.unique(y).size < 2:
        raise ValueError("training requires both T and S pairs")

    augmented = np.hstack([X, np.ones((X.shape[0], 1))])
    w, _, passes, gap, primal = _dual_cd(
        np.ascontiguousarray(augmented, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(c), float(gap_tol), int(max_passes),
    )
    converged = gap < gap_tol
    if not converged:
        warnings.warn(
            f"dual coordinate descent stopped at pass cap with duality gap {gap:.3e}",
            stacklevel=2,
        )
    return WsdWeights(
        weights=w[:-1].copy(),
        intercept=float(w[-1]),
        columns=table.columns,
        c=float(c),
        n_passes=int(passes),
        duality_gap=float(gap),
        objective=float(primal),
        converged=converged,
    )


def write_labels_csv(lm: LabelMatrix, labels: np.ndarray, posterior: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("patient_a,patient_b,label,posterior\n")
        for (a, b), code, post in zip(lm.pairs, labels, posterior):
            handle.write(f"{a},{b},{label_code_to_text(code)},{float(post)!r}\n")


def save_wsd_weights(wsd: WsdWeights, path) -> None:
    payload = {
        "variables": list(wsd.columns),
        "weights": {name: float(w) for name, w in zip(wsd.columns, wsd.weights)},
        "intercept": wsd.intercept,
        "C": wsd.c,
        "passes": wsd.n_passes,
        "duality_gap": wsd.duality_gap,
        "objective": wsd.objective,
        "converged": wsd.converged,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
