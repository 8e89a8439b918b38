"""Four-parameter sigmoid fits for score trajectories.

The trajectory model is

    score(x) = b / (1 + exp(m * (x - a))) + c

with x in days since the first visit. For a declining patient, b is the
total drop, c the late plateau, a the inflection day and m the steepness.
Fitting is damped (Levenberg-Marquardt style) least squares with an
analytic Jacobian and multiplicative damping adaptation; several seeded
restarts guard against the multimodality of the (m, a) landscape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeds import derive_seed, rng_for

MAX_ITERATIONS = 200
COST_RTOL = 1e-10
DEFAULT_RESTARTS = 16
DEFAULT_HORIZON_DAYS = 3650.0
HALF_SCORE = 24.0

FITS_HEADER = "patient_id,b,m,a,c,rmse,converged"


@dataclass(frozen=True)
class SigmoidFit:
    """Fitted curve parameters plus fit diagnostics."""

    b: float
    m: float
    a: float
    c: float
    rmse: float
    converged: bool
    restart_index: int

    def params(self) -> np.ndarray:
        return np.array([self.b, self.m, self.a, self.c], dtype=float)


def _curve(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    b, m, a, c = theta
    u = m * (x - a)
    # logistic 1/(1+e^u) on the numerically safe branch of exp
    e = np.exp(-np.abs(u))
    s = np.where(u >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return b * s + c


def _jacobian(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    b, m, a, _ = theta
    u = m * (x - a)
    e = np.exp(-np.abs(u))
    s = np.where(u >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    sp = s * (1.0 - s)  # e^u / (1+e^u)^2, stable
    jac = np.empty((x.size, 4))
    jac[:, 0] = s
    jac[:, 1] = -b * (x - a) * sp
    jac[:, 2] = b * m * sp
    jac[:, 3] = 1.0
    return jac


def eval_sigmoid(fit: SigmoidFit, day) -> float | np.ndarray:
    """Evaluate the fitted curve at ``day`` (scalar or array); always finite."""
    x = np.asarray(day, dtype=float)
    value = _curve(fit.params(), np.atleast_1d(x))
    return float(value[0]) if x.ndim == 0 else value


def _damped_least_squares(days, scores, theta0):
    """Minimize sum of squared residuals from ``theta0``.

    Returns (theta, rmse, converged). converged means the relative cost
    change dropped below COST_RTOL (including the no-improving-step case,
    where the change is zero); only exhausting MAX_ITERATIONS reports False.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    residual = _curve(theta, days) - scores
    cost = float(residual @ residual)
    lam = 1e-3
    converged = False

    for _ in range(MAX_ITERATIONS):
        if cost == 0.0:
            converged = True
            break
        jac = _jacobian(theta, days)
        grad = jac.T @ residual
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-12)

        new_theta = new_residual = None
        new_cost = cost
        for _ in range(32):
            try:
                step = np.linalg.solve(hess + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = theta + step
            cand_residual = _curve(candidate, days) - scores
            cand_cost = float(cand_residual @ cand_residual)
            if np.isfinite(cand_cost) and cand_cost <= cost:
                new_theta, new_residual, new_cost = candidate, cand_residual, cand_cost
                break
            lam *= 10.0
        if new_theta is None:
            # damping exhausted: stationary to working precision
            converged = True
            break

        relative_drop = (cost - new_cost) / cost
        theta, residual, cost = new_theta, new_residual, new_cost
        lam = max(lam * 0.1, 1e-12)
        if relative_drop < COST_RTOL:
            converged = True
            break

    rmse = math.sqrt(cost / days.size)
    return theta, rmse, converged


def fit_sigmoid_xy(days, scores, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> SigmoidFit:
    """Fit the curve to (day, score) samples with seeded restarts.

    The first initialization is data driven (b = first - last score,
    c = last score, a = midpoint day, m = 0.01); the remaining restarts
    perturb it with multiplicative factors drawn uniformly from [0.5, 2].
    The lowest-RMSE fit wins.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    days = np.asarray(days, dtype=float)
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(days, kind="stable")
    days, scores = days[order], scores[order]

    if np.all(scores == scores[0]):
        # flat sequence: nothing to fit
        mid = float(days[0] + days[-1]) / 2.0
        return SigmoidFit(0.0, 0.01, mid, float(scores[0]), 0.0, True, 0)

    base = np.array(
        [scores[0] - scores[-1], 0.01, (days[0] + days[-1]) / 2.0, scores[-1]]
    )
    rng = rng_for(seed, "sigmoid-restarts")
    best = None
    for index in range(restarts):
        theta0 = base if index == 0 else base * rng.uniform(0.5, 2.0, size=4)
        theta, rmse, converged = _damped_least_squares(days, scores, theta0)
        if best is None or rmse < best.rmse:
            best = SigmoidFit(
                float(theta[0]), float(theta[1]), float(theta[2]), float(theta[3]),
                rmse, converged, index,
            )
    return best


def fit_sigmoid(seq, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> SigmoidFit:
    """Fit one patient's visit sequence."""
    days = np.array([v.day for v in seq.visits], dtype=float)
    scores = np.array([v.total_score for v in seq.visits], dtype=float)
    return fit_sigmoid_xy(days, scores, restarts=restarts, seed=seed)


def fit_cohort(sequences, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> dict:
    """Fit every sequence with a per-patient derived seed.

    Seeds are keyed by (seed, patient_id), so fits of distinct patients are
    independent and may be computed concurrently without changing results.
    """
    return {
        seq.patient_id: fit_sigmoid(
            seq, restarts=restarts, seed=derive_seed(seed, "fit", seq.patient_id)
        )
        for seq in sequences
    }


def invert_for_score(
    fit: SigmoidFit, target: float = HALF_SCORE, horizon_days: float = DEFAULT_HORIZON_DAYS
) -> float:
    """Day at which the fitted curve reaches ``target`` (D50 for target 24).

    Closed form when the curve actually crosses the target; otherwise a
    total surrogate: 0 if the curve starts at or below the target,
    ``horizon_days`` if it never reaches it on [0, horizon].
    """
    b, m, a, c = fit.b, fit.m, fit.a, fit.c
    if m != 0.0 and c < target < b + c:
        day = a + math.log(b / (target - c) - 1.0) / m
        return min(max(day, 0.0), horizon_days)
    if eval_sigmoid(fit, 0.0) <= target:
        return 0.0
    return horizon_days


def write_fits_csv(fits: dict, path) -> None:
    """Persist per-patient fits as ``patient_id,b,m,a,c,rmse,converged``."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(FITS_HEADER + "\n")
        for patient_id in sorted(fits):
            f = fits[patient_id]
            handle.write(
                f"{patient_id},{f.b!r},{f.m!r},{f.a!r},{f.c!r},{f.rmse!r},"
                f"{str(f.converged).lower()}\n"
            )
