"""Fit per-patient sigmoid curves and extract the seven progression features.

The curve score(x) = b/(1 + e^{m(x-a)}) + c interpolates between sparse,
unsynchronized visits, so features anchored at fixed calendar times (the
one-year score, the six-month percentage decline, D50) are well defined
for every patient even when no visit lands there.
"""

import numpy as np

from progclust.cohort import apply_exclusions
from progclust.features import FEATURE_NAMES, compute_features
from progclust.sigmoid import eval_sigmoid, fit_cohort
from progclust.synth import generate_cohort, three_cluster_spec

sequences, labels = generate_cohort(three_cluster_spec(n_patients=60, seed=7))
cohort, _ = apply_exclusions(sequences)

fits = fit_cohort(cohort, restarts=16, seed=0)
rmses = np.array([f.rmse for f in fits.values()])
print(f"fitted {len(fits)} sequences: median RMSE {np.median(rmses):.2f} points, "
      f"{(rmses < 2).mean() * 100:.0f}% below 2 points")

seq = cohort[0]
fit = fits[seq.patient_id]
print(f"\npatient {seq.patient_id} ({labels[seq.patient_id]}): "
      f"b={fit.b:.1f} m={fit.m:.4f} a={fit.a:.0f} c={fit.c:.1f} rmse={fit.rmse:.2f}")
print("  day    observed  fitted")
for day, score in zip(seq.days, seq.scores):
    print(f"  {day:4d}   {score:5d}     {eval_sigmoid(fit, float(day)):6.1f}")

features = compute_features(cohort, fits)
matrix = np.vstack([f.as_array() for f in features])
print("\nfeature summary over the cohort:")
for name, column in zip(FEATURE_NAMES, matrix.T):
    print(f"  {name:15s} min={column.min():9.3f}  median={np.median(column):9.3f}  "
          f"max={column.max():9.3f}")

print("\nD50 by planted archetype (days to half score):")
for label in ("slow", "medium", "fast"):
    values = [f.d50 for f, s in zip(features, cohort) if labels[s.patient_id] == label]
    print(f"  {label:7s} median {np.median(values):6.0f}")
