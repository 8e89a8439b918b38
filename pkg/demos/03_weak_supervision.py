"""Learn a pairwise distance from weak supervision.

Each descriptive variable (an absolute feature difference over a patient
pair) votes through its quartiles: below Q1 the pair looks alike (T),
above Q3 it looks different (S), in between the function abstains (U).
An EM-fitted generative model estimates each function's accuracy without
ground truth and aggregates the votes; a linear max-margin classifier on
the decided pairs then yields one weight per variable, giving the distance
WSD(X, Y) = sum_i w_i |x_i - y_i|.
"""

import numpy as np

from progclust.cohort import apply_exclusions
from progclust.features import compute_features, minmax_normalize, pairwise_table, spearman_filter
from progclust.sigmoid import fit_cohort
from progclust.synth import generate_cohort, three_cluster_spec
from progclust.weaksup import (
    LABEL_S,
    LABEL_T,
    LABEL_U,
    apply_labeling_functions,
    fit_label_model,
    infer_labels,
    train_wsd,
)

sequences, _ = generate_cohort(three_cluster_spec(n_patients=80, seed=11))
cohort, _ = apply_exclusions(sequences)
fits = fit_cohort(cohort, seed=0)
features = compute_features(cohort, fits)

table = minmax_normalize(pairwise_table(features))
print(f"{len(features)} patients -> {table.n_pairs} pairs x {len(table.columns)} variables")

retained = spearman_filter(table, threshold=0.7)
table = table.select_columns(retained)
print(f"Spearman filter (|rho| > 0.7) retains: {', '.join(table.columns)}")

votes = apply_labeling_functions(table)
for j, name in enumerate(table.columns):
    column = votes.votes[:, j]
    print(f"  {name:32s} T={np.mean(column == LABEL_T):.2f} "
          f"S={np.mean(column == LABEL_S):.2f} U={np.mean(column == LABEL_U):.2f}")

model = fit_label_model(votes)
print(f"\nlabel model converged in {model.n_iter} EM iterations, "
      f"prior P(T)={model.prior:.3f}")
for name, acc, prop in zip(table.columns, model.accuracy, model.propensity):
    print(f"  {name:32s} accuracy={acc:.3f} propensity={prop:.3f}")

labels, posterior = infer_labels(model, votes)
counts = {code: int((labels == code).sum()) for code in (LABEL_T, LABEL_S, LABEL_U)}
print(f"\nfinal labels: T={counts[LABEL_T]} S={counts[LABEL_S]} U={counts[LABEL_U]} "
      f"(U pairs are dropped from training)")

wsd = train_wsd(table, labels)
print(f"\nWSD weights (positive = separating influence), "
      f"gap {wsd.duality_gap:.1e} after {wsd.n_passes} passes:")
for name, weight in sorted(zip(table.columns, wsd.weights), key=lambda kv: -abs(kv[1])):
    print(f"  {name:32s} {weight:+8.3f}")
