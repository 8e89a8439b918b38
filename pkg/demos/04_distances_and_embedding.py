"""Distance matrices, the metric-property audit, and the 2-D embedding.

WSD is a signed-weight sum, so nothing guarantees it is a true metric;
instead of clamping, the audit measures how often each axiom holds and how
large the triangle violations are. The embedding projects any precomputed
matrix to 2-D for the k-means workflows and for visual inspection.
"""

import warnings

import numpy as np

from progclust.clustering import adjusted_rand_index, kmeans
from progclust.cohort import apply_exclusions
from progclust.distances import audit_metric, distance_matrix
from progclust.embedding import EmbeddingParams, embed
from progclust.features import compute_features, feature_matrix, minmax_normalize, pairwise_table, spearman_filter
from progclust.sigmoid import fit_cohort
from progclust.synth import generate_cohort, three_cluster_spec
from progclust.weaksup import apply_labeling_functions, fit_label_model, infer_labels, train_wsd

sequences, planted = generate_cohort(three_cluster_spec(n_patients=90, seed=3))
cohort, _ = apply_exclusions(sequences)
ids = tuple(seq.patient_id for seq in cohort)
fits = fit_cohort(cohort, seed=0)
features = compute_features(cohort, fits)

table = minmax_normalize(pairwise_table(features))
mask = spearman_filter(table)
table = table.select_columns(mask)
votes = apply_labeling_functions(table)
labels, _ = infer_labels(fit_label_model(votes), votes)
wsd = train_wsd(table, labels)

X = feature_matrix(features)[:, mask]
print("measure   positivity  symmetry  identity  triangle   max violation")
matrices = {}
for measure in ("MAN", "EUC", "COS", "WSD"):
    weights = wsd.weights if measure == "WSD" else None
    matrices[measure] = distance_matrix(X, measure, ids, weights=weights)
    audit = audit_metric(matrices[measure], triples=200_000, seed=1)
    print(f"  {measure}     {audit.positivity_pct:8.3f}% {audit.symmetry_pct:8.3f}% "
          f"{audit.identity_pct:8.3f}% {audit.triangle_pct:8.3f}%   "
          f"{audit.max_violation:.3g}")

truth = np.unique([planted[pid] for pid in ids], return_inverse=True)[1]
print("\n2-D embedding + 3-means recovery of the planted clusters:")
for measure, matrix in matrices.items():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # well-separated clusters disconnect the kNN graph
        emb = embed(matrix, EmbeddingParams(seed=5))
    asg = kmeans(emb, 3, seed=2)
    ari = adjusted_rand_index(asg.labels, truth)
    spans = emb.coords.max(axis=0) - emb.coords.min(axis=0)
    print(f"  {measure}: ARI={ari:.2f}  embedded span "
          f"({spans[0]:.1f} x {spans[1]:.1f})  sizes={sorted(asg.cluster_sizes(), reverse=True)}")
