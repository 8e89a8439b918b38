"""Run the full workflow grid and rank by survival separation.

109 workflows: {MAN, EUC, COS, WSD} x {matrix KMD/AHC, embedded KME/KMD/AHC}
x k in 2..6, plus GOM/GRO/MEY threshold baselines and HAL's DTW pipeline.
Selection mirrors the evaluation protocol: keep silhouette >= 0.5, then
log-rank max p < 0.05, and sort by the minimum pairwise log-rank statistic.
Reports (CSV tables, manifest, survival and embedding SVGs) land in the
output directory; reruns with the same seed are byte-identical.
"""

import warnings
from pathlib import Path

from progclust.pipeline import RunConfig, filter_and_rank, run
from progclust.synth import read_labels_csv, three_cluster_spec, write_synthetic_cohort
from progclust.clustering import adjusted_rand_index
import numpy as np

base = Path("runs/demo_grid")
base.mkdir(parents=True, exist_ok=True)
spec = three_cluster_spec(n_patients=150, noise_sd=1.0, seed=42)
write_synthetic_cohort(spec, base / "visits.csv", base / "outcomes.csv",
                       base / "planted_labels.csv")

config = RunConfig(seed=42)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    result = run(base / "visits.csv", base / "outcomes.csv", config, base / "report")
print(f"{len(result.results)} workflows in {result.elapsed_seconds:.1f}s "
      f"({len(result.failures)} failed, {len(result.skipped)} skipped); "
      f"reports in {base / 'report'}")

ranked, drops = filter_and_rank(result.results, config.silhouette_min, config.p_max)
print(f"\n{len(ranked)} workflows survive the silhouette >= 0.5 and p < 0.05 gates:")
print(f"{'workflow':22s} {'k':>2s} {'sizes':18s} {'silhouette':>12s} "
      f"{'max p':>10s} {'min LRS':>8s}")
for r in ranked[:12]:
    sizes = ",".join(str(s) for s in r.cluster_sizes)
    print(f"{r.name:22s} {r.k:2d} {sizes:18s} "
          f"{r.silhouette_mean:5.2f} ± {r.silhouette_std:4.2f} "
          f"{r.logrank_p_max:10.2e} {r.lrs_min:8.2f}")

labels = read_labels_csv(base / "planted_labels.csv")
truth = np.unique([labels[pid] for pid in result.artifacts.ids], return_inverse=True)[1]
print("\nagreement with the planted clusters (top ranked workflows):")
for r in ranked[:12]:
    ari = adjusted_rand_index(result.assignments[r.name].labels, truth)
    print(f"  {r.name:22s} ARI={ari:.2f}")
