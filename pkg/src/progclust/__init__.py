"""progclust: cluster patients by disease-progression similarity.

Library layout mirrors the pipeline stages: cohort parsing and exclusions,
synthetic cohorts, sigmoid fitting, feature extraction, weak-supervised
labeling and distance learning, distance matrices, 2-D embedding,
clustering, survival-based evaluation, published baselines, and the
workflow-grid runner.
"""

from .baselines import dtw, dtw_independent, gom_strata, gro_strata, hal_workflow, mey_strata
from .clustering import Assignment, adjusted_rand_index, ahc_complete, kmeans, kmedoids
from .cohort import (
    ExclusionReport,
    PatientOutcome,
    Sequence,
    VisitRecord,
    apply_exclusions,
    parse_cohort,
)
from .distances import DistanceMatrix, audit_metric, distance_matrix, pair_distance
from .embedding import Embedding, EmbeddingParams, embed
from .evaluation import (
    LogRankResult,
    SurvivalCurve,
    chi2_sf_1df,
    kaplan_meier,
    logrank_pair,
    silhouette,
    survival_separation,
)
from .features import (
    FeatureVector,
    PairTable,
    minmax_normalize,
    pairwise_table,
    sequence_features,
    spearman_filter,
)
from .pipeline import (
    RunConfig,
    WorkflowResult,
    WorkflowSpec,
    build_artifacts,
    enumerate_grid,
    filter_and_rank,
    render_reports,
    run,
    run_all,
    run_workflow,
)
from .sigmoid import SigmoidFit, eval_sigmoid, fit_sigmoid, invert_for_score
from .synth import ClusterArchetype, SynthSpec, generate_cohort, three_cluster_spec
from .weaksup import (
    LabelMatrix,
    LabelModel,
    WsdWeights,
    apply_labeling_functions,
    fit_label_model,
    infer_labels,
    train_wsd,
)

__version__ = "0.1.0"
