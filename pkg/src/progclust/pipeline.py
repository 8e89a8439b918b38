"""Workflow-grid runner: shared artifacts, per-cell execution, ranking, reports.

A workflow is one grid cell: distance measure x optional 2-D embedding x
clustering method x cluster count. The proposed grid is 4 measures x
(2 matrix methods + 3 embedded methods) x k in 2..6 = 100 cells, plus 9
baseline workflows (GOM_2, GRO_4, MEY_3, HAL[_UMAP]_AHC_{4,5,6}). Expensive
artifacts (fits, tables, label model, weights, matrices, embeddings) are
computed once and shared; every stochastic step draws from a stream derived
from the run seed, so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from .clustering import Assignment, ahc_complete, kmeans, kmedoids, write_assignments_csv
from .cohort import ExclusionReport, apply_exclusions, parse_cohort
from .distances import (
    DistanceMatrix,
    audit_metric,
    distance_matrix,
    matrix_from_points,
    save_matrix_bin,
)
from .embedding import Embedding, EmbeddingParams, embed, write_embedding_csv
from .evaluation import SurvivalCurve, kaplan_meier, silhouette, survival_separation
from .features import (
    FeatureVector,
    PairTable,
    compute_features,
    feature_matrix,
    minmax_normalize,
    pairwise_table,
    spearman_filter,
    write_features_csv,
    write_pairs_csv,
)
from .seeds import derive_seed
from .sigmoid import fit_cohort, write_fits_csv
from .svgplot import scatter_svg, survival_svg
from .weaksup import (
    LabelMatrix,
    LabelModel,
    WsdWeights,
    apply_labeling_functions,
    fit_label_model,
    infer_labels,
    save_wsd_weights,
    train_wsd,
    write_labels_csv,
)

RESULTS_HEADER = "workflow,k,cluster_sizes,silhouette_mean,silhouette_std,logrank_p_max,lrs_min"

MATRIX_METHODS = ("KMD", "AHC")
EMBED_METHODS = ("KME", "KMD", "AHC")
THRESHOLD_BASELINES = (("GOM", 2), ("GRO", 4), ("MEY", 3))
HAL_KS = (4, 5, 6)


@dataclass
class RunConfig:
    """Every tunable of a run; round-trips through a key=value text file."""

    seed: int = 42
    restarts: int = 16
    horizon_days: float = 3650.0
    spearman_threshold: float = 0.7
    svm_c: float = 1.0
    measures: tuple[str, ...] = ("MAN", "EUC", "COS", "WSD")
    k_min: int = 2
    k_max: int = 6
    embed_enabled: bool = True
    normalize_features: bool = True
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 500
    negative_samples: int = 5
    kmeans_restarts: int = 10
    include_baselines: bool = True
    gom_threshold: float = 0.186
    gom_percentile_mode: bool = False
    silhouette_min: float = 0.5
    p_max: float = 0.05
    silhouette_space: str = "clustered"  # or "original": matrix the silhouette uses
    run_audit: bool = True
    audit_triples: int = 1_000_000
    hal_items: str = "all"  # or comma list of item numbers 1..12

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["measures"] = list(self.measures)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kwargs = dict(data)
        if "measures" in kwargs:
            kwargs["measures"] = tuple(kwargs["measures"])
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        types = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (expected key = value): {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            ftype = types[key].type
            if ftype == "int":
                kwargs[key] = int(value)
            elif ftype == "float":
                kwargs[key] = float(value)
            elif ftype == "bool":
                if value.lower() not in ("true", "false"):
                    raise ValueError(f"config key {key}: expected true/false, got {value!r}")
                kwargs[key] = value.lower() == "true"
            elif ftype.startswith("tuple"):
                kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def embedding_params(self, seed: int) -> EmbeddingParams:
        return EmbeddingParams(
            n_neighbors=self.n_neighbors,
            min_dist=self.min_dist,
            n_epochs=self.n_epochs,
            negative_samples=self.negative_samples,
            seed=seed,
        )

    def hal_item_indices(self) -> tuple[int, ...] | None:
        if self.hal_items.strip().lower() == "all":
            return None
        return tuple(int(v) - 1 for v in self.hal_items.split(",") if v.strip())


@dataclass(frozen=True)
class WorkflowSpec:
    measure: str  # MAN/EUC/COS/WSD or GOM/GRO/MEY/HAL
    embed: bool
    method: str  # KME/KMD/AHC ("" for threshold baselines)
    k: int
    seed: int
    baseline: bool = False

    def __post_init__(self):
        if self.method == "KME" and not self.embed:
            raise ValueError("k-means needs vector coordinates: embed must be true")

    @property
    def name(self) -> str:
        if self.baseline and not self.method:
            return f"{self.measure}_{self.k}"
        parts = [self.measure]
        if self.embed:
            parts.append("UMAP")
        parts.append(self.method)
        parts.append(str(self.k))
        return "_".join(parts)


@dataclass(frozen=True)
class WorkflowResult:
    name: str
    k: int
    cluster_sizes: tuple[int, ...]  # descending
    silhouette_mean: float
    silhouette_std: float
    logrank_p_max: float
    lrs_min: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def enumerate_grid(config: RunConfig, has_subscores: bool = True) -> list[WorkflowSpec]:
    """All workflow cells: the proposed measure grid plus baselines.

    HAL baselines need subscores; without them they are dropped here with a
    warning.
    """
    ks = range(config.k_min, config.k_max + 1)
    layers = [(False, MATRIX_METHODS)]
    if config.embed_enabled:
        layers.append((True, EMBED_METHODS))
    specs = []
    for measure in config.measures:
        for embedded, methods in layers:
            for method in methods:
                for k in ks:
                    spec = WorkflowSpec(measure, embedded, method, k, 0)
                    specs.append(dataclasses.replace(
                        spec, seed=derive_seed(config.seed, "workflow", spec.name)
                    ))
    if config.include_baselines:
        for measure, k in THRESHOLD_BASELINES:
            spec = WorkflowSpec(measure, False, "", k, 0, baseline=True)
            specs.append(dataclasses.replace(
                spec, seed=derive_seed(config.seed, "workflow", spec.name)
            ))
        if has_subscores:
            for embedded in (False, True):
                for k in HAL_KS:
                    spec = WorkflowSpec("HAL", embedded, "AHC", k, 0, baseline=True)
                    specs.append(dataclasses.replace(
                        spec, seed=derive_seed(config.seed, "workflow", spec.name)
                    ))
        else:
            warnings.warn("cohort lacks subscores: HAL baseline workflows skipped",
                          stacklevel=2)
    return specs


@dataclass
class SharedArtifacts:
    """Everything computed once and reused by every grid cell."""

    config: RunConfig
    cohort: list
    ids: tuple[str, ...]
    times: np.ndarray
    events: np.ndarray
    fits: dict
    features: list[FeatureVector]
    full_table: PairTable
    retained_mask: np.ndarray
    table: PairTable
    label_matrix: LabelMatrix
    label_model: LabelModel
    pair_labels: np.ndarray
    pair_posterior: np.ndarray
    wsd: WsdWeights
    matrices: dict[str, DistanceMatrix]
    embeddings: dict[str, Embedding]
    embedded_matrices: dict[str, DistanceMatrix]
    baseline_matrices: dict[str, DistanceMatrix] = field(default_factory=dict)
    hal_available: bool = False
    audits: dict = field(default_factory=dict)


def _absdiff_matrix(values: np.ndarray, ids, tag: str) -> DistanceMatrix:
    # 1-D feature: the space a threshold stratum actually lives in
    v = np.asarray(values, dtype=float)
    D = np.abs(v[:, None] - v[None, :])
    D = np.triu(D, k=1)
    D = D + D.T
    return DistanceMatrix(D, tag, tuple(ids))


def build_artifacts(cohort, config: RunConfig) -> SharedArtifacts:
    """Run the shared pipeline stages once for a post-exclusion cohort."""
    cohort = sorted(cohort, key=lambda s: s.patient_id)
    ids = tuple(seq.patient_id for seq in cohort)
    times = np.array([seq.outcome.survival_days for seq in cohort], dtype=float)
    events = np.array([seq.outcome.event_observed for seq in cohort], dtype=bool)

    fits = fit_cohort(cohort, restarts=config.restarts, seed=config.seed)
    features = compute_features(cohort, fits, horizon_days=config.horizon_days)

    full_table = minmax_normalize(pairwise_table(features))
    retained = spearman_filter(full_table, threshold=config.spearman_threshold)
    table = full_table.select_columns(retained)

    label_matrix = apply_labeling_functions(table)
    label_model = fit_label_model(label_matrix)
    pair_labels, pair_posterior = infer_labels(label_model, label_matrix)
    wsd = train_wsd(table, pair_labels, c=config.svm_c)

    X = feature_matrix(features)[:, retained]
    matrices = {}
    for measure in config.measures:
        weights = wsd.weights if measure == "WSD" else None
        matrices[measure] = distance_matrix(
            X, measure, ids, weights=weights, normalize=config.normalize_features
        )

    embeddings = {}
    embedded = {}
    if config.embed_enabled:
        for measure in config.measures:
            params = config.embedding_params(derive_seed(config.seed, "embed", measure))
            emb = embed(matrices[measure], params)
            embeddings[measure] = emb
            embedded[measure] = matrix_from_points(emb.coords, ids)

    art = SharedArtifacts(
        config=config, cohort=cohort, ids=ids, times=times, events=events,
        fits=fits, features=features, full_table=full_table, retained_mask=retained,
        table=table, label_matrix=label_matrix, label_model=label_model,
        pair_labels=pair_labels, pair_posterior=pair_posterior, wsd=wsd,
        matrices=matrices, embeddings=embeddings, embedded_matrices=embedded,
    )

    if config.include_baselines:
        art.baseline_matrices["GOM"] = _absdiff_matrix(
            [f.pc_change_m6 for f in features], ids, "GOM")
        art.baseline_matrices["GRO"] = _absdiff_matrix(
            [f.score_m12 for f in features], ids, "GRO")
        art.baseline_matrices["MEY"] = _absdiff_matrix(
            [f.d50 for f in features], ids, "MEY")
        art.hal_available = all(seq.has_subscores() for seq in cohort)
        if art.hal_available:
            dtwi = bl.dtw_matrix(cohort, config.hal_item_indices())
            art.baseline_matrices["HAL"] = dtwi
            params = config.embedding_params(derive_seed(config.seed, "embed", "HAL"))
            emb = embed(dtwi, params)
            embeddings["HAL"] = emb
            embedded["HAL"] = matrix_from_points(emb.coords, ids)

    if config.run_audit:
        for measure in config.measures:
            art.audits[measure] = audit_metric(
                matrices[measure], triples=config.audit_triples,
                seed=derive_seed(config.seed, "audit", measure),
            )
    return art


def _cluster_for(art: SharedArtifacts, spec: WorkflowSpec) -> tuple[Assignment, DistanceMatrix]:
    """Cluster one cell; returns the assignment and the matrix it clustered in."""
    config = art.config
    if spec.baseline and not spec.method:  # threshold strata
        if spec.measure == "GOM":
            asg = bl.gom_strata(art.features, config.gom_threshold, config.gom_percentile_mode)
        elif spec.measure == "GRO":
            asg = bl.gro_strata(art.features)
        elif spec.measure == "MEY":
            asg = bl.mey_strata(art.features)
        else:
            raise ValueError(f"unknown baseline {spec.measure}")
        return asg, art.baseline_matrices[spec.measure]

    if spec.measure == "HAL":
        if not art.hal_available:
            raise bl.MissingSubscoresError("cohort lacks subscores")
        matrix = art.embedded_matrices["HAL"] if spec.embed else art.baseline_matrices["HAL"]
        return ahc_complete(matrix, spec.k), matrix

    source = art.matrices[spec.measure]
    if spec.embed:
        clustered = art.embedded_matrices[spec.measure]
        if spec.method == "KME":
            asg = kmeans(art.embeddings[spec.measure], spec.k, spec.seed,
                         config.kmeans_restarts)
        elif spec.method == "KMD":
            asg = kmedoids(clustered, spec.k, spec.seed)
        else:
            asg = ahc_complete(clustered, spec.k)
        return asg, clustered
    if spec.method == "KMD":
        return kmedoids(source, spec.k, spec.seed), source
    if spec.method == "AHC":
        return ahc_complete(source, spec.k), source
    raise ValueError(f"method {spec.method} needs an embedding")


def run_workflow(art: SharedArtifacts, spec: WorkflowSpec) -> tuple[WorkflowResult, Assignment]:
    """Execute one grid cell against prebuilt shared artifacts."""
    asg, clustered_matrix = _cluster_for(art, spec)
    if art.config.silhouette_space == "original" and not spec.baseline:
        sil_matrix = art.matrices[spec.measure]
    else:
        sil_matrix = clustered_matrix
    sil = silhouette(sil_matrix, asg)
    sep = survival_separation(asg.labels, art.times, art.events)
    sizes = tuple(sorted(asg.cluster_sizes(), reverse=True))
    result = WorkflowResult(
        name=spec.name,
        k=asg.k,
        cluster_sizes=sizes,
        silhouette_mean=sil.mean,
        silhouette_std=sil.std,
        logrank_p_max=sep.max_p,
        lrs_min=sep.min_lrs,
    )
    return result, asg


@dataclass
class RunResult:
    results: list[WorkflowResult]
    assignments: dict[str, Assignment]
    failures: dict[str, str]
    skipped: dict[str, str]
    artifacts: SharedArtifacts
    exclusions: ExclusionReport | None = None
    inputs: dict | None = None
    elapsed_seconds: float = 0.0


def run_all(cohort, config: RunConfig) -> RunResult:
    """Build shared artifacts and execute the full grid.

    Per-cell failures are recorded and do not stop the run.
    """
    start = time.perf_counter()
    art = build_artifacts(cohort, config)
    grid = enumerate_grid(config, has_subscores=True)

    results: list[WorkflowResult] = []
    assignments: dict[str, Assignment] = {}
    failures: dict[str, str] = {}
    skipped: dict[str, str] = {}
    for spec in grid:
        if spec.measure == "HAL" and not art.hal_available:
            skipped[spec.name] = "cohort lacks subscores"
            continue
        try:
            result, asg = run_workflow(art, spec)
        except Exception as err:  # noqa: BLE001 - cell isolation is the contract
            failures[spec.name] = f"{type(err).__name__}: {err}"
            continue
        results.append(result)
        assignments[spec.name] = asg
    return RunResult(
        results, assignments, failures, skipped, art,
        elapsed_seconds=time.perf_counter() - start,
    )


def filter_and_rank(
    results: list[WorkflowResult],
    sil_min: float = 0.5,
    p_max: float = 0.05,
) -> tuple[list[WorkflowResult], dict[str, str]]:
    """Two-stage selection: silhouette >= sil_min, then p < p_max, LRS-descending.

    Ties on LRS break by workflow name, so ranking is order stable.
    """
    drops: dict[str, str] = {}
    stage1 = []
    for r in results:
        if r.silhouette_mean >= sil_min:
            stage1.append(r)
        else:
            drops[r.name] = f"silhouette {r.silhouette_mean:.4f} < {sil_min}"
    survivors = []
    for r in stage1:
        if r.logrank_p_max < p_max:
            survivors.append(r)
        else:
            drops[r.name] = f"log-rank p {r.logrank_p_max:.4g} >= {p_max}"
    survivors.sort(key=lambda r: (-r.lrs_min, r.name))
    return survivors, drops


def _result_row(r: WorkflowResult) -> str:
    sizes = ";".join(str(s) for s in r.cluster_sizes)
    return (
        f"{r.name},{r.k},{sizes},{r.silhouette_mean!r},{r.silhouette_std!r},"
        f"{r.logrank_p_max!r},{r.lrs_min!r}"
    )


def write_results_csv(results: list[WorkflowResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(RESULTS_HEADER + "\n")
        for r in results:
            handle.write(_result_row(r) + "\n")


def _workflow_curves(asg: Assignment, times, events) -> dict[int, SurvivalCurve]:
    labels = asg.labels
    return {
        c: kaplan_meier(times[labels == c], events[labels == c])
        for c in range(asg.k)
    }


def write_km_curves_csv(run: RunResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("workflow_id,cluster,time,survival,at_risk\n")
        for name in sorted(run.assignments):
            asg = run.assignments[name]
            curves = _workflow_curves(asg, run.artifacts.times, run.artifacts.events)
            for cluster in sorted(curves):
                curve = curves[cluster]
                for t, s, n_at in zip(curve.times, curve.survival, curve.at_risk):
                    handle.write(f"{name},{cluster},{t!r},{s!r},{n_at}\n")


def build_manifest(run: RunResult) -> dict:
    art = run.artifacts
    ranked, drops = filter_and_rank(
        run.results, art.config.silhouette_min, art.config.p_max
    )
    manifest = {
        "config": art.config.to_dict(),
        "inputs": run.inputs or {},
        "exclusions": run.exclusions.to_dict() if run.exclusions else None,
        "variables": {
            "all": list(art.full_table.columns),
            "retained": list(art.table.columns),
            "mask": [bool(b) for b in art.retained_mask],
        },
        "pair_normalization": {
            name: {"min": float(lo), "max": float(hi)}
            for name, lo, hi in zip(
                art.full_table.columns, art.full_table.col_min, art.full_table.col_max
            )
        },
        "patient_feature_normalization": art.matrices[art.config.measures[0]].normalization,
        "label_model": {
            "prior": art.label_model.prior,
            "propensity": [float(p) for p in art.label_model.propensity],
            "accuracy": [float(a) for a in art.label_model.accuracy],
            "iterations": art.label_model.n_iter,
            "converged": art.label_model.converged,
        },
        "wsd": {
            "weights": {n: float(w) for n, w in zip(art.wsd.columns, art.wsd.weights)},
            "intercept": art.wsd.intercept,
            "C": art.wsd.c,
            "passes": art.wsd.n_passes,
            "duality_gap": art.wsd.duality_gap,
            "converged": art.wsd.converged,
        },
        "silhouette_space": art.config.silhouette_space,
        "silhouette_std_convention": "population",
        # DTW aligns by visit index and ignores calendar gaps; surfacing the
        # per-patient mean gap makes that approximation inspectable
        "mean_intervisit_gap_days": (
            bl.mean_intervisit_gap(art.cohort) if art.hal_available else None
        ),
        "workflows": [r.to_dict() for r in run.results],
        "ranked": [r.name for r in ranked],
        "drops": drops,
        "failures": run.failures,
        "skipped": run.skipped,
        "audits": {m: a.to_dict() for m, a in art.audits.items()},
        "elapsed_seconds": run.elapsed_seconds,
    }
    return manifest


def render_reports(run: RunResult, outdir) -> list[Path]:
    """Write every report artifact for a completed run into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    art = run.artifacts
    written = []

    def _record(path):
        written.append(path)
        return path

    write_results_csv(run.results, _record(outdir / "results.csv"))
    ranked, _ = filter_and_rank(run.results, art.config.silhouette_min, art.config.p_max)
    write_results_csv(ranked, _record(outdir / "ranked.csv"))
    write_assignments_csv(run.assignments, _record(outdir / "assignments.csv"))
    write_km_curves_csv(run, _record(outdir / "km_curves.csv"))
    write_fits_csv(art.fits, _record(outdir / "fits.csv"))
    write_features_csv(art.features, _record(outdir / "features.csv"))
    write_pairs_csv(art.table, _record(outdir / "pairs.csv"))
    write_labels_csv(art.label_matrix, art.pair_labels, art.pair_posterior,
                     _record(outdir / "labels.csv"))
    save_wsd_weights(art.wsd, _record(outdir / "wsd_weights.json"))

    for measure, emb in sorted(art.embeddings.items()):
        write_embedding_csv(emb, _record(outdir / f"embedding_{measure}.csv"))
    for measure, matrix in sorted(art.matrices.items()):
        save_matrix_bin(matrix, _record(outdir / f"matrix_{measure}.bin"))
    for measure, audit in sorted(art.audits.items()):
        audit.save(_record(outdir / f"audit_{measure}.json"))
    if run.exclusions is not None:
        run.exclusions.save(_record(outdir / "exclusions.json"))

    plots = outdir / "plots"
    plots.mkdir(exist_ok=True)
    for name in sorted(run.assignments):
        asg = run.assignments[name]
        curves = _workflow_curves(asg, art.times, art.events)
        svg = survival_svg(curves, f"Survival by cluster - {name}")
        _record(plots / f"survival_{name}.svg").write_text(svg, encoding="utf-8")
        measure = name.split("_", 1)[0]
        if "_UMAP_" in name and measure in art.embeddings:
            svg = scatter_svg(art.embeddings[measure].coords, asg.labels,
                              f"Embedding - {name}")
            _record(plots / f"embedding_{name}.svg").write_text(svg, encoding="utf-8")

    manifest = build_manifest(run)
    with open(_record(outdir / "results.json"), "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return written


def run(visits_path, outcomes_path, config: RunConfig, outdir=None) -> RunResult:
    """Parse, exclude, run the grid and (optionally) render reports."""
    cohort = parse_cohort(visits_path, outcomes_path)
    retained, report = apply_exclusions(cohort)
    result = run_all(retained, config)
    result.exclusions = report
    result.inputs = {"visits": str(visits_path), "outcomes": str(outcomes_path)}
    if outdir is not None:
        render_reports(result, outdir)
    return result


def replay(manifest_path, outdir=None) -> RunResult:
    """Re-execute a run exactly as recorded in its manifest."""
    with open(manifest_path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    config = RunConfig.from_dict(manifest["config"])
    inputs = manifest.get("inputs") or {}
    if "visits" not in inputs or "outcomes" not in inputs:
        raise ValueError("manifest does not record input paths; cannot replay")
    return run(inputs["visits"], inputs["outcomes"], config, outdir)
