"""Command-line interface: one subcommand per pipeline stage plus the full grid.

Stage commands are stateless: each reads the raw cohort files, recomputes
the stages it depends on (deterministic for a given seed) and writes its
own artifact. ``grid`` runs everything and renders the full report tree.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .clustering import write_assignments_csv
from .cohort import apply_exclusions, parse_cohort, write_cohort
from .distances import audit_metric, save_matrix_bin, save_matrix_csv
from .embedding import write_embedding_csv
from .features import write_features_csv, write_pairs_csv
from .pipeline import (
    RunConfig,
    WorkflowSpec,
    build_artifacts,
    replay,
    run,
    run_workflow,
)
from .seeds import derive_seed
from .sigmoid import fit_cohort, write_fits_csv
from .synth import three_cluster_spec, write_synthetic_cohort
from .weaksup import save_wsd_weights, write_labels_csv


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _load_cohort(args):
    cohort = parse_cohort(args.visits, args.outcomes)
    return apply_exclusions(cohort)


def _single_measure_artifacts(args, config, measure, with_embedding: bool):
    trimmed = dataclasses.replace(
        config,
        measures=(measure,) if measure != "HAL" else config.measures[:1],
        include_baselines=measure == "HAL",
        embed_enabled=with_embedding and measure != "HAL",
        run_audit=False,
    )
    retained, _ = _load_cohort(args)
    return build_artifacts(retained, trimmed)


def cmd_synth(args) -> int:
    out = _outdir(args)
    config = _config(args)
    spec = three_cluster_spec(
        n_patients=args.patients, noise_sd=args.noise, seed=config.seed
    )
    write_synthetic_cohort(
        spec, out / "visits.csv", out / "outcomes.csv", out / "planted_labels.csv"
    )
    print(f"wrote synthetic cohort of {args.patients} patients to {out}")
    return 0


def cmd_ingest(args) -> int:
    out = _outdir(args)
    retained, report = _load_cohort(args)
    report.save(out / "exclusions.json")
    write_cohort(retained, out / "cohort_visits.csv", out / "cohort_outcomes.csv")
    print(
        f"retained {report.n_retained}/{report.n_input} patients "
        f"({report.n_input - report.n_retained} excluded)"
    )
    return 0


def cmd_fit(args) -> int:
    out = _outdir(args)
    config = _config(args)
    retained, _ = _load_cohort(args)
    fits = fit_cohort(retained, restarts=config.restarts, seed=config.seed)
    write_fits_csv(fits, out / "fits.csv")
    print(f"fitted {len(fits)} sequences -> {out / 'fits.csv'}")
    return 0


def cmd_features(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, config.measures[0], False)
    write_features_csv(art.features, out / "features.csv")
    write_pairs_csv(art.table, out / "pairs.csv")
    print(f"{len(art.features)} patients, {art.table.n_pairs} pairs, "
          f"retained variables: {', '.join(art.table.columns)}")
    return 0


def cmd_label(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, config.measures[0], False)
    write_labels_csv(art.label_matrix, art.pair_labels, art.pair_posterior,
                     out / "labels.csv")
    print(f"labeled {art.table.n_pairs} pairs -> {out / 'labels.csv'}")
    return 0


def cmd_train_wsd(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, config.measures[0], False)
    save_wsd_weights(art.wsd, out / "wsd_weights.json")
    print(f"trained WSD weights -> {out / 'wsd_weights.json'}")
    return 0


def cmd_dist(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, args.measure, False)
    if args.measure == "HAL":
        matrix = art.baseline_matrices["HAL"]
    else:
        matrix = art.matrices[args.measure]
    save_matrix_bin(matrix, out / f"matrix_{args.measure}.bin")
    save_matrix_csv(matrix, out / f"matrix_{args.measure}.csv")
    audit = audit_metric(matrix, triples=config.audit_triples,
                         seed=derive_seed(config.seed, "audit", args.measure))
    audit.save(out / f"audit_{args.measure}.json")
    print(f"{args.measure}: triangle {audit.triangle_pct:.3f}% "
          f"(max violation {audit.max_violation:.3g})")
    return 0


def cmd_embed(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, args.measure, True)
    write_embedding_csv(art.embeddings[args.measure], out / "embedding.csv")
    print(f"embedded {len(art.ids)} patients -> {out / 'embedding.csv'}")
    return 0


def _workflow_spec(config, args) -> WorkflowSpec:
    spec = WorkflowSpec(args.measure, args.umap, args.method, args.k, 0)
    return dataclasses.replace(spec, seed=derive_seed(config.seed, "workflow", spec.name))


def cmd_cluster(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, args.measure, args.umap)
    spec = _workflow_spec(config, args)
    _, asg = run_workflow(art, spec)
    write_assignments_csv({spec.name: asg}, out / "assignments.csv")
    print(f"{spec.name}: cluster sizes {sorted(asg.cluster_sizes(), reverse=True)}")
    return 0


def cmd_eval(args) -> int:
    out = _outdir(args)
    config = _config(args)
    art = _single_measure_artifacts(args, config, args.measure, args.umap)
    spec = _workflow_spec(config, args)
    result, _ = run_workflow(art, spec)
    payload = result.to_dict()
    with open(out / "eval.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_grid(args) -> int:
    out = _outdir(args)
    config = _config(args)
    result = run(args.visits, args.outcomes, config, out)
    n_total = len(result.results) + len(result.failures) + len(result.skipped)
    print(
        f"{len(result.results)}/{n_total} workflows completed "
        f"({len(result.skipped)} skipped, {len(result.failures)} failed) "
        f"in {result.elapsed_seconds:.1f}s -> {out}"
    )
    for name, reason in sorted(result.failures.items()):
        print(f"  FAILED {name}: {reason}", file=sys.stderr)
    return 0 if not result.failures else 1


def cmd_report(args) -> int:
    out = _outdir(args)
    result = replay(args.manifest, out)
    print(f"replayed run -> {out} ({len(result.results)} workflows)")
    return 0 if not result.failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="progclust",
        description="Cluster patients by disease-progression similarity and rank "
                    "workflows by survival separation.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="runs/latest", help="output directory")
    parser.add_argument("--config", default=None, help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort with planted clusters")
    p.add_argument("--patients", type=int, default=150)
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    def _cohort_args(p):
        p.add_argument("--visits", required=True)
        p.add_argument("--outcomes", required=True)

    p = sub.add_parser("ingest", help="validate a cohort and apply exclusion rules")
    _cohort_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit the 4-parameter sigmoid per patient")
    _cohort_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("features", help="extract features and the pairwise table")
    _cohort_args(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("label", help="run labeling functions and the vote model")
    _cohort_args(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-wsd", help="train the weak-supervised distance weights")
    _cohort_args(p)
    p.set_defaults(func=cmd_train_wsd)

    p = sub.add_parser("dist", help="compute, persist and audit a distance matrix")
    _cohort_args(p)
    p.add_argument("--measure", required=True,
                   choices=("MAN", "EUC", "COS", "WSD", "HAL"))
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("embed", help="project a distance matrix to 2-D")
    _cohort_args(p)
    p.add_argument("--measure", required=True,
                   choices=("MAN", "EUC", "COS", "WSD", "HAL"))
    p.set_defaults(func=cmd_embed)

    def _workflow_args(p):
        _cohort_args(p)
        p.add_argument("--measure", required=True, choices=("MAN", "EUC", "COS", "WSD"))
        p.add_argument("--method", required=True, choices=("KME", "KMD", "AHC"))
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--umap", action="store_true", help="cluster the 2-D embedding")

    p = sub.add_parser("cluster", help="run a single clustering workflow")
    _workflow_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="evaluate a single workflow (silhouette + log-rank)")
    _workflow_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="run the full workflow grid and render reports")
    _cohort_args(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="replay a recorded run from its manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
