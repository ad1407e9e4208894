"""Command-line front end.

Subcommands cover the whole pipeline: per-subject fitting, agglomerative
clustering, partition refinement, classifier training and application,
synthetic data generation, and the exhaustive small-n search.  All failures
map to exit codes (1 usage, 2 data, 3 numerical) and print a single
``ERROR[<code>]:`` line on standard error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .classify import classify_all, train_classifier
from .cluster import cluster_init_from_subject_fits, fit_cluster
from .core import (
    DataError,
    DataSet,
    DomainError,
    FitConfig,
    FitError,
    Partition,
)
from .hier import hierarchical_cluster, select_partition
from .refine import refine_partition
from .simulate import brute_force_best_partition, generate_dataset

__all__ = ["main", "entry"]


class UsageError(Exception):
    """Bad command line; carries the parser usage text for the error report."""

    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse hook
        raise UsageError(message, self.format_usage())


def _parse_mapping(pairs, flag: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for text in pairs or []:
        key, sep, value = text.partition("=")
        if not sep or not key or not value:
            raise UsageError(f"{flag} expects <id>=<value>, got {text!r}")
        if key in out:
            raise UsageError(f"{flag} given twice for platform {key!r}")
        out[key] = value
    return out


def _load_dataset(args) -> DataSet:
    platform_paths = _parse_mapping(args.platform, "--platform")
    thresholds = _parse_mapping(getattr(args, "sd_threshold", None), "--sd-threshold")
    tops = _parse_mapping(getattr(args, "top", None), "--top")
    for pid in list(thresholds) + list(tops):
        if pid not in platform_paths:
            raise UsageError(f"filter names unknown platform {pid!r}")
        if pid in thresholds and pid in tops:
            raise UsageError(
                f"platform {pid!r} has both --sd-threshold and --top; pick one"
            )
    entries = []
    for pid, path in platform_paths.items():
        matrix, subject_ids = dataio.read_matrix(path, fmt=args.format,
                                                 platform_id=pid)
        if pid in thresholds:
            try:
                threshold = float(thresholds[pid])
            except ValueError:
                raise UsageError(
                    f"--sd-threshold {pid}: not a number: {thresholds[pid]!r}"
                ) from None
            matrix = dataio.sd_filter(matrix, threshold=threshold)
        elif pid in tops:
            try:
                top = int(tops[pid])
            except ValueError:
                raise UsageError(f"--top {pid}: not an integer: {tops[pid]!r}") from None
            matrix = dataio.sd_filter(matrix, top=top)
        entries.append((matrix, subject_ids))
    return dataio.build_dataset(entries)


def _fit_config(args) -> FitConfig:
    return FitConfig(
        restarts=args.restarts,
        max_iter=args.max_iter,
        rel_tol=args.tol,
        seed=args.seed,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_subjects(data: DataSet, args):
    from .subject import fit_all_subjects

    return fit_all_subjects(data, _fit_config(args), threads=args.threads)


def _read_partition_for(data: DataSet, path) -> Partition:
    partition, subject_ids, _ = dataio.read_partition_json(path)
    if subject_ids != data.subject_ids:
        raise DataError(
            f"{path}: subject ids do not match the input matrices"
        )
    return partition


def _write_cluster_reports(out: Path, data: DataSet, partition: Partition,
                           subject_fits, config: FitConfig,
                           exclude_eps: float) -> None:
    """gamma_<cluster>_<platform>.csv plus one heatmap order per platform."""
    fits = []
    for members in partition.clusters():
        fits.append(fit_cluster(
            data, members,
            init=cluster_init_from_subject_fits(subject_fits, members),
            config=config,
        ))
    for k, matrix in enumerate(data.platforms):
        stacked = np.vstack([fit.probe_posteriors[k] for fit in fits])
        for c, fit in enumerate(fits):
            dataio.write_gamma_csv(
                out / f"gamma_{c}_{matrix.platform_id}.csv",
                matrix.probe_ids, fit.probe_posteriors[k],
            )
        dataio.write_heatmap_order_csv(
            out / f"heatmap_order_{matrix.platform_id}.csv",
            matrix.probe_ids, stacked, exclude_eps,
        )


def cmd_fit_subjects(args) -> int:
    data = _load_dataset(args)
    fits = _fit_subjects(data, args)
    out = _out_dir(args)
    dataio.write_subject_fits_csv(out / "subject_fits.csv", data.subject_ids,
                                  data.platform_ids, fits)
    return 0


def cmd_hcluster(args) -> int:
    data = _load_dataset(args)
    config = _fit_config(args)
    fits = _fit_subjects(data, args)
    dendrogram = hierarchical_cluster(
        data, config, threads=args.threads,
        cold_restart=args.cold_restart, subject_fits=fits,
    )
    partition = select_partition(dendrogram, args.min_cluster_size, args.k)
    loglik = dendrogram.loglik_trace[dendrogram.n - partition.n_clusters]
    out = _out_dir(args)
    dataio.write_partition_json(out / "partition.json", partition,
                                data.subject_ids, loglik=loglik)
    (out / "dendrogram.newick").write_text(dendrogram.to_newick() + "\n")
    dataio.write_merges_csv(out / "merges.csv", dendrogram)
    dataio.write_trace_csv(out / "loglik_trace.csv", dendrogram)
    _write_cluster_reports(out, data, partition, fits, config,
                           args.heatmap_exclude_eps)
    return 0


def cmd_refine(args) -> int:
    data = _load_dataset(args)
    config = _fit_config(args)
    init = _read_partition_for(data, args.init)
    fits = _fit_subjects(data, args)
    result = refine_partition(
        data, init, config,
        update_indicators=not args.freeze_indicators,
        subject_fits=fits,
    )
    out = _out_dir(args)
    dataio.write_partition_json(
        out / "partition.json", result.partition, data.subject_ids,
        mixture_loglik=result.mixture_loglik,
        objective_loglik=result.objective_loglik,
    )
    dataio.write_tau_csv(out / "tau.csv", data.subject_ids,
                         result.responsibilities)
    return 0


def cmd_train(args) -> int:
    data = _load_dataset(args)
    config = _fit_config(args)
    partition = _read_partition_for(data, args.partition)
    fits = _fit_subjects(data, args)
    classifier = train_classifier(data, partition, config, subject_fits=fits)
    out = _out_dir(args)
    dataio.classifier_to_json(out / "classifier.json", classifier)
    return 0


def cmd_classify(args) -> int:
    data = _load_dataset(args)
    classifier = dataio.classifier_from_json(args.classifier)
    results = classify_all(data, classifier)
    out = _out_dir(args)
    dataio.write_scores_csv(
        out / "scores.csv", data.subject_ids, classifier.labels,
        [r.label for r in results],
        np.array([r.scores for r in results]),
    )
    return 0


def cmd_simulate(args) -> int:
    spec = dataio.read_simspec(args.spec)
    if args.seed is not None:
        spec = dataio.simspec_from_dict(
            dataio.simspec_to_dict(spec) | {"seed": args.seed}
        )
    data, truth = generate_dataset(spec)
    out = _out_dir(args)
    for matrix in data.platforms:
        dataio.write_matrix(matrix, data.subject_ids,
                            out / f"{matrix.platform_id}.csv")
    dataio.write_truth_json(out / "truth.json", truth, data.subject_ids,
                            data.platform_ids)
    return 0


def cmd_oracle(args) -> int:
    data = _load_dataset(args)
    partition, loglik = brute_force_best_partition(data, _fit_config(args))
    out = _out_dir(args)
    dataio.write_partition_json(out / "partition.json", partition,
                                data.subject_ids, loglik=loglik)
    return 0


def _add_common(sub, *, platforms: bool = True, fit: bool = True) -> None:
    if platforms:
        sub.add_argument("--platform", action="append", required=True,
                         metavar="ID=PATH",
                         help="platform id and matrix path (repeatable)")
        sub.add_argument("--format", choices=("csv", "tsv"), default="csv",
                         help="matrix file format (default csv)")
        sub.add_argument("--sd-threshold", action="append", metavar="ID=X",
                         help="keep probes with sd strictly above X")
        sub.add_argument("--top", action="append", metavar="ID=M",
                         help="keep the M probes with the largest sd")
    if fit:
        sub.add_argument("--restarts", type=int, default=10,
                         help="EM restarts per subject fit (default 10)")
        sub.add_argument("--tol", type=float, default=1e-8,
                         help="relative convergence tolerance (default 1e-8)")
        sub.add_argument("--max-iter", type=int, default=500,
                         help="EM iteration cap (default 500)")
    sub.add_argument("--seed", type=int,
                     default=None if sub.prog.endswith("simulate") else 0,
                     help="random seed")
    sub.add_argument("--out", default=".", metavar="DIR",
                     help="output directory (default current)")
    sub.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                     help="worker threads (results are identical for any value)")


def build_parser() -> _Parser:
    parser = _Parser(prog="profilemix",
                     description="Model-based clustering of bimodal profiles.")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("fit-subjects",
                              help="fit the two-component mixture per subject")
    _add_common(sub)
    sub.set_defaults(func=cmd_fit_subjects)

    sub = commands.add_parser("hcluster",
                              help="greedy agglomeration and partition selection")
    _add_common(sub)
    sub.add_argument("--min-cluster-size", type=int, default=None,
                     help="only select partitions whose smallest cluster has "
                          "at least this many subjects")
    sub.add_argument("--k", type=int, default=None,
                     help="force the reported partition to this cluster count")
    sub.add_argument("--cold-restart", action="store_true",
                     help="also try a cold start for every candidate merge")
    sub.add_argument("--heatmap-exclude-eps", type=float, default=1e-6,
                     help="drop probes whose posterior spread across clusters "
                          "is at most this value (default 1e-6)")
    sub.set_defaults(func=cmd_hcluster)

    sub = commands.add_parser("refine", help="EM refinement of a partition")
    _add_common(sub)
    sub.add_argument("--init", required=True, metavar="PARTITION_JSON",
                     help="starting partition (e.g. hcluster output)")
    sub.add_argument("--freeze-indicators", action="store_true",
                     help="keep the initial 0/1 probe indicators fixed")
    sub.set_defaults(func=cmd_refine)

    sub = commands.add_parser("train", help="train the discriminant classifier")
    _add_common(sub)
    sub.add_argument("--partition", required=True, metavar="PARTITION_JSON",
                     help="training partition")
    sub.set_defaults(func=cmd_train)

    sub = commands.add_parser("classify",
                              help="score new subjects against a classifier")
    _add_common(sub, fit=False)
    sub.add_argument("--classifier", required=True, metavar="CLASSIFIER_JSON")
    sub.set_defaults(func=cmd_classify)

    sub = commands.add_parser("simulate", help="generate a synthetic data set")
    _add_common(sub, platforms=False, fit=False)
    sub.add_argument("--spec", required=True, metavar="SPEC_JSON",
                     help="simulation recipe")
    sub.set_defaults(func=cmd_simulate)

    sub = commands.add_parser("oracle",
                              help="exhaustive best partition (n <= 8 subjects)")
    _add_common(sub)
    sub.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        if exc.usage:
            sys.stderr.write(exc.usage)
        sys.stderr.write(f"ERROR[1]: {exc}\n")
        return 1
    except DomainError as exc:
        sys.stderr.write(f"ERROR[1]: {exc}\n")
        return 1
    except (DataError, OSError) as exc:
        sys.stderr.write(f"ERROR[2]: {exc}\n")
        return 2
    except FitError as exc:
        sys.stderr.write(f"ERROR[3]: {exc}\n")
        return 3


def entry() -> None:
    sys.exit(main())
