"""Matrix ingestion, probe filtering, and file serialization for the CLI.

Matrices are CSV/TSV with subject ids on the first row and probe ids in the
first column.  All floats are written with 17 significant digits so values
round-trip exactly and repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, DataSet, DomainError, Partition, PlatformMatrix
from .classify import Classifier, ClassifierCluster
from .hier import Dendrogram
from .simulate import CorrelatedBlocks, GroundTruth, PlatformSimSpec, SimSpec

__all__ = [
    "fmt_float",
    "read_matrix",
    "write_matrix",
    "build_dataset",
    "probe_sd",
    "sd_filter",
    "write_partition_json",
    "read_partition_json",
    "classifier_to_json",
    "classifier_from_json",
    "simspec_from_dict",
    "simspec_to_dict",
    "read_simspec",
    "write_truth_json",
    "write_merges_csv",
    "write_trace_csv",
    "write_tau_csv",
    "write_gamma_csv",
    "heatmap_order",
    "write_heatmap_order_csv",
    "write_scores_csv",
    "write_subject_fits_csv",
]

_DELIMS = {"csv": ",", "tsv": "\t"}


def fmt_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any float64 exactly."""
    return format(float(x), ".17g")


def _delimiter(fmt: str) -> str:
    if fmt not in _DELIMS:
        raise DomainError(f"unknown matrix format {fmt!r}, expected csv or tsv")
    return _DELIMS[fmt]


def read_matrix(path, fmt: str = "csv",
                platform_id: str | None = None) -> tuple[PlatformMatrix, tuple[str, ...]]:
    """Parse a probe-by-subject matrix file.

    The first header cell is ignored, the rest are subject ids; each data
    row starts with its probe id.  Ragged rows, duplicate ids, and
    non-numeric or non-finite cells are rejected with the offending location
    named.
    """
    path = Path(path)
    delim = _delimiter(fmt)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delim))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise DataError(f"{path}: header has no subject columns")
    subject_ids = header[1:]
    if len(set(subject_ids)) != len(subject_ids):
        raise DataError(f"{path}: duplicate subject ids in header")
    if len(rows) < 2:
        raise DataError(f"{path}: no probe rows")
    probe_ids = []
    seen = set()
    values = np.empty((len(rows) - 1, len(subject_ids)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {r}: expected {len(header)} fields, got {len(row)}"
            )
        probe = row[0]
        if probe in seen:
            raise DataError(f"{path}: row {r}: duplicate probe id {probe!r}")
        seen.add(probe)
        probe_ids.append(probe)
        for c, cell in enumerate(row[1:], start=2):
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column {c}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise DataError(
                    f"{path}: row {r}, column {c}: non-finite value {cell!r}"
                )
            values[r - 2, c - 2] = value
    pid = platform_id if platform_id is not None else path.stem
    matrix = PlatformMatrix(pid, tuple(probe_ids), values)
    return matrix, tuple(subject_ids)


def write_matrix(matrix: PlatformMatrix, subject_ids: Sequence[str], path,
                 fmt: str = "csv") -> None:
    delim = _delimiter(fmt)
    if len(subject_ids) != matrix.n_subjects:
        raise DataError("subject id count does not match the matrix")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim)
        writer.writerow(["probe_id", *subject_ids])
        for probe, row in zip(matrix.probe_ids, matrix.values):
            writer.writerow([probe, *(fmt_float(v) for v in row)])


def build_dataset(entries: Sequence[tuple[PlatformMatrix, Sequence[str]]]) -> DataSet:
    """Assemble platforms read from separate files into one data set.

    Subject ids must be identical, in the same order, across the files.
    """
    if not entries:
        raise DataError("no platforms given")
    first_ids = tuple(entries[0][1])
    for matrix, ids in entries[1:]:
        if tuple(ids) != first_ids:
            raise DataError(
                f"platform {matrix.platform_id!r}: subject ids differ from the "
                f"first platform (columns must be aligned)"
            )
    return DataSet(tuple(m for m, _ in entries), first_ids)


def probe_sd(matrix: PlatformMatrix) -> np.ndarray:
    """Per-probe sample standard deviation (n-1 denominator)."""
    if matrix.n_subjects < 2:
        raise DataError("standard deviation filtering needs at least 2 subjects")
    return np.std(matrix.values, axis=1, ddof=1)


def sd_filter(matrix: PlatformMatrix, threshold: float | None = None,
              top: int | None = None) -> PlatformMatrix:
    """Keep probes by standard deviation, preserving their original order.

    Exactly one of ``threshold`` (keep sd strictly above it) and ``top``
    (keep the m largest, ties broken by probe id) must be given.  The filter
    is idempotent: reapplying it to its own output changes nothing.
    """
    if (threshold is None) == (top is None):
        raise DomainError("exactly one of threshold and top must be given")
    sd = probe_sd(matrix)
    if threshold is not None:
        if threshold < 0:
            raise DomainError("threshold must be non-negative")
        keep_mask = sd > threshold
    else:
        if top < 1:
            raise DomainError("top must be >= 1")
        if top > matrix.n_probes:
            raise DomainError(
                f"top={top} exceeds the {matrix.n_probes} probes present"
            )
        ranked = sorted(range(matrix.n_probes),
                        key=lambda j: (-sd[j], matrix.probe_ids[j]))
        chosen = set(ranked[:top])
        keep_mask = np.array([j in chosen for j in range(matrix.n_probes)])
    if not keep_mask.any():
        raise DataError("the filter removed every probe")
    kept = np.flatnonzero(keep_mask)
    return PlatformMatrix(
        matrix.platform_id,
        tuple(matrix.probe_ids[j] for j in kept),
        matrix.values[kept],
    )


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_partition_json(path, partition: Partition, subject_ids: Sequence[str],
                         **metrics: float) -> None:
    payload = {
        "subject_ids": list(subject_ids),
        "assignment": list(partition.assignment),
        "n_clusters": partition.n_clusters,
    }
    for key, value in metrics.items():
        payload[key] = float(value)
    _write_json(path, payload)


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None


def read_partition_json(path):
    payload = _read_json(path)
    try:
        partition = Partition(tuple(payload["assignment"]), int(payload["n_clusters"]))
        subject_ids = tuple(str(s) for s in payload["subject_ids"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a partition document ({exc})") from None
    metrics = {k: v for k, v in payload.items()
               if k not in ("assignment", "n_clusters", "subject_ids")}
    return partition, subject_ids, metrics


def _pack_bits(vec) -> str:
    return "".join("1" if v else "0" for v in vec)


def _unpack_bits(text: str) -> np.ndarray:
    if set(text) - {"0", "1"}:
        raise DataError("indicator strings must contain only 0 and 1")
    return np.array([1 if ch == "1" else 0 for ch in text], dtype=int)


def classifier_to_json(path, classifier: Classifier) -> None:
    payload = {
        "platforms": [
            {"platform_id": pid, "probe_ids": list(probes)}
            for pid, probes in zip(classifier.platform_ids, classifier.probe_ids)
        ],
        "clusters": [
            {
                "label": cluster.label,
                "indicators": {
                    pid: _pack_bits(vec)
                    for pid, vec in zip(classifier.platform_ids, cluster.indicators)
                },
                "one_sided": {
                    pid: flag
                    for pid, flag in zip(classifier.platform_ids, cluster.one_sided())
                },
            }
            for cluster in classifier.clusters
        ],
    }
    _write_json(path, payload)


def classifier_from_json(path) -> Classifier:
    payload = _read_json(path)
    try:
        platform_ids = tuple(p["platform_id"] for p in payload["platforms"])
        probe_ids = tuple(tuple(p["probe_ids"]) for p in payload["platforms"])
        clusters = tuple(
            ClassifierCluster(
                label=str(c["label"]),
                indicators=tuple(_unpack_bits(c["indicators"][pid])
                                 for pid in platform_ids),
            )
            for c in payload["clusters"]
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a classifier document ({exc})") from None
    return Classifier(platform_ids, probe_ids, clusters)


def simspec_to_dict(spec: SimSpec) -> dict:
    return {
        "seed": spec.seed,
        "n_per_cluster": list(spec.n_per_cluster),
        "w_overlap": spec.w_overlap,
        "platforms": [
            {
                "platform_id": p.platform_id,
                "n_probes": p.n_probes,
                "mu_low": list(p.mu_low),
                "mu_high": list(p.mu_high),
                "var_low": list(p.var_low),
                "var_high": list(p.var_high),
                "subject_jitter": p.subject_jitter,
                "pi_high": p.pi_high,
                "cluster_groups": (list(p.cluster_groups)
                                   if p.cluster_groups is not None else None),
            }
            for p in spec.platforms
        ],
        "correlated_blocks": (
            {
                "block_size": spec.correlated_blocks.block_size,
                "rho": spec.correlated_blocks.rho,
                "block_count": spec.correlated_blocks.block_count,
            }
            if spec.correlated_blocks is not None else None
        ),
    }


def simspec_from_dict(payload: dict) -> SimSpec:
    try:
        platforms = tuple(
            PlatformSimSpec(
                platform_id=str(p["platform_id"]),
                n_probes=int(p["n_probes"]),
                mu_low=tuple(p["mu_low"]),
                mu_high=tuple(p["mu_high"]),
                var_low=tuple(p["var_low"]),
                var_high=tuple(p["var_high"]),
                subject_jitter=float(p.get("subject_jitter", 0.0)),
                pi_high=float(p.get("pi_high", 0.5)),
                cluster_groups=(tuple(p["cluster_groups"])
                                if p.get("cluster_groups") is not None else None),
            )
            for p in payload["platforms"]
        )
        blocks = payload.get("correlated_blocks")
        correlated = (
            CorrelatedBlocks(
                block_size=int(blocks["block_size"]),
                rho=float(blocks["rho"]),
                block_count=int(blocks["block_count"]),
            )
            if blocks else None
        )
        return SimSpec(
            n_per_cluster=tuple(payload["n_per_cluster"]),
            platforms=platforms,
            w_overlap=float(payload.get("w_overlap", 0.0)),
            correlated_blocks=correlated,
            seed=int(payload.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"not a simulation recipe ({exc})") from None


def read_simspec(path) -> SimSpec:
    return simspec_from_dict(_read_json(path))


def write_truth_json(path, truth: GroundTruth, subject_ids: Sequence[str],
                     platform_ids: Sequence[str]) -> None:
    payload = {
        "partition": {
            "subject_ids": list(subject_ids),
            "assignment": list(truth.partition.assignment),
            "n_clusters": truth.partition.n_clusters,
        },
        "indicators": {
            pid: {
                str(c): _pack_bits(truth.indicators[c][k])
                for c in range(truth.partition.n_clusters)
            }
            for k, pid in enumerate(platform_ids)
        },
        "params": {
            sid: {
                pid: {
                    "mu1": float(p.mu1[k]),
                    "var1": float(p.var1[k]),
                    "mu2": float(p.mu2[k]),
                    "var2": float(p.var2[k]),
                }
                for k, pid in enumerate(platform_ids)
            }
            for sid, p in zip(subject_ids, truth.member_params)
        },
    }
    _write_json(path, payload)


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------


def _csv_writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh)


def write_merges_csv(path, dendrogram: Dendrogram) -> None:
    """One row per merge: step, the two member lists, and the total
    log-likelihood after the merge."""
    members: dict[int, tuple[int, ...]] = {
        i: (i,) for i in range(dendrogram.n)
    }
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow(["step", "members_a", "members_b", "loglik"])
        for t, merge in enumerate(dendrogram.merges):
            side_a = members.pop(merge.cluster_a)
            side_b = members.pop(merge.cluster_b)
            members[dendrogram.n + t] = tuple(sorted(side_a + side_b))
            writer.writerow([
                t + 1,
                "|".join(dendrogram.subject_ids[i] for i in side_a),
                "|".join(dendrogram.subject_ids[i] for i in side_b),
                fmt_float(merge.loglik),
            ])


def write_trace_csv(path, dendrogram: Dendrogram) -> None:
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow(["n_clusters", "loglik"])
        for t, ll in enumerate(dendrogram.loglik_trace):
            writer.writerow([dendrogram.n - t, fmt_float(ll)])


def write_tau_csv(path, subject_ids: Sequence[str], tau: np.ndarray) -> None:
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow(["subject", *(f"tau_{c}" for c in range(tau.shape[1]))])
        for sid, row in zip(subject_ids, tau):
            writer.writerow([sid, *(fmt_float(v) for v in row)])


def write_gamma_csv(path, probe_ids: Sequence[str], gamma: np.ndarray) -> None:
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow(["probe_id", "gamma"])
        for probe, value in zip(probe_ids, gamma):
            writer.writerow([probe, fmt_float(value)])


def heatmap_order(gamma_by_cluster: np.ndarray, exclude_eps: float) -> np.ndarray:
    """Probe display order: lexicographically increasing posteriors, cluster
    by cluster, with probes that are flat across clusters dropped.

    ``gamma_by_cluster`` has one row per cluster.  A probe is flat when its
    posterior spread across clusters is at most ``exclude_eps``.
    """
    gamma = np.asarray(gamma_by_cluster, dtype=float)
    if gamma.ndim != 2:
        raise DataError("expected one posterior row per cluster")
    spread = gamma.max(axis=0) - gamma.min(axis=0)
    kept = np.flatnonzero(spread > exclude_eps)
    order = np.lexsort(gamma[::-1, kept])
    return kept[order]


def write_heatmap_order_csv(path, probe_ids: Sequence[str],
                            gamma_by_cluster: np.ndarray,
                            exclude_eps: float) -> None:
    order = heatmap_order(gamma_by_cluster, exclude_eps)
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow([
            "probe_id",
            *(f"gamma_{c}" for c in range(gamma_by_cluster.shape[0])),
        ])
        for j in order:
            writer.writerow([
                probe_ids[j],
                *(fmt_float(v) for v in gamma_by_cluster[:, j]),
            ])


def write_scores_csv(path, subject_ids: Sequence[str], labels: Sequence[str],
                     predicted: Sequence[str], scores: np.ndarray) -> None:
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow(["subject", "label", *(f"score_{lab}" for lab in labels)])
        for sid, pred, row in zip(subject_ids, predicted, scores):
            writer.writerow([sid, pred, *(fmt_float(v) for v in row)])


def write_subject_fits_csv(path, subject_ids: Sequence[str],
                           platform_ids: Sequence[str], fits) -> None:
    fh, writer = _csv_writer(path)
    with fh:
        writer.writerow([
            "subject", "platform", "mu1", "var1", "mu2", "var2", "pi1", "loglik",
        ])
        for sid, fit in zip(subject_ids, fits):
            for k, pid in enumerate(platform_ids):
                writer.writerow([
                    sid, pid,
                    fmt_float(fit.params.mu1[k]),
                    fmt_float(fit.params.var1[k]),
                    fmt_float(fit.params.mu2[k]),
                    fmt_float(fit.params.var2[k]),
                    fmt_float(fit.pi1[k]),
                    fmt_float(fit.platform_logliks[k]),
                ])
