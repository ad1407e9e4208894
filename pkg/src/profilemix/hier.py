"""Greedy likelihood-based agglomeration of subjects with a full merge trace.

Starting from singletons, every step refits the union of each candidate pair
(warm-started from the pair's current member parameters), merges the pair
with the largest log-likelihood gain, and records the resulting total.  Pair
evaluations are cached across steps, so after a merge only candidates
involving the new cluster are computed.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import (
    ClusterFit,
    DataError,
    DataSet,
    DomainError,
    FitConfig,
    FitError,
    Partition,
)
from .cluster import ClusterInit, cluster_init_from_subject_fits, fit_cluster
from .subject import SubjectFitResult, fit_all_subjects

__all__ = ["Merge", "Dendrogram", "hierarchical_cluster", "select_partition"]


@dataclass(frozen=True)
class Merge:
    """One agglomeration step: the two merged cluster ids and the total
    log-likelihood after the merge.

    Cluster ids are creation indices: singletons own 0..n-1 in subject
    order, and the t-th merge (0-based) creates cluster n+t.
    """

    cluster_a: int
    cluster_b: int
    loglik: float


@dataclass(frozen=True)
class Dendrogram:
    """Merge history from n singletons toward one cluster.

    ``loglik_trace`` has one entry more than ``merges`` and holds the total
    log-likelihood of the partition with n, n-1, ... clusters.  A complete
    history reaches a single cluster; the path is shorter when at some step
    no remaining union admits a model-consistent fit, in which case the
    coarser partitions simply do not exist.
    """

    subject_ids: tuple[str, ...]
    merges: tuple[Merge, ...]
    loglik_trace: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "merges", tuple(self.merges))
        object.__setattr__(self, "loglik_trace",
                           tuple(float(v) for v in self.loglik_trace))
        n = len(self.subject_ids)
        if len(self.merges) > n - 1:
            raise DataError(f"expected at most {n - 1} merges, "
                            f"got {len(self.merges)}")
        if len(self.loglik_trace) != len(self.merges) + 1:
            raise DataError(f"expected a trace of length {len(self.merges) + 1}")
        live = set(range(n))
        for t, merge in enumerate(self.merges):
            if merge.cluster_a not in live or merge.cluster_b not in live:
                raise DataError(f"merge {t} references a consumed or unknown cluster")
            if merge.cluster_a == merge.cluster_b:
                raise DataError(f"merge {t} merges a cluster with itself")
            live.discard(merge.cluster_a)
            live.discard(merge.cluster_b)
            live.add(n + t)

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def min_clusters(self) -> int:
        """Smallest cluster count the merge path reaches (1 when complete)."""
        return self.n - len(self.merges)

    def _replay(self, n_clusters: int) -> dict[int, tuple[int, ...]]:
        if not self.min_clusters <= n_clusters <= self.n:
            raise DomainError(
                f"n_clusters must lie in {self.min_clusters}..{self.n}")
        members: dict[int, tuple[int, ...]] = {i: (i,) for i in range(self.n)}
        for t in range(self.n - n_clusters):
            merge = self.merges[t]
            union = tuple(sorted(members.pop(merge.cluster_a)
                                 + members.pop(merge.cluster_b)))
            members[self.n + t] = union
        return members

    def cluster_members_at(self, n_clusters: int) -> tuple[tuple[int, ...], ...]:
        """Clusters of the trace partition with the given size, ordered by
        smallest member index."""
        members = self._replay(n_clusters)
        return tuple(sorted(members.values(), key=lambda c: c[0]))

    def partition_at(self, n_clusters: int) -> Partition:
        clusters = self.cluster_members_at(n_clusters)
        labels = [0] * self.n
        for lab, cluster in enumerate(clusters):
            for idx in cluster:
                labels[idx] = lab
        return Partition(tuple(labels), len(clusters))

    def to_newick(self) -> str:
        """Newick text with node heights equal to the merge step index.

        A complete merge path yields a single tree; a truncated one yields
        one tree per surviving cluster, one per line.
        """
        text: dict[int, str] = {
            i: _newick_label(sid) for i, sid in enumerate(self.subject_ids)
        }
        height: dict[int, float] = {i: 0.0 for i in range(self.n)}
        for t, merge in enumerate(self.merges):
            h = float(t + 1)
            la = h - height.pop(merge.cluster_a)
            lb = h - height.pop(merge.cluster_b)
            text[self.n + t] = (
                f"({text.pop(merge.cluster_a)}:{_fmt_len(la)},"
                f"{text.pop(merge.cluster_b)}:{_fmt_len(lb)})"
            )
            height[self.n + t] = h
        return "\n".join(text[root] + ";" for root in sorted(text))


def _newick_label(name: str) -> str:
    if re.search(r"[\s(),:;\[\]']", name):
        return "'" + name.replace("'", "''") + "'"
    return name


def _fmt_len(x: float) -> str:
    return f"{x:g}"


def _merge_init(fit_a: ClusterFit, fit_b: ClusterFit) -> ClusterInit:
    """Warm start for the union: current member parameters and the
    member-weighted mean of the two mixing weights."""
    by_subject = dict(zip(fit_a.members, fit_a.member_params))
    by_subject.update(zip(fit_b.members, fit_b.member_params))
    union = tuple(sorted(by_subject))
    na, nb = fit_a.n_members, fit_b.n_members
    pi1 = (na * fit_a.pi1 + nb * fit_b.pi1) / (na + nb)
    return ClusterInit(tuple(by_subject[i] for i in union), pi1)


def hierarchical_cluster(data: DataSet, config: FitConfig | None = None, *,
                         threads: int = 1, cold_restart: bool = False,
                         subject_fits: Sequence[SubjectFitResult] | None = None,
                         ) -> Dendrogram:
    """Greedy agglomeration maximizing the total partition log-likelihood.

    Every candidate pair is scored by the gain of refitting its union; the
    pair with the largest gain merges, with exact ties resolved toward the
    lexicographically smallest (a, b) creation indices.  Candidates whose
    union fit collapses or is spurious are skipped; if at some step every
    remaining pair is skipped the agglomeration stops early and the
    dendrogram is truncated at that cluster count.  ``cold_restart`` adds
    one extra evaluation per candidate seeded from the original per-subject
    fits, keeping the better result.
    """
    config = config or FitConfig()
    n = data.n_subjects
    if n < 2:
        raise DataError("hierarchical clustering needs at least 2 subjects")
    if subject_fits is None:
        subject_fits = fit_all_subjects(data, config, threads=threads)
    elif len(subject_fits) != n:
        raise DataError("subject_fits must be index-aligned with the data set")

    clusters: dict[int, ClusterFit] = {}
    for i, sf in enumerate(subject_fits):
        clusters[i] = ClusterFit(
            members=(i,),
            pi1=sf.pi1,
            probe_posteriors=sf.posteriors,
            member_params=(sf.params,),
            loglik=sf.loglik,
            history=(sf.loglik,),
        )

    def evaluate(pair: tuple[int, int]):
        a, b = pair
        fit_a, fit_b = clusters[a], clusters[b]
        union = tuple(sorted(fit_a.members + fit_b.members))
        best = None
        inits = [_merge_init(fit_a, fit_b)]
        if cold_restart:
            inits.append(cluster_init_from_subject_fits(subject_fits, union))
        for init in inits:
            try:
                fit = fit_cluster(data, union, init=init, config=config)
            except FitError:
                continue
            if best is None or fit.loglik > best.loglik:
                best = fit
        return pair, best

    def evaluate_batch(pairs):
        if threads > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(evaluate, pairs))
        else:
            results = [evaluate(p) for p in pairs]
        for pair, fit in results:
            candidates[pair] = fit

    candidates: dict[tuple[int, int], ClusterFit | None] = {}
    evaluate_batch(list(combinations(sorted(clusters), 2)))

    total = sum(fit.loglik for fit in clusters.values())
    trace = [total]
    merges: list[Merge] = []
    for t in range(n - 1):
        best_pair = None
        best_gain = None
        for pair in sorted(candidates):
            fit = candidates[pair]
            if fit is None:
                continue
            gain = fit.loglik - clusters[pair[0]].loglik - clusters[pair[1]].loglik
            if best_gain is None or gain > best_gain:
                best_pair, best_gain = pair, gain
        if best_pair is None:
            break  # all remaining unions are model-inconsistent
        a, b = best_pair
        new_id = n + t
        new_fit = candidates[best_pair]
        del clusters[a], clusters[b]
        for pair in [p for p in candidates if a in p or b in p]:
            del candidates[pair]
        total += best_gain
        clusters[new_id] = new_fit
        merges.append(Merge(a, b, total))
        trace.append(total)
        evaluate_batch([(other, new_id) for other in sorted(clusters)
                        if other != new_id])

    return Dendrogram(tuple(data.subject_ids), tuple(merges), tuple(trace))


def select_partition(dendrogram: Dendrogram, min_cluster_size: int | None = None,
                     forced_k: int | None = None) -> Partition:
    """Choose a partition from the trace.

    By default returns the trace partition with the highest log-likelihood
    (the earliest one, i.e. the largest cluster count, on exact ties).  With
    ``min_cluster_size`` only trace partitions whose smallest cluster meets
    the bound compete.  ``forced_k`` bypasses the search entirely.
    """
    n = dendrogram.n
    if forced_k is not None:
        if not 1 <= forced_k <= n:
            raise DomainError(f"forced_k must lie in 1..{n}")
        return dendrogram.partition_at(forced_k)
    best_k = None
    best_ll = None
    for t, ll in enumerate(dendrogram.loglik_trace):
        k = n - t
        if min_cluster_size is not None:
            sizes = [len(c) for c in dendrogram.cluster_members_at(k)]
            if min(sizes) < min_cluster_size:
                continue
        if best_ll is None or ll > best_ll:
            best_k, best_ll = k, ll
    if best_k is None:
        raise DomainError(
            f"no trace partition has all clusters of size >= {min_cluster_size}"
        )
    return dendrogram.partition_at(best_k)
