"""Synthetic bimodal-profile data with planted structure, plus exact oracles.

The generator plants a known partition, per-cluster 0/1 probe indicators
with a controllable overlap fraction, and per-subject component parameters
jittered around platform anchors.  Optional equicorrelated probe blocks
inject within-block noise correlation through a shared latent factor.  The
module also provides exhaustive small-n partition search and the adjusted
Rand index, both used to validate the greedy clustering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    DataError,
    DataSet,
    DomainError,
    FitConfig,
    FitError,
    Partition,
    PlatformMatrix,
    SubjectParams,
)
from .cluster import cluster_init_from_subject_fits, fit_cluster
from .subject import fit_all_subjects

__all__ = [
    "PlatformSimSpec",
    "CorrelatedBlocks",
    "SimSpec",
    "GroundTruth",
    "generate_dataset",
    "iter_set_partitions",
    "brute_force_best_partition",
    "adjusted_rand_index",
]


@dataclass(frozen=True)
class PlatformSimSpec:
    """Planted-data recipe for one platform.

    ``mu_low``/``mu_high`` are the ranges the two platform anchor means are
    drawn from; per-subject means jitter uniformly around the anchors by at
    most ``subject_jitter``.  ``pi_high`` is the Bernoulli rate of the
    probe indicators, and ``cluster_groups`` (optional) assigns clusters to
    indicator-sharing groups so that selected clusters are identical on this
    platform.
    """

    platform_id: str
    n_probes: int
    mu_low: tuple[float, float]
    mu_high: tuple[float, float]
    var_low: tuple[float, float]
    var_high: tuple[float, float]
    subject_jitter: float = 0.0
    pi_high: float = 0.5
    cluster_groups: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_probes < 1:
            raise DomainError(f"platform {self.platform_id!r}: n_probes must be >= 1")
        for name in ("mu_low", "mu_high", "var_low", "var_high"):
            rng = tuple(float(v) for v in getattr(self, name))
            if len(rng) != 2 or rng[0] > rng[1]:
                raise DomainError(f"platform {self.platform_id!r}: {name} must be "
                                  f"an ordered (low, high) pair")
            object.__setattr__(self, name, rng)
        if self.var_low[0] <= 0.0 or self.var_high[0] <= 0.0:
            raise DomainError(f"platform {self.platform_id!r}: variance ranges "
                              f"must be positive")
        if self.subject_jitter < 0.0:
            raise DomainError(f"platform {self.platform_id!r}: subject_jitter "
                              f"must be non-negative")
        if not 0.0 < self.pi_high < 1.0:
            raise DomainError(f"platform {self.platform_id!r}: pi_high must lie "
                              f"in (0, 1)")
        if self.cluster_groups is not None:
            object.__setattr__(self, "cluster_groups",
                               tuple(int(g) for g in self.cluster_groups))

    def mean_feasible(self) -> bool:
        """Whether mu1 < mu2 is guaranteed for every subject draw."""
        return (self.mu_low[1] + self.subject_jitter
                < self.mu_high[0] - self.subject_jitter)


@dataclass(frozen=True)
class CorrelatedBlocks:
    """Equicorrelated noise blocks shared by all platforms."""

    block_size: int
    rho: float
    block_count: int

    def __post_init__(self) -> None:
        if self.block_size < 2:
            raise DomainError("block_size must be >= 2")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError("rho must lie in [0, 1)")
        if self.block_count < 1:
            raise DomainError("block_count must be >= 1")


@dataclass(frozen=True)
class SimSpec:
    """Full planted-data recipe; deterministic given ``seed``."""

    n_per_cluster: tuple[int, ...]
    platforms: tuple[PlatformSimSpec, ...]
    w_overlap: float = 0.0
    correlated_blocks: CorrelatedBlocks | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_per_cluster",
                           tuple(int(v) for v in self.n_per_cluster))
        object.__setattr__(self, "platforms", tuple(self.platforms))
        if not self.n_per_cluster or any(v < 1 for v in self.n_per_cluster):
            raise DomainError("n_per_cluster must hold positive sizes")
        if not self.platforms:
            raise DomainError("at least one platform is required")
        ids = [p.platform_id for p in self.platforms]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate platform ids")
        if not 0.0 <= self.w_overlap <= 1.0:
            raise DomainError("w_overlap must lie in [0, 1]")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        k = len(self.n_per_cluster)
        for plat in self.platforms:
            if plat.cluster_groups is not None and len(plat.cluster_groups) != k:
                raise DomainError(f"platform {plat.platform_id!r}: cluster_groups "
                                  f"must list one group per cluster")

    @property
    def n_subjects(self) -> int:
        return sum(self.n_per_cluster)

    @property
    def n_clusters(self) -> int:
        return len(self.n_per_cluster)


@dataclass(frozen=True)
class GroundTruth:
    """Planted partition, per-cluster indicators, and subject parameters."""

    partition: Partition
    indicators: tuple[tuple[np.ndarray, ...], ...]
    member_params: tuple[SubjectParams, ...]


def generate_dataset(spec: SimSpec) -> tuple[DataSet, GroundTruth]:
    """Draw one data set from the recipe.

    Raises if a mean recipe cannot guarantee mu1 < mu2 for every subject, or
    if the correlated blocks do not fit inside every platform.
    """
    for plat in spec.platforms:
        if not plat.mean_feasible():
            raise DomainError(
                f"platform {plat.platform_id!r}: mu_low plus jitter overlaps "
                f"mu_high minus jitter, so mu1 < mu2 cannot be guaranteed"
            )
        if spec.correlated_blocks is not None:
            need = spec.correlated_blocks.block_size * spec.correlated_blocks.block_count
            if need > plat.n_probes:
                raise DomainError(
                    f"platform {plat.platform_id!r}: {need} correlated probes "
                    f"do not fit into {plat.n_probes}"
                )

    rng = np.random.default_rng(spec.seed)
    n = spec.n_subjects
    n_clusters = spec.n_clusters
    labels = np.repeat(np.arange(n_clusters), spec.n_per_cluster)
    partition = Partition(tuple(int(v) for v in labels), n_clusters)

    matrices = []
    indicators_per_platform = []
    mu1 = np.empty((n, len(spec.platforms)))
    var1 = np.empty_like(mu1)
    mu2 = np.empty_like(mu1)
    var2 = np.empty_like(mu1)
    for k, plat in enumerate(spec.platforms):
        g = plat.n_probes
        anchor_low = rng.uniform(*plat.mu_low)
        anchor_high = rng.uniform(*plat.mu_high)

        shared_mask = rng.random(g) < spec.w_overlap
        shared = rng.random(g) < plat.pi_high
        groups = plat.cluster_groups or tuple(range(n_clusters))
        group_draws = {
            gid: rng.random(g) < plat.pi_high for gid in sorted(set(groups))
        }
        cluster_w = np.stack([
            np.where(shared_mask, shared, group_draws[groups[c]])
            for c in range(n_clusters)
        ]).astype(float)

        mu1[:, k] = anchor_low + plat.subject_jitter * rng.uniform(-1.0, 1.0, n)
        mu2[:, k] = anchor_high + plat.subject_jitter * rng.uniform(-1.0, 1.0, n)
        var1[:, k] = rng.uniform(*plat.var_low, n)
        var2[:, k] = rng.uniform(*plat.var_high, n)

        noise = rng.standard_normal((g, n))
        if spec.correlated_blocks is not None:
            blocks = spec.correlated_blocks
            covered = blocks.block_size * blocks.block_count
            latent = rng.standard_normal((blocks.block_count, n))
            noise[:covered] = (
                math.sqrt(blocks.rho) * np.repeat(latent, blocks.block_size, axis=0)
                + math.sqrt(1.0 - blocks.rho) * noise[:covered]
            )

        w_subject = cluster_w[labels]
        means = np.where(w_subject == 1.0, mu1[:, k, None], mu2[:, k, None])
        sds = np.sqrt(np.where(w_subject == 1.0, var1[:, k, None], var2[:, k, None]))
        values = (means + sds * noise.T).T

        probe_ids = tuple(f"p{j:05d}" for j in range(g))
        matrices.append(PlatformMatrix(plat.platform_id, probe_ids, values))
        indicators_per_platform.append([vec.astype(int) for vec in cluster_w])

    subject_ids = tuple(f"s{i:03d}" for i in range(n))
    data = DataSet(tuple(matrices), subject_ids)
    member_params = tuple(
        SubjectParams(mu1[i], var1[i], mu2[i], var2[i]) for i in range(n)
    )
    indicators = tuple(
        tuple(indicators_per_platform[k][c] for k in range(len(spec.platforms)))
        for c in range(n_clusters)
    )
    return data, GroundTruth(partition, indicators, member_params)


def iter_set_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """All set partitions of range(n) as canonical label tuples.

    Labels follow the restricted-growth convention (element 0 gets label 0,
    element i at most one more than the running maximum), enumerated in
    lexicographic order.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    labels = [0] * n

    def rec(i: int, max_label: int) -> Iterator[tuple[int, ...]]:
        if i == n:
            yield tuple(labels)
            return
        for lab in range(max_label + 2):
            labels[i] = lab
            yield from rec(i + 1, max(max_label, lab))

    yield from rec(1, 0) if n > 1 else iter([(0,)])


def brute_force_best_partition(data: DataSet, config: FitConfig | None = None,
                               n_max: int = 8) -> tuple[Partition, float]:
    """Exhaustively maximize the partition log-likelihood over all set
    partitions of the subjects.

    Cluster fits are cached per member subset, so the cost is one fit per
    non-empty subset rather than per partition.  Refuses data sets with more
    than ``n_max`` subjects (the partition count is the Bell number).  Ties
    go to the earliest partition in enumeration order.
    """
    config = config or FitConfig()
    n = data.n_subjects
    if n > n_max:
        raise DomainError(f"refusing exhaustive search for n={n} > n_max={n_max}")
    subject_fits = fit_all_subjects(data, config)
    cache: dict[tuple[int, ...], float | None] = {
        (i,): subject_fits[i].loglik for i in range(n)
    }

    def subset_loglik(members: tuple[int, ...]) -> float | None:
        if members not in cache:
            try:
                fit = fit_cluster(
                    data, members,
                    init=cluster_init_from_subject_fits(subject_fits, members),
                    config=config,
                )
                cache[members] = fit.loglik
            except FitError:
                cache[members] = None
        return cache[members]

    best_labels = None
    best_ll = None
    for labels in iter_set_partitions(n):
        part = Partition(labels, max(labels) + 1)
        total = 0.0
        for members in part.clusters():
            ll = subset_loglik(members)
            if ll is None:
                total = None
                break
            total += ll
        if total is None:
            continue
        if best_ll is None or total > best_ll:
            best_labels, best_ll = labels, total
    if best_labels is None:
        raise FitError("no partition admits a valid fit")
    return Partition(best_labels, max(best_labels) + 1), float(best_ll)


def adjusted_rand_index(first: Partition, second: Partition) -> float:
    """Hubert-Arabie adjusted Rand index between two partitions.

    Computed from the pair-counting contingency table; 1.0 for identical
    partitions (including the degenerate cases where the correction has a
    zero denominator), 0 in expectation under independent random labelings.
    """
    if first.n != second.n:
        raise DataError("partitions must cover the same subjects")
    table = np.zeros((first.n_clusters, second.n_clusters))
    np.add.at(table, (np.array(first.assignment), np.array(second.assignment)), 1.0)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    index = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(float(first.n))
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))
