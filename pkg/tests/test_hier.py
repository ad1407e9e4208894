"""Greedy agglomeration, trace-based selection, and Newick export."""

import numpy as np
import pytest

from profilemix import (
    Dendrogram,
    DomainError,
    FitConfig,
    Merge,
    adjusted_rand_index,
    brute_force_best_partition,
    fit_subject,
    fit_cluster,
    generate_dataset,
    hierarchical_cluster,
    select_partition,
)

from helpers import planted_spec, single_platform


def _two_cluster_data(seed, per_cluster=3, n_probes=80):
    spec = planted_spec(n_per_cluster=(per_cluster, per_cluster),
                        n_probes=n_probes, overlap=0.5, seed=seed)
    return generate_dataset(spec)


def test_two_subjects_single_merge():
    data, _ = _two_cluster_data(seed=0, per_cluster=1, n_probes=60)
    config = FitConfig(restarts=4, seed=0)
    dend = hierarchical_cluster(data, config)
    assert dend.n == 2
    assert len(dend.merges) == 1
    ll_singletons = sum(
        fit_subject(data.subject_profile(i), config).loglik for i in range(2)
    )
    ll_merged = fit_cluster(data, (0, 1), config=config).loglik
    assert dend.loglik_trace[0] == pytest.approx(ll_singletons, rel=1e-10)
    assert dend.loglik_trace[1] == pytest.approx(ll_merged, rel=1e-8)


def test_planted_two_clusters_merge_within_first():
    data, truth = _two_cluster_data(seed=1)
    dend = hierarchical_cluster(data, FitConfig(restarts=4, seed=0))
    labels = truth.partition.assignment
    members = {i: (i,) for i in range(6)}
    for t, merge in enumerate(dend.merges[:4]):
        side_a = members.pop(merge.cluster_a)
        side_b = members.pop(merge.cluster_b)
        union = side_a + side_b
        members[6 + t] = union
        assert len({labels[i] for i in union}) == 1, (
            f"step {t}: cross-cluster merge of {union}"
        )
    assert int(np.argmax(dend.loglik_trace)) == 4  # K = 6 - 4 = 2
    part = select_partition(dend)
    assert part.n_clusters == 2
    assert adjusted_rand_index(part, truth.partition) == 1.0


def test_greedy_agrees_with_exhaustive_search():
    data, _ = _two_cluster_data(seed=2)
    config = FitConfig(restarts=4, seed=0)
    dend = hierarchical_cluster(data, config)
    greedy = select_partition(dend)
    oracle, oracle_ll = brute_force_best_partition(data, config)
    assert greedy.assignment == oracle.assignment
    slack = 10 * config.rel_tol * max(1.0, abs(oracle_ll))
    assert max(dend.loglik_trace) <= oracle_ll + slack


def test_thread_count_does_not_change_dendrogram():
    data, _ = _two_cluster_data(seed=3)
    config = FitConfig(restarts=4, seed=0)
    serial = hierarchical_cluster(data, config, threads=1)
    threaded = hierarchical_cluster(data, config, threads=5)
    assert serial.merges == threaded.merges
    assert serial.loglik_trace == threaded.loglik_trace


def test_cold_restart_never_hurts():
    data, _ = _two_cluster_data(seed=4)
    config = FitConfig(restarts=4, seed=0)
    warm = hierarchical_cluster(data, config)
    cold = hierarchical_cluster(data, config, cold_restart=True)
    # per-step gains are maximized over a superset of candidate fits
    assert max(cold.loglik_trace) >= max(warm.loglik_trace) - 1e-6


def _toy_dendrogram():
    # three subjects, trace peaking at K=2
    merges = (Merge(0, 1, -5.0), Merge(2, 3, -8.0))
    return Dendrogram(("s0", "s1", "s2"), merges, (-10.0, -5.0, -8.0))


def test_select_partition_takes_trace_argmax():
    part = select_partition(_toy_dendrogram())
    assert part.n_clusters == 2
    assert part.assignment == (0, 0, 1)


def test_select_partition_forced_k():
    dend = _toy_dendrogram()
    assert select_partition(dend, forced_k=3).assignment == (0, 1, 2)
    assert select_partition(dend, forced_k=1).n_clusters == 1
    with pytest.raises(DomainError):
        select_partition(dend, forced_k=0)
    with pytest.raises(DomainError):
        select_partition(dend, forced_k=4)


def test_select_partition_min_cluster_size():
    # the K=2 peak keeps a singleton, so min size 2 must fall through to K=1
    dend = _toy_dendrogram()
    part = select_partition(dend, min_cluster_size=2)
    assert part.n_clusters == 1
    with pytest.raises(DomainError):
        select_partition(dend, min_cluster_size=4)


def test_partition_at_replays_merges():
    dend = _toy_dendrogram()
    assert dend.partition_at(3).assignment == (0, 1, 2)
    assert dend.partition_at(2).assignment == (0, 0, 1)
    assert dend.partition_at(1).assignment == (0, 0, 0)
    with pytest.raises(DomainError):
        dend.partition_at(4)


def test_newick_export_structure():
    # children appear in (cluster_a, cluster_b) order with heights equal to
    # the 1-based merge step
    text = _toy_dendrogram().to_newick()
    assert text == "(s2:2,(s0:1,s1:1):1);"


def test_newick_quotes_special_labels():
    merges = (Merge(0, 1, -1.0),)
    dend = Dendrogram(("a:b", "it's"), merges, (-2.0, -1.0))
    text = dend.to_newick()
    assert "'a:b'" in text
    assert "'it''s'" in text


def test_dendrogram_validates_replay():
    from profilemix import DataError

    with pytest.raises(DataError):
        Dendrogram(("s0", "s1"), (Merge(0, 5, -1.0),), (-2.0, -1.0))
    with pytest.raises(DataError):
        Dendrogram(("s0", "s1"), (Merge(0, 1, -1.0),), (-2.0,))


def test_merge_path_truncates_when_no_union_is_consistent():
    # two subjects with exactly mirrored bimodal profiles: every pooled fit
    # leaves one member with its components inverted, so the final merge is
    # impossible and the trace stops at two clusters
    rng = np.random.default_rng(17)
    half = np.concatenate([np.full(20, -2.0), np.full(20, 2.0)])
    y0 = half + 0.1 * rng.standard_normal(40)
    y1 = -half + 0.1 * rng.standard_normal(40)
    data = single_platform(np.column_stack([y0, y1]))
    dend = hierarchical_cluster(data, FitConfig(restarts=4, seed=0))
    assert dend.merges == ()
    assert len(dend.loglik_trace) == 1
    assert dend.min_clusters == 2
    assert select_partition(dend).n_clusters == 2
    assert dend.to_newick() == "s0;\ns1;"
    with pytest.raises(DomainError, match="2..2"):
        dend.partition_at(1)
