"""Closed-form discriminant classification."""

import numpy as np
import pytest
from scipy.stats import norm

from profilemix import (
    Classifier,
    ClassifierCluster,
    DataError,
    DegenerateVarianceError,
    FitConfig,
    Partition,
    PlatformMatrix,
    DataSet,
    UnclassifiableError,
    classify_all,
    classify_subject,
    discriminant_fit,
    generate_dataset,
    train_classifier,
)

from helpers import planted_spec, single_platform


def test_discriminant_hand_values():
    fit = discriminant_fit([np.array([1.0, 2.0, 7.0, 9.0])],
                           [np.array([1, 1, 0, 0])])
    assert fit.mu1[0] == pytest.approx(1.5)
    assert fit.var1[0] == pytest.approx(0.25)  # population variance
    assert fit.mu2[0] == pytest.approx(8.0)
    assert fit.var2[0] == pytest.approx(1.0)
    expected = (norm.logpdf([1.0, 2.0], 1.5, 0.5).sum()
                + norm.logpdf([7.0, 9.0], 8.0, 1.0).sum())
    assert fit.loglik == pytest.approx(expected, rel=1e-12)


def test_discriminant_single_probe_component_is_degenerate():
    with pytest.raises(DegenerateVarianceError, match="component 2"):
        discriminant_fit([np.array([1.0, 2.0, 3.0])], [np.array([1, 1, 0])])


def test_discriminant_all_ones_leaves_component_two_vacuous():
    y = np.array([0.5, 1.5, 4.0, 2.0])
    fit = discriminant_fit([y], [np.ones(4, dtype=int)])
    assert fit.mu1[0] == pytest.approx(y.mean())
    assert fit.var1[0] == pytest.approx(y.var())  # ddof=0
    assert np.isnan(fit.mu2[0]) and np.isnan(fit.var2[0])
    assert fit.loglik == pytest.approx(
        norm.logpdf(y, y.mean(), y.std()).sum(), rel=1e-12
    )


def test_discriminant_estimates_admit_no_ascent_direction():
    """Finite-difference probe of the closed-form maximizer."""
    rng = np.random.default_rng(0)
    y = rng.normal(size=40)
    w = (rng.random(40) < 0.4).astype(int)
    fit = discriminant_fit([y], [w])

    def score(mu1, var1, mu2, var2):
        return (norm.logpdf(y[w == 1], mu1, np.sqrt(var1)).sum()
                + norm.logpdf(y[w == 0], mu2, np.sqrt(var2)).sum())

    base = score(fit.mu1[0], fit.var1[0], fit.mu2[0], fit.var2[0])
    assert base == pytest.approx(fit.loglik, rel=1e-12)
    theta = [fit.mu1[0], fit.var1[0], fit.mu2[0], fit.var2[0]]
    for idx in range(4):
        for sign in (+1, -1):
            bumped = list(theta)
            step = 1e-4 * max(1.0, abs(bumped[idx]))
            bumped[idx] += sign * step
            assert score(*bumped) <= base + 1e-12


def test_one_sided_flag():
    cluster = ClassifierCluster("0", (np.ones(5, dtype=int),))
    assert cluster.one_sided() == (True,)
    mixed = ClassifierCluster("0", (np.array([1, 0, 1, 0, 1]),))
    assert mixed.one_sided() == (False,)


def test_trained_indicators_match_planted_truth():
    spec = planted_spec(n_per_cluster=(5, 5), n_probes=400, overlap=0.5, seed=9)
    data, truth = generate_dataset(spec)
    clf = train_classifier(data, truth.partition, FitConfig(restarts=4, seed=0))
    for c, cluster in enumerate(clf.clusters):
        agreement = (cluster.indicators[0] == truth.indicators[c][0]).mean()
        assert agreement >= 0.99


def test_round_trip_on_training_subjects():
    spec = planted_spec(n_per_cluster=(5, 5, 5), n_probes=400, overlap=0.7, seed=10)
    data, truth = generate_dataset(spec)
    clf = train_classifier(data, truth.partition, FitConfig(restarts=4, seed=0))
    results = classify_all(data, clf)
    got = [int(r.label) for r in results]
    assert got == list(truth.partition.assignment)
    for r in results:
        ordered = np.sort(r.scores)
        assert ordered[-1] - ordered[-2] > 0  # strictly positive margin


def test_classify_unseen_subject_from_planted_pattern():
    spec = planted_spec(n_per_cluster=(5, 5), n_probes=400, overlap=0.5, seed=11)
    data, truth = generate_dataset(spec)
    clf = train_classifier(data, truth.partition, FitConfig(restarts=4, seed=0))
    # synthesize a fresh subject following cluster 1's indicator pattern
    rng = np.random.default_rng(99)
    w = truth.indicators[1][0]
    y = np.where(w == 1, rng.normal(-1.7, 0.4, w.size), rng.normal(1.7, 0.4, w.size))
    result = classify_subject([y], clf)
    assert result.label == "1"


def test_classify_handles_permuted_probe_order():
    spec = planted_spec(n_per_cluster=(4, 4), n_probes=200, overlap=0.5, seed=12)
    data, truth = generate_dataset(spec)
    clf = train_classifier(data, truth.partition, FitConfig(restarts=4, seed=0))
    base = classify_all(data, clf)

    rng = np.random.default_rng(0)
    perm = rng.permutation(200)
    plat = data.platforms[0]
    shuffled = DataSet(
        (PlatformMatrix(plat.platform_id,
                        tuple(plat.probe_ids[j] for j in perm),
                        plat.values[perm]),),
        data.subject_ids,
    )
    again = classify_all(shuffled, clf)
    assert [r.label for r in again] == [r.label for r in base]
    for a, b in zip(base, again):
        np.testing.assert_allclose(a.scores, b.scores, rtol=1e-14)


def test_classify_requires_every_probe():
    spec = planted_spec(n_per_cluster=(4, 4), n_probes=50, overlap=0.5, seed=13)
    data, truth = generate_dataset(spec)
    clf = train_classifier(data, truth.partition, FitConfig(restarts=4, seed=0))
    plat = data.platforms[0]
    truncated = DataSet(
        (PlatformMatrix(plat.platform_id, plat.probe_ids[:-3], plat.values[:-3]),),
        data.subject_ids,
    )
    with pytest.raises(DataError, match="3 classifier probe"):
        classify_all(truncated, clf)


def test_unclassifiable_when_every_cluster_degenerates():
    clf = Classifier(
        platform_ids=("p",),
        probe_ids=(("g0", "g1", "g2"),),
        clusters=(
            ClassifierCluster("a", (np.array([1, 0, 0]),)),
            ClassifierCluster("b", (np.array([0, 1, 0]),)),
        ),
    )
    # each cluster isolates one probe in a singleton component -> zero
    # variance everywhere; and the two-probe complement is constant too
    with pytest.raises(UnclassifiableError):
        classify_subject([np.array([1.0, 1.0, 1.0])], clf)


def test_classifier_rejects_duplicate_labels():
    with pytest.raises(DataError):
        Classifier(
            platform_ids=("p",),
            probe_ids=(("g0",),),
            clusters=(
                ClassifierCluster("x", (np.array([1]),)),
                ClassifierCluster("x", (np.array([0]),)),
            ),
        )
