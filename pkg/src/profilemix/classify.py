"""Discriminant classification of new subjects against trained clusters.

Training rounds each cluster's converged probe posteriors into fixed 0/1
indicator vectors.  Scoring a new subject against a cluster plugs the
indicator-weighted means and population variances (the closed-form maximizers
given the indicators) back into the classification log-likelihood; the
subject goes to the cluster with the largest maximized score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DataError,
    DataSet,
    DegenerateVarianceError,
    FitConfig,
    Partition,
    UnclassifiableError,
    log_normal_density,
)
from .cluster import cluster_init_from_subject_fits, fit_cluster
from .subject import SubjectFitResult, fit_all_subjects

__all__ = [
    "ClassifierCluster",
    "Classifier",
    "DiscriminantFit",
    "ClassificationResult",
    "train_classifier",
    "discriminant_fit",
    "classify_subject",
    "classify_all",
]


@dataclass(frozen=True)
class ClassifierCluster:
    """One trained cluster: its label and per-platform 0/1 indicators."""

    label: str
    indicators: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        vecs = []
        for vec in self.indicators:
            arr = np.array(vec, dtype=int)
            if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
                raise DataError(f"cluster {self.label!r}: indicators must be 0/1 vectors")
            arr.setflags(write=False)
            vecs.append(arr)
        object.__setattr__(self, "indicators", tuple(vecs))

    def one_sided(self) -> tuple[bool, ...]:
        """Per platform, whether every probe landed on the same side."""
        return tuple(bool(np.all(v == v[0])) for v in self.indicators)


@dataclass(frozen=True)
class Classifier:
    """Trained discriminant classifier: probe order plus cluster indicators."""

    platform_ids: tuple[str, ...]
    probe_ids: tuple[tuple[str, ...], ...]
    clusters: tuple[ClassifierCluster, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "platform_ids", tuple(self.platform_ids))
        object.__setattr__(self, "probe_ids",
                           tuple(tuple(p) for p in self.probe_ids))
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if len(self.platform_ids) != len(self.probe_ids):
            raise DataError("platform_ids and probe_ids must be aligned")
        if not self.clusters:
            raise DataError("a classifier needs at least one cluster")
        labels = [c.label for c in self.clusters]
        if len(set(labels)) != len(labels):
            raise DataError("duplicate cluster labels")
        for cluster in self.clusters:
            if len(cluster.indicators) != len(self.platform_ids):
                raise DataError(f"cluster {cluster.label!r}: one indicator vector "
                                f"per platform is required")
            for vec, probes in zip(cluster.indicators, self.probe_ids):
                if vec.shape[0] != len(probes):
                    raise DataError(f"cluster {cluster.label!r}: indicator length "
                                    f"does not match the probe list")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.clusters)


@dataclass(frozen=True)
class DiscriminantFit:
    """Closed-form indicator-weighted parameters and the maximized score.

    Components that receive no probes on a platform are vacuous: their
    parameters are NaN and they contribute nothing to the score.
    """

    mu1: np.ndarray
    var1: np.ndarray
    mu2: np.ndarray
    var2: np.ndarray
    platform_logliks: np.ndarray
    loglik: float


@dataclass(frozen=True)
class ClassificationResult:
    """Predicted label plus the per-cluster maximized scores (training order)."""

    label: str
    scores: np.ndarray


def train_classifier(data: DataSet, partition: Partition,
                     config: FitConfig | None = None,
                     subject_fits: Sequence[SubjectFitResult] | None = None,
                     ) -> Classifier:
    """Fit each cluster of the partition and round its posteriors at 0.5."""
    config = config or FitConfig()
    if partition.n != data.n_subjects:
        raise DataError("partition and data set disagree on subject count")
    if subject_fits is None:
        subject_fits = fit_all_subjects(data, config)
    clusters = []
    for label, members in enumerate(partition.clusters()):
        cfit = fit_cluster(data, members,
                           init=cluster_init_from_subject_fits(subject_fits, members),
                           config=config)
        indicators = tuple(
            (g >= 0.5).astype(int) for g in cfit.probe_posteriors
        )
        clusters.append(ClassifierCluster(label=str(label), indicators=indicators))
    return Classifier(
        platform_ids=data.platform_ids,
        probe_ids=tuple(p.probe_ids for p in data.platforms),
        clusters=tuple(clusters),
    )


def discriminant_fit(profile: Sequence[np.ndarray],
                     indicators: Sequence[np.ndarray]) -> DiscriminantFit:
    """Closed-form component estimates for one subject under fixed indicators.

    Per platform, component 1 gets the mean and population variance of the
    probes whose indicator is 1, component 2 the complement.  An empty
    component is vacuous (NaN parameters, no contribution); a non-empty
    component whose probes are all identical has zero variance and raises
    ``DegenerateVarianceError``.
    """
    vectors = [np.asarray(v, dtype=float) for v in profile]
    if len(vectors) != len(indicators):
        raise DataError("profile and indicators must cover the same platforms")
    m = len(vectors)
    mu1 = np.full(m, np.nan)
    var1 = np.full(m, np.nan)
    mu2 = np.full(m, np.nan)
    var2 = np.full(m, np.nan)
    platform_logliks = np.zeros(m)
    for k, (y, w) in enumerate(zip(vectors, indicators)):
        w = np.asarray(w, dtype=float)
        if y.shape != w.shape or y.ndim != 1:
            raise DataError(f"platform {k}: profile/indicator shape mismatch")
        if not np.all((w == 0.0) | (w == 1.0)):
            raise DataError(f"platform {k}: indicators must be 0/1")
        ll = 0.0
        for weights, mu_arr, var_arr, side in (
            (w, mu1, var1, 1),
            (1.0 - w, mu2, var2, 2),
        ):
            total = float(weights.sum())
            if total == 0.0:
                continue
            mean = float(weights @ y) / total
            var = float(weights @ (y - mean) ** 2) / total
            if var == 0.0:
                raise DegenerateVarianceError(
                    f"platform {k}: component {side} has zero variance"
                )
            mu_arr[k] = mean
            var_arr[k] = var
            mask = weights == 1.0
            ll += float(log_normal_density(y[mask], mean, var).sum())
        platform_logliks[k] = ll
    return DiscriminantFit(
        mu1=mu1, var1=var1, mu2=mu2, var2=var2,
        platform_logliks=platform_logliks,
        loglik=float(platform_logliks.sum()),
    )


def classify_subject(profile: Sequence[np.ndarray],
                     classifier: Classifier) -> ClassificationResult:
    """Assign a profile to the cluster with the largest maximized score.

    Clusters whose closed-form fit is degenerate score -inf; exact ties go
    to the cluster that comes first in training order.  If every cluster is
    degenerate the subject is unclassifiable.
    """
    scores = np.empty(len(classifier.clusters))
    for c, cluster in enumerate(classifier.clusters):
        try:
            scores[c] = discriminant_fit(profile, cluster.indicators).loglik
        except DegenerateVarianceError:
            scores[c] = float("-inf")
    if not np.any(np.isfinite(scores)):
        raise UnclassifiableError("every cluster yields a degenerate fit")
    best = int(np.argmax(scores))
    return ClassificationResult(label=classifier.clusters[best].label, scores=scores)


def align_to_classifier(data: DataSet, classifier: Classifier) -> list[list[np.ndarray]]:
    """Per-subject profiles reordered to the classifier's probe order.

    Every classifier probe must be present on the matching platform; extra
    probes in the data are ignored.
    """
    rows_per_platform = []
    for pid, probes in zip(classifier.platform_ids, classifier.probe_ids):
        plat = data.platform(pid)
        index = {probe: i for i, probe in enumerate(plat.probe_ids)}
        missing = [p for p in probes if p not in index]
        if missing:
            raise DataError(
                f"platform {pid!r}: {len(missing)} classifier probe(s) missing "
                f"from the data (first: {missing[0]!r})"
            )
        rows_per_platform.append([index[p] for p in probes])
    profiles = []
    for i in range(data.n_subjects):
        profile = []
        for pid, rows in zip(classifier.platform_ids, rows_per_platform):
            plat = data.platform(pid)
            profile.append(plat.values[rows, i])
        profiles.append(profile)
    return profiles


def classify_all(data: DataSet, classifier: Classifier) -> list[ClassificationResult]:
    """Classify every subject in the data set after probe alignment."""
    return [classify_subject(profile, classifier)
            for profile in align_to_classifier(data, classifier)]
