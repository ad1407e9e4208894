"""Iterative mixture refinement of an initial partition.

Subjects get soft multinomial memberships over clusters whose probe
indicators are held as explicit 0/1 vectors (initialized by rounding each
starting cluster's converged posteriors).  EM then alternates memberships,
cluster weights, per-subject component parameters, and optionally the
indicator vectors themselves via a responsibility-weighted sign test.  The
final partition assigns each subject to its highest-responsibility cluster.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import (
    DataError,
    DataSet,
    FitConfig,
    FitError,
    Partition,
    SubjectParams,
    log_normal_density,
    _rel_converged,
    _stack_params,
)
from .cluster import cluster_init_from_subject_fits, fit_cluster
from .subject import SubjectFitResult, fit_all_subjects

__all__ = ["RefineResult", "membership_e_step", "refine_partition", "refine_best"]

RESPONSIBILITY_DROP_TOL = 1e-8


@dataclass(frozen=True)
class RefineResult:
    """Converged refinement state.

    ``responsibilities`` is row-stochastic with one column per surviving
    cluster; ``indicators`` holds each cluster's fixed-or-updated 0/1 probe
    vectors per platform.  ``mixture_loglik`` is the converged value of the
    refinement objective, while ``objective_loglik`` re-scores the final
    hard partition under the original marginal likelihood (reported for
    comparison across starting points, never guaranteed to increase).
    ``history`` is the per-iteration mixture log-likelihood.
    """

    partition: Partition
    responsibilities: np.ndarray
    weights: np.ndarray
    indicators: tuple[tuple[np.ndarray, ...], ...]
    mixture_loglik: float
    objective_loglik: float
    history: tuple[float, ...]


def _density_pairs(transposed, mu1, var1, mu2, var2):
    """Per platform, the (n, G) component log-density matrices."""
    out = []
    for k, Yt in enumerate(transposed):
        lf1 = log_normal_density(Yt, mu1[:, k, None], var1[:, k, None])
        lf0 = log_normal_density(Yt, mu2[:, k, None], var2[:, k, None])
        out.append((lf1, lf0))
    return out


def _membership(density_pairs, indicator_mats, weights):
    """Responsibilities and mixture log-likelihood at the current state."""
    n = density_pairs[0][0].shape[0]
    scores = np.tile(np.log(weights), (n, 1))
    for (lf1, lf0), W in zip(density_pairs, indicator_mats):
        scores += (lf1 - lf0) @ W.T + lf0.sum(axis=1)[:, None]
    row_lse = logsumexp(scores, axis=1)
    tau = np.exp(scores - row_lse[:, None])
    return tau, float(row_lse.sum())


def membership_e_step(data: DataSet, indicators, member_params, weights) -> np.ndarray:
    """Row-stochastic subject-by-cluster responsibilities.

    tau[i, c] is proportional to weights[c] times the classification
    likelihood of subject i under cluster c's indicator vectors, evaluated
    with per-subject max subtraction so extreme log scores cannot underflow
    a whole row.
    """
    params = tuple(member_params)
    if len(params) != data.n_subjects:
        raise DataError("one parameter set per subject is required")
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DataError("weights must be a non-empty vector")
    if np.any(w <= 0.0) or not math.isclose(float(w.sum()), 1.0, rel_tol=1e-9):
        raise DataError("weights must be positive and sum to 1")
    indicator_mats = _stack_indicators(data, indicators)
    if indicator_mats[0].shape[0] != w.size:
        raise DataError("weights and indicators disagree on cluster count")
    transposed = [np.ascontiguousarray(p.values.T) for p in data.platforms]
    mu1, var1, mu2, var2 = _stack_params(params)
    pairs = _density_pairs(transposed, mu1, var1, mu2, var2)
    tau, _ = _membership(pairs, indicator_mats, w)
    return tau


def _stack_indicators(data: DataSet, indicators) -> list[np.ndarray]:
    """Cluster-major indicator lists stacked as per-platform (K, G) arrays."""
    clusters = list(indicators)
    if not clusters:
        raise DataError("at least one cluster is required")
    mats = []
    for k, plat in enumerate(data.platforms):
        rows = []
        for c, cluster in enumerate(clusters):
            vec = np.asarray(cluster[k], dtype=float)
            if vec.shape != (plat.n_probes,):
                raise DataError(f"cluster {c}: indicator length mismatch on "
                                f"platform {plat.platform_id!r}")
            if not np.all((vec == 0.0) | (vec == 1.0)):
                raise DataError(f"cluster {c}: indicators must be 0/1")
            rows.append(vec)
        mats.append(np.stack(rows))
    return mats


def refine_partition(data: DataSet, init: Partition,
                     config: FitConfig | None = None, *,
                     update_indicators: bool = True,
                     subject_fits: Sequence[SubjectFitResult] | None = None,
                     ) -> RefineResult:
    """Refine an initial partition by membership EM.

    Indicators start from each init cluster's converged probe posteriors
    rounded at 0.5, component parameters from the per-subject fits, and
    weights from the init cluster proportions.  With ``update_indicators``
    each M-step re-optimizes every cluster's indicator vectors (entry 1 iff
    the responsibility-weighted sum of component log-density differences is
    positive); otherwise they stay frozen at their initial rounding.
    Clusters whose total responsibility falls below 1e-8 are dropped with a
    warning.  Subjects end up in their argmax-responsibility cluster.
    """
    config = config or FitConfig()
    if init.n != data.n_subjects:
        raise DataError("init partition and data set disagree on subject count")
    if subject_fits is None:
        subject_fits = fit_all_subjects(data, config)
    elif len(subject_fits) != data.n_subjects:
        raise DataError("subject_fits must be index-aligned with the data set")

    n = data.n_subjects
    m = data.n_platforms
    indicator_mats: list[np.ndarray] = [
        np.empty((init.n_clusters, plat.n_probes)) for plat in data.platforms
    ]
    for c, members in enumerate(init.clusters()):
        try:
            cfit = fit_cluster(data, members,
                               init=cluster_init_from_subject_fits(subject_fits, members),
                               config=config)
            rounded = [(cfit.probe_posteriors[k] >= 0.5).astype(float)
                       for k in range(m)]
        except FitError:
            # the shared fit can fail on an incoherent starting cluster;
            # fall back to a majority vote of the members' own posteriors so
            # refinement can still run and reassign the members
            rounded = [
                (np.mean([(subject_fits[i].posteriors[k] >= 0.5) for i in members],
                         axis=0) >= 0.5).astype(float)
                for k in range(m)
            ]
        for k in range(m):
            indicator_mats[k][c] = rounded[k]
    weights = np.array(init.sizes(), dtype=float) / n

    mu1, var1, mu2, var2 = (a.copy() for a in
                            _stack_params([sf.params for sf in subject_fits]))
    transposed = [np.ascontiguousarray(p.values.T) for p in data.platforms]
    floors = np.stack(
        [config.variance_floor_factor * np.var(Yt, axis=1, ddof=1) for Yt in transposed],
        axis=1,
    )

    pairs = _density_pairs(transposed, mu1, var1, mu2, var2)
    history: list[float] = []
    prev = None
    tau = None
    for _ in range(config.max_iter):
        tau, ll = _membership(pairs, indicator_mats, weights)
        history.append(ll)
        if prev is not None and _rel_converged(ll, prev, config.rel_tol):
            break
        prev = ll

        mass = tau.sum(axis=0)
        keep = mass >= RESPONSIBILITY_DROP_TOL
        if not keep.all():
            dropped = int((~keep).sum())
            warnings.warn(f"dropping {dropped} cluster(s) with vanishing "
                          f"total responsibility", stacklevel=2)
            tau = tau[:, keep]
            tau = tau / tau.sum(axis=1)[:, None]
            indicator_mats = [W[keep] for W in indicator_mats]

        weights = tau.mean(axis=0)
        for k, Yt in enumerate(transposed):
            U = tau @ indicator_mats[k]
            V = 1.0 - U
            s1 = U.sum(axis=1)
            s0 = V.sum(axis=1)
            d1 = np.where(s1 > 0.0, s1, 1.0)
            d0 = np.where(s0 > 0.0, s0, 1.0)
            m1 = np.where(s1 > 0.0, (U * Yt).sum(axis=1) / d1, mu1[:, k])
            m2 = np.where(s0 > 0.0, (V * Yt).sum(axis=1) / d0, mu2[:, k])
            v1 = np.where(
                s1 > 0.0,
                np.maximum((U * (Yt - m1[:, None]) ** 2).sum(axis=1) / d1, floors[:, k]),
                var1[:, k],
            )
            v2 = np.where(
                s0 > 0.0,
                np.maximum((V * (Yt - m2[:, None]) ** 2).sum(axis=1) / d0, floors[:, k]),
                var2[:, k],
            )
            mu1[:, k], var1[:, k], mu2[:, k], var2[:, k] = m1, v1, m2, v2
        pairs = _density_pairs(transposed, mu1, var1, mu2, var2)
        if update_indicators:
            for k, (lf1, lf0) in enumerate(pairs):
                sign = tau.T @ (lf1 - lf0)
                indicator_mats[k] = (sign > 0.0).astype(float)
    else:
        tau, ll = _membership(pairs, indicator_mats, weights)
        history.append(ll)

    labels = tau.argmax(axis=1)
    used = np.unique(labels)
    if used.size < tau.shape[1]:
        tau = tau[:, used]
        tau = tau / tau.sum(axis=1)[:, None]
        weights = weights[used]
        weights = weights / weights.sum()
        indicator_mats = [W[used] for W in indicator_mats]
        labels = np.searchsorted(used, labels)
    partition = Partition(tuple(int(v) for v in labels), int(tau.shape[1]))

    objective = 0.0
    try:
        for members in partition.clusters():
            cfit = fit_cluster(
                data, members,
                init=cluster_init_from_subject_fits(subject_fits, members),
                config=config,
            )
            objective += cfit.loglik
    except FitError as exc:
        warnings.warn(f"final partition could not be re-scored: {exc}", stacklevel=2)
        objective = float("-inf")

    indicators = tuple(
        tuple(indicator_mats[k][c].astype(int) for k in range(m))
        for c in range(partition.n_clusters)
    )
    return RefineResult(
        partition=partition,
        responsibilities=tau,
        weights=weights,
        indicators=indicators,
        mixture_loglik=history[-1],
        objective_loglik=float(objective),
        history=tuple(history),
    )


def refine_best(data: DataSet, inits: Sequence[Partition],
                config: FitConfig | None = None, **kwargs) -> RefineResult:
    """Refine from several starting partitions and keep the result whose
    final hard partition scores best under the original objective."""
    if not inits:
        raise DataError("at least one initial partition is required")
    best = None
    for init in inits:
        result = refine_partition(data, init, config, **kwargs)
        if best is None or result.objective_loglik > best.objective_loglik:
            best = result
    return best
