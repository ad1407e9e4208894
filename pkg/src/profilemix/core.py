"""Domain types and log-space likelihood kernels shared by the fitting modules.

Each subject's profile on each platform is modeled as a two-component
Gaussian mixture, and all subjects in a cluster share one latent high/low
indicator per probe.  Partitions of the subject set are scored by the
marginal log-likelihood obtained after integrating the indicators out
against a per-cluster Bernoulli weight, so clustering, refinement, and
classification all reduce to evaluations of the kernels in this module.

All likelihood arithmetic is carried out in log space: the per-probe
products over cluster members underflow in linear space long before
realistic profile sizes are reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ProfileMixError",
    "DataError",
    "DomainError",
    "FitError",
    "DegenerateProfileError",
    "ComponentCollapseError",
    "SpuriousFitError",
    "DegenerateVarianceError",
    "UnclassifiableError",
    "FitConfig",
    "PlatformMatrix",
    "DataSet",
    "SubjectParams",
    "Partition",
    "ClusterFit",
    "log_normal_density",
    "log_mix_term",
    "clamp_mixing_weight",
    "evaluate_cluster_loglik",
    "partition_loglik",
]

_LOG_2PI = math.log(2.0 * math.pi)


class ProfileMixError(Exception):
    """Base class for every error raised by this package."""


class DataError(ProfileMixError):
    """Malformed, misaligned, or non-finite input data."""


class DomainError(ProfileMixError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class FitError(ProfileMixError):
    """A numerical fitting procedure failed to produce a valid result."""


class DegenerateProfileError(FitError):
    """A subject profile cannot support a two-component fit."""


class ComponentCollapseError(FitError):
    """An EM update left one mixture component with zero total weight."""


class SpuriousFitError(FitError):
    """An EM run converged pinned at the variance floor, or its component
    orientation cannot be made consistent across cluster members."""


class DegenerateVarianceError(FitError):
    """A closed-form discriminant component has zero variance."""


class UnclassifiableError(FitError):
    """No cluster produced a finite discriminant score for a subject."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    """Shared knobs for every EM-based fit.

    ``variance_floor_factor`` scales each subject's per-platform sample
    variance to obtain the floor below which a fitted component variance is
    considered collapsed.  ``pi_clamp`` bounds mixing weights away from 0 and
    1 so their logs stay finite.
    """

    restarts: int = 10
    max_iter: int = 500
    rel_tol: float = 1e-8
    variance_floor_factor: float = 1e-4
    pi_clamp: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if not 0.0 < self.rel_tol < 1.0:
            raise DomainError("rel_tol must lie in (0, 1)")
        if self.variance_floor_factor <= 0.0:
            raise DomainError("variance_floor_factor must be positive")
        if not 0.0 < self.pi_clamp < 0.5:
            raise DomainError("pi_clamp must lie in (0, 0.5)")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")


def _rel_converged(curr: float, prev: float, rel_tol: float) -> bool:
    return abs(curr - prev) <= rel_tol * max(1.0, abs(curr), abs(prev))


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


def _frozen_array(values, *, dtype=float, ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlatformMatrix:
    """One platform's responses: probes on rows, subjects on columns."""

    platform_id: str
    probe_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = _frozen_array(self.values, ndim=2)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probe_ids", tuple(str(p) for p in self.probe_ids))
        if vals.shape[0] < 1:
            raise DataError(f"platform {self.platform_id!r}: no probes")
        if len(self.probe_ids) != vals.shape[0]:
            raise DataError(
                f"platform {self.platform_id!r}: {len(self.probe_ids)} probe ids "
                f"for {vals.shape[0]} rows"
            )
        if len(set(self.probe_ids)) != len(self.probe_ids):
            raise DataError(f"platform {self.platform_id!r}: duplicate probe ids")
        if not np.all(np.isfinite(vals)):
            raise DataError(f"platform {self.platform_id!r}: non-finite values")

    @property
    def n_probes(self) -> int:
        return self.values.shape[0]

    @property
    def n_subjects(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DataSet:
    """Aligned multi-platform responses for one cohort of subjects."""

    platforms: tuple[PlatformMatrix, ...]
    subject_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "platforms", tuple(self.platforms))
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        if not self.platforms:
            raise DataError("a data set needs at least one platform")
        if not self.subject_ids:
            raise DataError("a data set needs at least one subject")
        n = len(self.subject_ids)
        for plat in self.platforms:
            if plat.n_subjects != n:
                raise DataError(
                    f"platform {plat.platform_id!r} has {plat.n_subjects} subjects, "
                    f"expected {n}"
                )
        ids = [p.platform_id for p in self.platforms]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate platform ids")

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_platforms(self) -> int:
        return len(self.platforms)

    @property
    def platform_ids(self) -> tuple[str, ...]:
        return tuple(p.platform_id for p in self.platforms)

    def platform(self, platform_id: str) -> PlatformMatrix:
        for plat in self.platforms:
            if plat.platform_id == platform_id:
                return plat
        raise DataError(f"no platform {platform_id!r} in data set")

    def subject_profile(self, index: int) -> list[np.ndarray]:
        """Per-platform response vectors for one subject (read-only views)."""
        if not 0 <= index < self.n_subjects:
            raise DomainError(f"subject index {index} out of range")
        return [plat.values[:, index] for plat in self.platforms]


@dataclass(frozen=True)
class SubjectParams:
    """Fitted component means and variances for one subject, per platform.

    Component 1 is the low-mean state (the one the shared probe indicator
    switches on); fitted parameters always satisfy mu1 < mu2 on every
    platform.
    """

    mu1: np.ndarray
    var1: np.ndarray
    mu2: np.ndarray
    var2: np.ndarray

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("mu1", "var1", "mu2", "var2"):
            arr = _frozen_array(getattr(self, name), ndim=1)
            object.__setattr__(self, name, arr)
            arrays[name] = arr
        m = arrays["mu1"].shape[0]
        if any(a.shape[0] != m for a in arrays.values()):
            raise DataError("parameter arrays must have one entry per platform")
        for name in ("mu1", "var1", "mu2", "var2"):
            if not np.all(np.isfinite(arrays[name])):
                raise DataError(f"{name} contains non-finite values")
        if np.any(arrays["var1"] <= 0.0) or np.any(arrays["var2"] <= 0.0):
            raise DataError("variances must be positive")
        if np.any(arrays["mu1"] >= arrays["mu2"]):
            raise DataError("component means must satisfy mu1 < mu2 on every platform")

    @property
    def n_platforms(self) -> int:
        return self.mu1.shape[0]


@dataclass(frozen=True)
class Partition:
    """Assignment of subjects to clusters labeled 0..n_clusters-1.

    Every label occurs at least once.
    """

    assignment: tuple[int, ...]
    n_clusters: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        if not self.assignment:
            raise DataError("empty partition")
        labels = set(self.assignment)
        if labels != set(range(self.n_clusters)):
            raise DataError(
                f"labels must cover 0..{self.n_clusters - 1} exactly, got {sorted(labels)}"
            )

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Partition":
        """Build a partition from arbitrary labels, renumbered by first appearance."""
        mapping: dict = {}
        assignment = []
        for lab in labels:
            if lab not in mapping:
                mapping[lab] = len(mapping)
            assignment.append(mapping[lab])
        return cls(tuple(assignment), len(mapping))

    @property
    def n(self) -> int:
        return len(self.assignment)

    def clusters(self) -> tuple[tuple[int, ...], ...]:
        """Member indices per cluster, each sorted ascending."""
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for idx, lab in enumerate(self.assignment):
            out[lab].append(idx)
        return tuple(tuple(members) for members in out)

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters())


@dataclass(frozen=True)
class ClusterFit:
    """Converged shared-indicator mixture fit for one set of subjects.

    ``probe_posteriors`` holds, per platform, the posterior probability that
    each probe sits in the component-1 (low-mean) state for the whole
    cluster.  ``history`` is the per-iteration log-likelihood trace of the
    run that produced this fit.
    """

    members: tuple[int, ...]
    pi1: np.ndarray
    probe_posteriors: tuple[np.ndarray, ...]
    member_params: tuple[SubjectParams, ...]
    loglik: float
    history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        members = tuple(int(i) for i in self.members)
        object.__setattr__(self, "members", members)
        if not members or list(members) != sorted(set(members)):
            raise DataError("members must be non-empty, sorted, and unique")
        pi1 = _frozen_array(self.pi1, ndim=1)
        object.__setattr__(self, "pi1", pi1)
        if np.any(pi1 <= 0.0) or np.any(pi1 >= 1.0):
            raise DataError("pi1 must lie strictly inside (0, 1)")
        posts = tuple(_frozen_array(g, ndim=1) for g in self.probe_posteriors)
        object.__setattr__(self, "probe_posteriors", posts)
        if len(posts) != pi1.shape[0]:
            raise DataError("one posterior vector per platform is required")
        for g in posts:
            if np.any(g < 0.0) or np.any(g > 1.0):
                raise DataError("probe posteriors must lie in [0, 1]")
        params = tuple(self.member_params)
        object.__setattr__(self, "member_params", params)
        if len(params) != len(members):
            raise DataError("one parameter set per member is required")
        for p in params:
            if p.n_platforms != pi1.shape[0]:
                raise DataError("member parameters must cover every platform")
        if not math.isfinite(self.loglik):
            raise DataError("loglik must be finite")
        object.__setattr__(self, "history", tuple(float(v) for v in self.history))

    @property
    def n_members(self) -> int:
        return len(self.members)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def log_normal_density(y, mu, var):
    """Log of the normal density, elementwise over broadcastable inputs.

    Returns a float for all-scalar inputs, otherwise an ndarray.  The result
    stays finite for arbitrarily extreme standardized residuals because no
    linear-space exponential is ever formed.
    """
    var_arr = np.asarray(var, dtype=float)
    if not np.all(np.isfinite(var_arr)) or np.any(var_arr <= 0.0):
        raise DomainError("variance must be positive and finite")
    y_arr = np.asarray(y, dtype=float)
    mu_arr = np.asarray(mu, dtype=float)
    diff = y_arr - mu_arr
    out = -0.5 * (_LOG_2PI + np.log(var_arr)) - diff * diff / (2.0 * var_arr)
    if np.ndim(out) == 0:
        return float(out)
    return out


def log_mix_term(logp1, logp0, logf1, logf0):
    """log(p1*f1 + p0*f0) from log-space inputs, elementwise.

    Uses pairwise log-add with max subtraction, so the result is exact up to
    rounding even when both component log-densities are far below the
    underflow threshold.  Both addends at -inf yield -inf rather than an
    error.
    """
    a1 = np.asarray(logp1, dtype=float) + np.asarray(logf1, dtype=float)
    a0 = np.asarray(logp0, dtype=float) + np.asarray(logf0, dtype=float)
    out = np.logaddexp(a1, a0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def clamp_mixing_weight(pi1, pi_clamp: float):
    """Clamp a mixing weight into [pi_clamp, 1 - pi_clamp]."""
    return np.clip(pi1, pi_clamp, 1.0 - pi_clamp)


def _normalize_members(members, n_subjects: int) -> tuple[int, ...]:
    out = tuple(int(i) for i in members)
    if not out:
        raise DomainError("member set must be non-empty")
    if list(out) != sorted(set(out)):
        raise DomainError("members must be sorted and unique")
    if out[0] < 0 or out[-1] >= n_subjects:
        raise DomainError("member index out of range")
    return out


def _stack_params(member_params: Sequence[SubjectParams]):
    """Member params as four (n_members, n_platforms) arrays."""
    mu1 = np.stack([p.mu1 for p in member_params])
    var1 = np.stack([p.var1 for p in member_params])
    mu2 = np.stack([p.mu2 for p in member_params])
    var2 = np.stack([p.var2 for p in member_params])
    return mu1, var1, mu2, var2


def _pooled_component_logliks(values: np.ndarray, members: Sequence[int],
                              mu1, var1, mu2, var2):
    """Sum of per-member component log-densities for every probe.

    ``values`` is the (G, n) platform matrix; the parameter vectors hold one
    scalar per member.  Returns two (G,) arrays: the pooled component-1 and
    component-2 log-likelihoods.
    """
    sub = values[:, list(members)].T
    lf1 = log_normal_density(sub, mu1[:, None], var1[:, None]).sum(axis=0)
    lf0 = log_normal_density(sub, mu2[:, None], var2[:, None]).sum(axis=0)
    return lf1, lf0


def evaluate_cluster_loglik(data: DataSet, members, member_params, pi1) -> float:
    """Marginal log-likelihood of one cluster at fixed parameters.

    Sums ``log_mix_term`` over platforms and probes with the per-probe
    component factors pooled across the cluster members; no fitting happens
    here.
    """
    members = _normalize_members(members, data.n_subjects)
    params = tuple(member_params)
    if len(params) != len(members):
        raise DataError("one parameter set per member is required")
    pi = np.asarray(pi1, dtype=float)
    if pi.shape != (data.n_platforms,):
        raise DataError("pi1 must hold one weight per platform")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise DomainError("pi1 must lie strictly inside (0, 1)")
    mu1, var1, mu2, var2 = _stack_params(params)
    total = 0.0
    for k, plat in enumerate(data.platforms):
        lf1, lf0 = _pooled_component_logliks(
            plat.values, members, mu1[:, k], var1[:, k], mu2[:, k], var2[:, k]
        )
        terms = np.logaddexp(math.log(pi[k]) + lf1, math.log1p(-pi[k]) + lf0)
        total += float(terms.sum())
    return total


def partition_loglik(data: DataSet, partition: Partition,
                     fits: Sequence[ClusterFit]) -> float:
    """Total log-likelihood of a partition, one ``ClusterFit`` per label.

    Evaluates each cluster at its stored parameters, so the result is
    additive over clusters and platforms and invariant under cluster
    relabeling and probe permutation.
    """
    if partition.n != data.n_subjects:
        raise DataError("partition and data set disagree on subject count")
    if len(fits) != partition.n_clusters:
        raise DataError(
            f"expected {partition.n_clusters} cluster fits, got {len(fits)}"
        )
    for label, members in enumerate(partition.clusters()):
        if tuple(fits[label].members) != members:
            raise DataError(f"fit for cluster {label} does not match its members")
    return sum(
        evaluate_cluster_loglik(data, fit.members, fit.member_params, fit.pi1)
        for fit in fits
    )
