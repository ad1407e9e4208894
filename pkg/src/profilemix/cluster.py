"""EM for the shared-indicator mixture of an arbitrary subject set.

This is the engine behind merge evaluation, training, and refinement.  For a
cluster, every member shares one latent high/low indicator per probe, so the
E-step pools the member component log-densities per probe before applying
Bayes' rule, and the M-step reweights each member's own responses with the
shared posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ClusterFit,
    ComponentCollapseError,
    DataError,
    DataSet,
    FitConfig,
    SpuriousFitError,
    SubjectParams,
    clamp_mixing_weight,
    log_normal_density,
    _normalize_members,
    _rel_converged,
    _stack_params,
)
from .subject import SubjectFitResult, fit_subject

__all__ = [
    "ClusterInit",
    "MStepUpdate",
    "ClusterFit",
    "cluster_init_from_subject_fits",
    "cluster_e_step",
    "cluster_m_step",
    "fit_cluster",
]


@dataclass(frozen=True)
class ClusterInit:
    """Starting parameters for a cluster EM run.

    ``member_params`` is aligned with the sorted member tuple the init is
    used with; ``pi1`` holds one starting weight per platform.
    """

    member_params: tuple[SubjectParams, ...]
    pi1: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "member_params", tuple(self.member_params))
        pi1 = np.array(self.pi1, dtype=float)
        pi1.setflags(write=False)
        object.__setattr__(self, "pi1", pi1)
        if not self.member_params:
            raise DataError("init needs at least one member")
        m = self.member_params[0].n_platforms
        if any(p.n_platforms != m for p in self.member_params):
            raise DataError("member parameter platform counts disagree")
        if pi1.shape != (m,):
            raise DataError("pi1 must hold one weight per platform")


@dataclass(frozen=True)
class MStepUpdate:
    """Raw weighted-moment M-step output, one row per member.

    Values are reported exactly as computed (no component swap), so the
    first component is simply the one weighted by the posteriors that were
    passed in.
    """

    mu1: np.ndarray
    var1: np.ndarray
    mu2: np.ndarray
    var2: np.ndarray
    pi1: np.ndarray


def cluster_init_from_subject_fits(subject_fits: Sequence[SubjectFitResult],
                                   members: Sequence[int]) -> ClusterInit:
    """Cold-start init: member thetas from their own fits, pi1 their mean."""
    members = tuple(int(i) for i in members)
    fits = [subject_fits[i] for i in members]
    pi1 = np.mean([f.pi1 for f in fits], axis=0)
    return ClusterInit(tuple(f.params for f in fits), pi1)


def _extract_matrices(data: DataSet, members) -> list[np.ndarray]:
    """Per-platform (n_members, G) response matrices for the member set."""
    idx = list(members)
    return [np.ascontiguousarray(plat.values[:, idx].T) for plat in data.platforms]


def _member_floors(matrices: Sequence[np.ndarray], factor: float) -> np.ndarray:
    """Variance floors, shape (n_members, n_platforms)."""
    return np.stack([factor * np.var(Y, axis=1, ddof=1) for Y in matrices], axis=1)


def _scores(Y: np.ndarray, mu1, var1, mu2, var2, pi1k: float):
    """Pooled per-probe log scores (a1, a0) for one platform."""
    lf1 = log_normal_density(Y, mu1[:, None], var1[:, None]).sum(axis=0)
    lf0 = log_normal_density(Y, mu2[:, None], var2[:, None]).sum(axis=0)
    a1 = math.log(pi1k) + lf1
    a0 = math.log1p(-pi1k) + lf0
    return a1, a0


def _e_step_arrays(matrices, mu1, var1, mu2, var2, pi1):
    gammas = []
    ll = 0.0
    for k, Y in enumerate(matrices):
        a1, a0 = _scores(Y, mu1[:, k], var1[:, k], mu2[:, k], var2[:, k], float(pi1[k]))
        tot = np.logaddexp(a1, a0)
        ll += float(tot.sum())
        gammas.append(np.exp(a1 - tot))
    return gammas, ll


def _m_step_arrays(matrices, gammas, floors, config: FitConfig):
    n_members = matrices[0].shape[0]
    m = len(matrices)
    mu1 = np.empty((n_members, m))
    var1 = np.empty((n_members, m))
    mu2 = np.empty((n_members, m))
    var2 = np.empty((n_members, m))
    pi1 = np.empty(m)
    for k, Y in enumerate(matrices):
        g = np.asarray(gammas[k], dtype=float)
        if g.shape != (Y.shape[1],):
            raise DataError(f"platform {k}: posterior vector has wrong length")
        s1 = float(g.sum())
        s0 = float((1.0 - g).sum())
        if s1 == 0.0:
            raise ComponentCollapseError(f"platform {k}: component 1 received zero weight")
        if s0 == 0.0:
            raise ComponentCollapseError(f"platform {k}: component 2 received zero weight")
        mu1[:, k] = Y @ g / s1
        var1[:, k] = np.maximum(((Y - mu1[:, k, None]) ** 2) @ g / s1, floors[:, k])
        mu2[:, k] = Y @ (1.0 - g) / s0
        var2[:, k] = np.maximum(((Y - mu2[:, k, None]) ** 2) @ (1.0 - g) / s0, floors[:, k])
        pi1[k] = clamp_mixing_weight(s1 / Y.shape[1], config.pi_clamp)
    return mu1, var1, mu2, var2, pi1


def cluster_e_step(data: DataSet, members, member_params, pi1) -> list[np.ndarray]:
    """Posterior probability per probe of the shared component-1 state.

    Per platform: gamma_j = pi1 * prod_i f1(y_ij) / (pi1 * prod_i f1(y_ij)
    + (1 - pi1) * prod_i f0(y_ij)), computed in log space.
    """
    members = _normalize_members(members, data.n_subjects)
    params = tuple(member_params)
    if len(params) != len(members):
        raise DataError("one parameter set per member is required")
    pi = np.asarray(pi1, dtype=float)
    if pi.shape != (data.n_platforms,):
        raise DataError("pi1 must hold one weight per platform")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise DataError("pi1 must lie strictly inside (0, 1)")
    matrices = _extract_matrices(data, members)
    mu1, var1, mu2, var2 = _stack_params(params)
    gammas, _ = _e_step_arrays(matrices, mu1, var1, mu2, var2, pi)
    return gammas


def cluster_m_step(data: DataSet, members, posteriors,
                   config: FitConfig | None = None) -> MStepUpdate:
    """Weighted means/variances per member and the updated mixing weight.

    mu1_i = sum_j gamma_j y_ij / sum_j gamma_j, var1_i the matching weighted
    second moment floored at the member's variance floor, component 2 the
    same with weights 1 - gamma, and pi1 the clamped mean posterior.
    """
    config = config or FitConfig()
    members = _normalize_members(members, data.n_subjects)
    if len(posteriors) != data.n_platforms:
        raise DataError("one posterior vector per platform is required")
    matrices = _extract_matrices(data, members)
    floors = _member_floors(matrices, config.variance_floor_factor)
    mu1, var1, mu2, var2, pi1 = _m_step_arrays(matrices, posteriors, floors, config)
    return MStepUpdate(mu1=mu1, var1=var1, mu2=mu2, var2=var2, pi1=pi1)


def fit_cluster(data: DataSet, members, init: ClusterInit | None = None,
                config: FitConfig | None = None) -> ClusterFit:
    """Run shared-indicator EM for one member set until convergence.

    Without an explicit ``init`` the members are first fitted individually
    and those parameters seed the run, with pi1 starting at the mean of the
    member estimates.  After every M-step each platform is flipped as a
    whole (parameters, weight, and implicitly the posteriors) whenever the
    members' mean component-1 location exceeds the component-2 one; the flip
    leaves the likelihood unchanged.  A run that ends at the variance floor
    or with members disagreeing on component orientation raises
    ``SpuriousFitError``.
    """
    config = config or FitConfig()
    members = _normalize_members(members, data.n_subjects)
    if init is None:
        fits = [fit_subject(data.subject_profile(i), config) for i in members]
        init = ClusterInit(
            tuple(f.params for f in fits),
            np.mean([f.pi1 for f in fits], axis=0),
        )
    if len(init.member_params) != len(members):
        raise DataError("init does not match the member set")
    if init.member_params[0].n_platforms != data.n_platforms:
        raise DataError("init does not cover every platform")

    matrices = _extract_matrices(data, members)
    floors = _member_floors(matrices, config.variance_floor_factor)
    mu1, var1, mu2, var2 = (a.copy() for a in _stack_params(init.member_params))
    var1 = np.maximum(var1, floors)
    var2 = np.maximum(var2, floors)
    pi1 = np.asarray(clamp_mixing_weight(np.asarray(init.pi1, dtype=float),
                                         config.pi_clamp))

    history: list[float] = []
    prev = None
    gammas = None
    ll = None
    for _ in range(config.max_iter):
        gammas, ll = _e_step_arrays(matrices, mu1, var1, mu2, var2, pi1)
        history.append(ll)
        if prev is not None and _rel_converged(ll, prev, config.rel_tol):
            break
        prev = ll
        mu1, var1, mu2, var2, pi1 = _m_step_arrays(matrices, gammas, floors, config)
        for k in range(len(matrices)):
            if float((mu1[:, k] - mu2[:, k]).sum()) > 0.0:
                mu1[:, k], mu2[:, k] = mu2[:, k].copy(), mu1[:, k].copy()
                var1[:, k], var2[:, k] = var2[:, k].copy(), var1[:, k].copy()
                pi1[k] = clamp_mixing_weight(1.0 - pi1[k], config.pi_clamp)
    else:
        gammas, ll = _e_step_arrays(matrices, mu1, var1, mu2, var2, pi1)
        history.append(ll)

    if np.any(var1 <= floors) or np.any(var2 <= floors):
        raise SpuriousFitError("fit converged at the variance floor")
    if np.any(mu1 >= mu2):
        raise SpuriousFitError("members disagree on component orientation")

    params = tuple(
        SubjectParams(mu1[i], var1[i], mu2[i], var2[i]) for i in range(len(members))
    )
    return ClusterFit(
        members=members,
        pi1=pi1,
        probe_posteriors=tuple(gammas),
        member_params=params,
        loglik=float(ll),
        history=tuple(history),
    )
