"""Builders and independent reference implementations shared by the tests.

The reference functions here deliberately avoid the package's own kernels:
they loop in scalar space over scipy.stats densities so that agreement with
the vectorized implementations is a real cross-check.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from profilemix import (
    DataSet,
    FitConfig,
    PlatformMatrix,
    PlatformSimSpec,
    SimSpec,
    SubjectParams,
)

FAST = FitConfig(restarts=4, seed=0)


def single_platform(values, platform_id: str = "p0") -> DataSet:
    values = np.asarray(values, dtype=float)
    probes = tuple(f"g{j}" for j in range(values.shape[0]))
    subjects = tuple(f"s{i}" for i in range(values.shape[1]))
    return DataSet((PlatformMatrix(platform_id, probes, values),), subjects)


def two_platforms(values_a, values_b) -> DataSet:
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    subjects = tuple(f"s{i}" for i in range(a.shape[1]))
    return DataSet(
        (
            PlatformMatrix("pa", tuple(f"a{j}" for j in range(a.shape[0])), a),
            PlatformMatrix("pb", tuple(f"b{j}" for j in range(b.shape[0])), b),
        ),
        subjects,
    )


def params(mu1, var1, mu2, var2) -> SubjectParams:
    return SubjectParams(
        np.atleast_1d(np.asarray(mu1, dtype=float)),
        np.atleast_1d(np.asarray(var1, dtype=float)),
        np.atleast_1d(np.asarray(mu2, dtype=float)),
        np.atleast_1d(np.asarray(var2, dtype=float)),
    )


def naive_cluster_loglik(data: DataSet, members, member_params, pi1) -> float:
    """Scalar-loop reference for the marginal cluster log-likelihood."""
    members = list(members)
    total = 0.0
    for k, plat in enumerate(data.platforms):
        for j in range(plat.n_probes):
            t1 = np.log(pi1[k])
            t0 = np.log(1.0 - pi1[k])
            for rank, i in enumerate(members):
                p = member_params[rank]
                y = plat.values[j, i]
                t1 += norm.logpdf(y, p.mu1[k], np.sqrt(p.var1[k]))
                t0 += norm.logpdf(y, p.mu2[k], np.sqrt(p.var2[k]))
            total += logsumexp([t1, t0])
    return float(total)


def planted_spec(n_per_cluster=(7, 7, 7), n_probes=500, overlap=0.7, seed=0,
                 blocks=None, jitter=0.15) -> SimSpec:
    """The well-separated single-platform recipe used across recovery tests."""
    return SimSpec(
        n_per_cluster=tuple(n_per_cluster),
        platforms=(
            PlatformSimSpec(
                platform_id="meth",
                n_probes=n_probes,
                mu_low=(-2.0, -1.3),
                mu_high=(1.3, 2.0),
                var_low=(0.15, 0.45),
                var_high=(0.15, 0.45),
                subject_jitter=jitter,
                pi_high=0.5,
            ),
        ),
        w_overlap=overlap,
        correlated_blocks=blocks,
        seed=seed,
    )


def monotone_within(history, rel_slack: float = 1e-9) -> bool:
    """True when the sequence never decreases beyond relative slack."""
    values = list(history)
    for prev, curr in zip(values, values[1:]):
        if curr < prev - rel_slack * max(1.0, abs(prev)):
            return False
    return True
