"""Two-component Gaussian mixture fits for a single subject's profiles.

Platforms factor completely at the subject level, so each platform vector is
fitted independently with restarted EM and the per-platform results are
assembled into one ``SubjectParams``.  Runs whose variance ends up pinned at
the floor are treated as spurious and discarded; the best remaining restart
wins.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ComponentCollapseError,
    DataError,
    DataSet,
    DegenerateProfileError,
    DomainError,
    FitConfig,
    SubjectParams,
    clamp_mixing_weight,
    log_normal_density,
    _rel_converged,
)

__all__ = ["SubjectFitResult", "initial_values", "fit_subject", "fit_all_subjects"]


@dataclass(frozen=True)
class SubjectFitResult:
    """Best mixture fit per platform for one subject.

    ``posteriors`` holds, per platform, the probability that each probe
    belongs to component 1 (the low-mean component) at the fitted
    parameters.  ``histories`` keeps the log-likelihood iteration sequence
    of every kept (non-spurious) restart, per platform, for diagnostics.
    """

    params: SubjectParams
    pi1: np.ndarray
    posteriors: tuple[np.ndarray, ...]
    loglik: float
    platform_logliks: np.ndarray
    histories: tuple[tuple[tuple[float, ...], ...], ...]


def _seed_material(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def initial_values(profile, restart_index: int, seed) -> tuple[float, float, float, float, float]:
    """Starting point (mu1, var1, mu2, var2, pi1) for one EM restart.

    Restart 0 anchors the component means at the 25th and 75th percentiles
    with half the pooled sample variance on each component and an even
    weight.  Later restarts jitter both means with uniform noise spanning
    the interquartile range; the draw depends only on (seed, restart_index).
    """
    y = np.asarray(profile, dtype=float)
    if restart_index < 0:
        raise DomainError("restart_index must be non-negative")
    if np.unique(y).size < 2:
        raise DegenerateProfileError("constant profile")
    q25, q75 = (float(q) for q in np.percentile(y, [25.0, 75.0]))
    half_var = float(np.var(y, ddof=1)) / 2.0
    mu1, mu2 = q25, q75
    if restart_index > 0:
        span = q75 - q25
        if span == 0.0:
            span = float(y.max() - y.min())
        rng = np.random.default_rng(_seed_material(seed) + [int(restart_index)])
        jitter = rng.uniform(-0.5, 0.5, size=2) * span
        mu1 = q25 + float(jitter[0])
        mu2 = q75 + float(jitter[1])
        if mu1 > mu2:
            mu1, mu2 = mu2, mu1
        elif mu1 == mu2:
            mu2 = mu1 + 1e-6 * span
    return mu1, half_var, mu2, half_var, 0.5


def _em_run(y: np.ndarray, init, floor: float, config: FitConfig):
    """One EM run on a single platform vector.

    Variances are floored after every M-step, which keeps the run inside the
    constrained parameter space and preserves monotonicity there.  Component
    labels are swapped after every M-step so mu1 < mu2 holds throughout.
    Returns (mu1, var1, mu2, var2, pi1, posteriors, loglik, history).
    """
    mu1, var1, mu2, var2, pi1 = init
    var1 = max(var1, floor)
    var2 = max(var2, floor)
    pi1 = float(clamp_mixing_weight(pi1, config.pi_clamp))
    history: list[float] = []
    prev = None
    post = None
    ll = None
    for _ in range(config.max_iter):
        a1 = np.log(pi1) + log_normal_density(y, mu1, var1)
        a0 = np.log1p(-pi1) + log_normal_density(y, mu2, var2)
        tot = np.logaddexp(a1, a0)
        ll = float(tot.sum())
        history.append(ll)
        post = np.exp(a1 - tot)
        if prev is not None and _rel_converged(ll, prev, config.rel_tol):
            break
        prev = ll
        s1 = float(post.sum())
        s0 = float((1.0 - post).sum())
        if s1 == 0.0 or s0 == 0.0:
            raise ComponentCollapseError("a mixture component received zero weight")
        mu1 = float(post @ y) / s1
        var1 = max(float(post @ (y - mu1) ** 2) / s1, floor)
        mu2 = float((1.0 - post) @ y) / s0
        var2 = max(float((1.0 - post) @ (y - mu2) ** 2) / s0, floor)
        pi1 = float(clamp_mixing_weight(s1 / y.size, config.pi_clamp))
        if mu1 > mu2:
            mu1, mu2 = mu2, mu1
            var1, var2 = var2, var1
            pi1 = float(clamp_mixing_weight(1.0 - pi1, config.pi_clamp))
    else:
        a1 = np.log(pi1) + log_normal_density(y, mu1, var1)
        a0 = np.log1p(-pi1) + log_normal_density(y, mu2, var2)
        tot = np.logaddexp(a1, a0)
        ll = float(tot.sum())
        history.append(ll)
        post = np.exp(a1 - tot)
    return mu1, var1, mu2, var2, pi1, post, ll, tuple(history)


def fit_subject(profile: Sequence[np.ndarray], config: FitConfig | None = None) -> SubjectFitResult:
    """Fit each platform vector of one subject with restarted EM.

    Restarts whose components collapse or end pinned at the variance floor
    are discarded; if none survive on some platform the profile is reported
    as degenerate.  Ties between restarts go to the lowest restart index.
    """
    config = config or FitConfig()
    vectors = [np.asarray(v, dtype=float) for v in profile]
    if not vectors:
        raise DataError("profile must contain at least one platform vector")
    for k, y in enumerate(vectors):
        if y.ndim != 1:
            raise DataError(f"platform {k}: profile vector must be one-dimensional")
        if not np.all(np.isfinite(y)):
            raise DataError(f"platform {k}: non-finite values in profile")

    mu1s, var1s, mu2s, var2s, pis = [], [], [], [], []
    posteriors, logliks, histories = [], [], []
    for k, y in enumerate(vectors):
        distinct = np.unique(y).size
        if distinct == 1:
            raise DegenerateProfileError(f"platform {k}: constant profile")
        if distinct < 4:
            raise DegenerateProfileError(
                f"platform {k}: fewer than 4 distinct values ({distinct})"
            )
        floor = config.variance_floor_factor * float(np.var(y, ddof=1))
        kept = []
        kept_hist = []
        for r in range(config.restarts):
            init = initial_values(y, r, (config.seed, k))
            try:
                out = _em_run(y, init, floor, config)
            except ComponentCollapseError:
                continue
            mu1, var1, mu2, var2, pi1, post, ll, hist = out
            if var1 <= floor or var2 <= floor or not mu1 < mu2:
                continue
            kept.append((ll, mu1, var1, mu2, var2, pi1, post))
            kept_hist.append(hist)
        if not kept:
            raise DegenerateProfileError(
                f"platform {k}: degenerate profile, all {config.restarts} restarts spurious"
            )
        best = kept[0]
        for cand in kept[1:]:
            if cand[0] > best[0]:
                best = cand
        ll, mu1, var1, mu2, var2, pi1, post = best
        mu1s.append(mu1)
        var1s.append(var1)
        mu2s.append(mu2)
        var2s.append(var2)
        pis.append(pi1)
        posteriors.append(post)
        logliks.append(ll)
        histories.append(tuple(kept_hist))

    params = SubjectParams(np.array(mu1s), np.array(var1s), np.array(mu2s), np.array(var2s))
    return SubjectFitResult(
        params=params,
        pi1=np.array(pis),
        posteriors=tuple(posteriors),
        loglik=float(sum(logliks)),
        platform_logliks=np.array(logliks),
        histories=tuple(histories),
    )


def fit_all_subjects(data: DataSet, config: FitConfig | None = None,
                     threads: int = 1) -> list[SubjectFitResult]:
    """Fit every subject in the data set; results are index-aligned.

    With ``threads > 1`` the subjects are fitted concurrently; each fit is
    seeded independently, so the results do not depend on the setting.
    """
    config = config or FitConfig()

    def one(i: int) -> SubjectFitResult:
        return fit_subject(data.subject_profile(i), config)

    indices = range(data.n_subjects)
    if threads <= 1 or data.n_subjects <= 1:
        return [one(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, indices))
