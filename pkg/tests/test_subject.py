"""Per-subject two-component mixture fitting."""

import numpy as np
import pytest

from profilemix import (
    DegenerateProfileError,
    DomainError,
    FitConfig,
    fit_all_subjects,
    fit_subject,
    initial_values,
)

from helpers import monotone_within, naive_cluster_loglik, single_platform


def test_initial_values_restart_zero_uses_quartiles():
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    mu1, var1, mu2, var2, pi1 = initial_values(y, 0, seed=0)
    assert (mu1, mu2) == (-1.0, 1.0)
    assert var1 == var2 == pytest.approx(np.var(y, ddof=1) / 2)
    assert pi1 == 0.5


def test_initial_values_deterministic():
    y = np.random.default_rng(1).normal(size=50)
    a = initial_values(y, 3, seed=42)
    b = initial_values(y, 3, seed=42)
    assert a == b


def test_initial_values_jitter_changes_start():
    y = np.random.default_rng(1).normal(size=50)
    assert initial_values(y, 3, seed=42) != initial_values(y, 0, seed=42)
    assert initial_values(y, 3, seed=42) != initial_values(y, 4, seed=42)


def test_initial_values_orders_means():
    y = np.random.default_rng(2).normal(size=40)
    for r in range(8):
        mu1, _, mu2, _, _ = initial_values(y, r, seed=9)
        assert mu1 < mu2


def test_initial_values_rejects_negative_restart():
    with pytest.raises(DomainError):
        initial_values(np.array([0.0, 1.0, 2.0, 3.0]), -1, seed=0)


def test_initial_values_rejects_constant_profile():
    with pytest.raises(DegenerateProfileError):
        initial_values(np.ones(10), 0, seed=0)


def _bimodal(seed, n=1000, mu=(-2.0, 2.0), sd=(0.5, 0.5), pi1=0.5):
    rng = np.random.default_rng(seed)
    n1 = int(round(n * pi1))
    return np.concatenate([
        rng.normal(mu[0], sd[0], n1),
        rng.normal(mu[1], sd[1], n - n1),
    ])


def test_fit_recovers_well_separated_components():
    y = _bimodal(7)
    fit = fit_subject([y], FitConfig(restarts=6, seed=0))
    assert fit.params.mu1[0] == pytest.approx(-2.0, abs=0.1)
    assert fit.params.mu2[0] == pytest.approx(2.0, abs=0.1)
    assert fit.pi1[0] == pytest.approx(0.5, abs=0.05)
    assert fit.params.var1[0] == pytest.approx(0.25, abs=0.08)


def test_fit_symmetric_profile_gives_mirrored_components():
    rng = np.random.default_rng(3)
    half = rng.normal(1.8, 0.6, 400)
    y = np.concatenate([half, -half])  # exactly symmetric about 0
    fit = fit_subject([y], FitConfig(restarts=6, seed=1))
    assert fit.params.mu1[0] == pytest.approx(-fit.params.mu2[0], abs=5e-3)
    assert fit.params.var1[0] == pytest.approx(fit.params.var2[0], rel=1e-2)
    assert fit.pi1[0] == pytest.approx(0.5, abs=5e-3)


def test_fit_loglik_matches_independent_evaluation():
    y = _bimodal(11, n=300)
    data = single_platform(y[:, None])
    fit = fit_subject([y], FitConfig(restarts=4, seed=2))
    want = naive_cluster_loglik(data, (0,), (fit.params,), fit.pi1)
    assert fit.loglik == pytest.approx(want, rel=1e-12)


def test_fit_posteriors_match_bayes_rule():
    from scipy.stats import norm

    y = _bimodal(13, n=200)
    fit = fit_subject([y], FitConfig(restarts=4, seed=2))
    p = fit.params
    a1 = fit.pi1[0] * norm.pdf(y, p.mu1[0], np.sqrt(p.var1[0]))
    a0 = (1 - fit.pi1[0]) * norm.pdf(y, p.mu2[0], np.sqrt(p.var2[0]))
    np.testing.assert_allclose(fit.posteriors[0], a1 / (a1 + a0), rtol=1e-9)


def test_fit_histories_are_monotone():
    y = _bimodal(17, n=400, mu=(-0.5, 0.8), sd=(0.7, 0.9), pi1=0.35)
    fit = fit_subject([y], FitConfig(restarts=8, seed=4))
    assert fit.histories[0]  # at least one kept restart
    for history in fit.histories[0]:
        assert monotone_within(history)


def test_fit_is_deterministic():
    y = _bimodal(19, n=300)
    a = fit_subject([y], FitConfig(restarts=5, seed=6))
    b = fit_subject([y], FitConfig(restarts=5, seed=6))
    assert a.params.mu1[0] == b.params.mu1[0]
    assert a.loglik == b.loglik
    assert a.histories == b.histories


def test_fit_rejects_constant_and_near_constant_profiles():
    with pytest.raises(DegenerateProfileError, match="constant"):
        fit_subject([np.full(20, 3.3)])
    with pytest.raises(DegenerateProfileError, match="distinct"):
        fit_subject([np.array([0.0, 1.0, 2.0] * 10)])


def test_fit_reports_all_spurious_restarts():
    # a floor factor of 10 puts the floor above any attainable variance, so
    # every restart is discarded as floor-pinned
    y = _bimodal(23, n=100)
    config = FitConfig(restarts=3, variance_floor_factor=10.0, seed=0)
    with pytest.raises(DegenerateProfileError, match="spurious"):
        fit_subject([y], config)


def test_fit_multi_platform_totals():
    ya = _bimodal(29, n=150)
    yb = _bimodal(31, n=90, mu=(-1.0, 1.5), sd=(0.4, 0.6), pi1=0.4)
    fit = fit_subject([ya, yb], FitConfig(restarts=4, seed=1))
    assert fit.params.n_platforms == 2
    assert fit.loglik == pytest.approx(fit.platform_logliks.sum(), rel=1e-14)
    assert len(fit.posteriors) == 2
    assert fit.posteriors[1].shape == (90,)


def test_fit_all_subjects_thread_count_is_immaterial():
    rng = np.random.default_rng(37)
    cols = [
        np.concatenate([rng.normal(-2, 0.5, 30), rng.normal(2, 0.5, 30)])
        for _ in range(4)
    ]
    data = single_platform(np.column_stack(cols))
    config = FitConfig(restarts=4, seed=5)
    serial = fit_all_subjects(data, config, threads=1)
    threaded = fit_all_subjects(data, config, threads=4)
    for a, b in zip(serial, threaded):
        assert a.loglik == b.loglik
        np.testing.assert_array_equal(a.params.mu1, b.params.mu1)
        np.testing.assert_array_equal(a.pi1, b.pi1)
