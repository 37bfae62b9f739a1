import numpy as np
import pytest
from scipy.integrate import quad

from varprior.evaluation import (EcdfCurve, GaussVarConstrainedPosterior,
                                 GaussVarConstrainedPrior, beta_marginal,
                                 dirichlet_posterior_gamma, dirichlet_sample,
                                 ecdf, ecdf_envelope, inverse_gamma,
                                 ks_distance, lognormal, mean_norm_error,
                                 mmd2_null_scale, mmd2_unbiased)


def test_mmd_identical_points_is_zero():
    xs = np.zeros((2, 1))
    assert mmd2_unbiased(xs, xs.copy()).mmd2 == pytest.approx(0.0, abs=1e-15)


def test_mmd_hand_value():
    xs = np.zeros((2, 1))
    ys = np.ones((2, 1))
    res = mmd2_unbiased(xs, ys)
    assert res.mmd2 == pytest.approx(2.0 - 2.0 * np.exp(-0.5), abs=1e-12)
    assert res.rmmd == pytest.approx(np.sqrt(2.0 - 2.0 * np.exp(-0.5)))
    assert not res.negative


def test_mmd_dirichlet_reference_scale():
    a = dirichlet_sample(np.full(4, 0.5), 20_000, seed=0)
    b = dirichlet_sample(np.full(4, 0.5), 20_000, seed=1)
    res = mmd2_unbiased(a, b)
    assert abs(res.mmd2) < 1e-3
    assert res.m == res.n == 20_000


def test_mmd_truncates_to_last_rows():
    rng = np.random.default_rng(2)
    xs = np.vstack([np.full((5, 1), 100.0), rng.normal(size=(20_000, 1))])
    ys = rng.normal(size=(20_000, 1))
    res = mmd2_unbiased(xs, ys)  # the distant prefix must have been dropped
    assert abs(res.mmd2) < 1e-2


def test_mmd_requires_two_points():
    with pytest.raises(ValueError):
        mmd2_unbiased(np.zeros((1, 1)), np.zeros((5, 1)))


def test_mmd_negative_flag():
    # unbiasedness allows small negatives on same-distribution samples
    rng = np.random.default_rng(3)
    vals = [mmd2_unbiased(rng.normal(size=(40, 1)),
                          rng.normal(size=(40, 1))) for _ in range(50)]
    assert any(v.negative for v in vals)
    for v in vals:
        assert v.rmmd >= 0.0


def test_mmd_tiling_matches_direct_computation():
    rng = np.random.default_rng(4)
    xs = rng.normal(size=(2500, 2))  # forces multiple tiles
    ys = rng.normal(size=(2100, 2)) + 0.3
    res = mmd2_unbiased(xs, ys)
    kxx = np.exp(-0.5 * np.sum((xs[:, None] - xs[None]) ** 2, axis=2))
    kyy = np.exp(-0.5 * np.sum((ys[:, None] - ys[None]) ** 2, axis=2))
    kxy = np.exp(-0.5 * np.sum((xs[:, None] - ys[None]) ** 2, axis=2))
    m, n = 2500, 2100
    direct = ((kxx.sum() - m) / (m * (m - 1)) + (kyy.sum() - n) / (n * (n - 1))
              - 2 * kxy.sum() / (m * n))
    assert res.mmd2 == pytest.approx(direct, rel=1e-10)


def test_mmd_null_scale_coverage():
    rng = np.random.default_rng(5)
    hits = 0
    for trial in range(40):
        xs = rng.normal(size=(250, 1))
        ys = rng.normal(size=(250, 1))
        stat = mmd2_unbiased(xs, ys).mmd2
        scale = mmd2_null_scale(xs, ys, n_permutations=60, seed=trial)
        hits += abs(stat) <= 3 * scale
    assert hits >= 0.9 * 40


def test_ecdf_basics():
    curve = ecdf([1.0, 2.0, 3.0])
    assert curve.evaluate(2.0) == pytest.approx(2.0 / 3.0)
    assert curve.evaluate(0.5) == 0.0
    assert curve.evaluate(3.5) == 1.0
    assert np.all(np.diff(curve.f) >= 0)
    assert curve.f[0] >= 0 and curve.f[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ecdf([])


def test_envelope_of_identical_curves():
    curve = ecdf(np.linspace(0, 1, 100))
    grid, lo, hi = ecdf_envelope([curve, curve, curve])
    assert np.array_equal(lo, hi)
    assert np.array_equal(lo, curve.evaluate(grid))


def test_envelope_uniform_band_width():
    rng = np.random.default_rng(6)
    curves = [ecdf(rng.random(5000)) for _ in range(100)]
    grid, lo, hi = ecdf_envelope(curves, grid=np.array([0.5]))
    assert hi[0] - lo[0] <= 0.06


def test_mean_norm_error():
    theta = np.array([1.0, 2.0])
    assert mean_norm_error(np.tile(theta, (10, 1)), theta) == 0.0
    samples = np.array([[2.0, 2.0], [0.0, 2.0]])
    assert mean_norm_error(samples, theta) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mean_norm_error(np.zeros((5, 3)), theta)


def test_mean_norm_error_decreasing_in_n_for_gaussvar():
    # the inverse-gamma posterior concentrates as the dataset grows
    rng = np.random.default_rng(7)
    means = []
    for n_obs in (5, 10, 20, 50, 100):
        errs = []
        for d in range(10):
            data = rng.normal(0.0, 1.0, size=n_obs)
            dist = inverse_gamma(n_obs / 2.0, 0.5 * np.sum(data**2))
            draws = dist.rvs(size=(4000, 1),
                             random_state=np.random.default_rng(100 * n_obs + d))
            errs.append(mean_norm_error(draws, np.array([1.0])))
        means.append(np.mean(errs))
    assert all(a > b for a, b in zip(means[:-1], means[1:]))


def test_dirichlet_sampler_moments():
    gamma = np.array([0.5, 1.5, 3.0])
    draws = dirichlet_sample(gamma, 100_000, seed=8)
    expected = gamma / gamma.sum()
    se = np.sqrt(expected * (1 - expected) / (gamma.sum() + 1) / 100_000)
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 3 * se + 1e-4)
    assert np.allclose(draws.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        dirichlet_sample(np.array([0.5, -1.0]), 10, seed=0)


def test_beta_marginal_mean():
    dist = beta_marginal(np.full(4, 0.5), 0)
    assert dist.mean() == pytest.approx(0.25)
    assert dist.args == (0.5, 1.5)


def test_dirichlet_posterior_gamma():
    counts = np.array([3, 7, 0, 0])
    assert np.array_equal(dirichlet_posterior_gamma(np.full(4, 0.5), counts),
                          np.array([3.5, 7.5, 0.5, 0.5]))


def test_inverse_gamma_moments():
    dist = inverse_gamma(2.0, 1.0)
    assert dist.mean() == pytest.approx(1.0)
    assert quad(dist.pdf, 0, np.inf)[0] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        inverse_gamma(-1.0, 1.0)


def test_lognormal_frozen():
    dist = lognormal(0.3, 0.9)
    assert dist.median() == pytest.approx(np.exp(0.3))


def test_constrained_prior_target():
    target = GaussVarConstrainedPrior()
    # density 2t/(1+t^2)^2 is the normalized J * a^2 with K = 1/2
    t = np.array([0.5, 1.0, 2.0])
    a = 1.0 / (1.0 / t + t)
    j_a2 = (1.0 / t) * a**2
    assert np.allclose(target.pdf(t), j_a2 / 0.5)
    assert quad(target.pdf, 0, np.inf)[0] == pytest.approx(1.0, abs=1e-8)
    assert target.cdf(1.0) == pytest.approx(0.5)
    u = np.linspace(0.01, 0.99, 13)
    assert np.allclose(target.cdf(target.ppf(u)), u)
    draws = target.rvs(50_000, seed=9)
    assert ks_distance(draws, target.cdf) < 0.01


def test_constrained_posterior_normalizes():
    a_fn = lambda t: 1.0 / (1.0 / t + t)
    post = GaussVarConstrainedPosterior(10, 8.0, a_fn, n_mc=100_000, seed=10)
    total = quad(post.pdf, 0, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=0.01)
    assert post.normalizer_se < 0.01 * post.normalizer


def test_ks_distance_exact_fit():
    rng = np.random.default_rng(11)
    dist = inverse_gamma(3.0, 2.0)
    draws = dist.rvs(size=20_000, random_state=rng)
    assert ks_distance(draws, dist.cdf) < 0.012
    assert ks_distance(draws + 1.0, dist.cdf) > 0.1
