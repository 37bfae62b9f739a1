import numpy as np
import pytest
from scipy.stats import norm

from varprior.models import (BernoulliToy, DomainError, GaussVariance,
                             Multinomial, Probit, make_model)

MODELS = {
    "multinomial": (Multinomial(10, 4),
                    lambda rng: rng.dirichlet(np.ones(4) * 2.0)),
    "probit": (Probit(0.0, 1.0),
               lambda rng: rng.uniform(0.3, 3.0, size=2)),
    "gaussvar": (GaussVariance(0.0),
                 lambda rng: rng.uniform(0.2, 4.0, size=1)),
    "bernoulli": (BernoulliToy(),
                  lambda rng: rng.uniform(0.1, 0.9, size=1)),
}


def test_multinomial_single_observation_loglik():
    model = Multinomial(10, 4)
    x = np.array([[10, 0, 0, 0]])
    theta = np.array([0.4, 0.3, 0.2, 0.1])
    assert model.loglik(x, theta) == pytest.approx(10 * np.log(0.4))


def test_multinomial_score_example():
    model = Multinomial(10, 4)
    x = np.array([[3, 7, 0, 0]])
    score = model.score(x, np.array([0.25, 0.25, 0.25, 0.25]))
    assert score[0] == pytest.approx(12.0)
    assert score[1] == pytest.approx(28.0)


def test_gaussvar_loglik_and_score_example():
    model = GaussVariance(0.0)
    x = np.array([2.0])
    assert model.loglik(x, np.array([1.0])) == pytest.approx(-2.0)
    assert model.score(x, np.array([1.0]))[0] == pytest.approx(1.5)


def test_probit_loglik_at_gamma_zero():
    model = Probit(0.0, 1.0)
    data = np.array([[1.0, 1.3]])
    assert model.loglik(data, np.array([1.3, 0.7])) == pytest.approx(np.log(0.5))


def test_probit_score_example():
    model = Probit(0.0, 1.0)
    data = np.array([[1.0, 1.0]])
    score = model.score(data, np.array([1.0, 1.0]))
    assert score[0] == pytest.approx(-2.0 * norm.pdf(0.0))
    assert score[1] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_score_matches_finite_differences(name):
    model, draw_theta = MODELS[name]
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(100):
        theta = draw_theta(rng)
        data = model.sample_data(theta, 6, rng)
        suff = model.suff(data)[None]
        score = model.score_grid(suff, theta[None])[0, 0]
        for j in range(model.theta_dim):
            hi, lo = theta.copy(), theta.copy()
            hi[j] += h
            lo[j] -= h
            fd = (model.loglik_grid(suff, hi[None])[0, 0]
                  - model.loglik_grid(suff, lo[None])[0, 0]) / (2.0 * h)
            assert score[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_multinomial_sampling_degenerate_theta():
    model = Multinomial(10, 4)
    delta = 1e-9
    theta = np.array([1.0 - 3 * delta, delta, delta, delta])
    data = model.sample_data(theta, 50, np.random.default_rng(0))
    assert np.all(data[:, 0] == 10)
    assert np.all(data.sum(axis=1) == 10)


def test_probit_failure_prob_limit():
    model = Probit(0.0, 1.0)
    assert model.failure_prob(2.0, np.array([1.0, 1e-9])) == pytest.approx(1.0)
    data = model.sample_data(np.array([1.0, 1e-9]), 20, np.random.default_rng(1))
    assert np.all(data[data[:, 1] > 1.0, 0] == 1.0)


def test_gaussvar_sample_variance():
    model = GaussVariance(0.0)
    n = 10**5
    data = model.sample_data(np.array([1.0]), n, np.random.default_rng(2))
    assert abs(data.var() - 1.0) < 3.0 * np.sqrt(2.0 / n)


def test_multinomial_mle():
    model = Multinomial(10, 4)
    mle = model.exact_mle(np.array([[10, 0, 0, 0]]))
    assert np.allclose(mle, [1.0, 0.0, 0.0, 0.0], atol=5e-6)
    assert np.all(mle > 0) and mle.sum() == pytest.approx(1.0)


def test_gaussvar_mle_is_variance_maximizer():
    model = GaussVariance(0.0)
    mle = model.exact_mle(np.array([1.0, -1.0, 2.0]))
    assert mle[0] == pytest.approx(2.0)
    # stationarity of the likelihood there
    assert model.score(np.array([1.0, -1.0, 2.0]), mle) == pytest.approx(0.0)


def test_probit_has_no_mle():
    model = Probit(0.0, 1.0)
    assert model.exact_mle(np.array([[1.0, 2.0], [0.0, 0.5]])) is None


def test_empty_dataset_has_no_mle():
    model = GaussVariance(0.0)
    with pytest.raises(ValueError):
        model.exact_mle_suff(np.array([[0.0, 0.0]]))


def test_probit_likelihood_asymptote():
    # balanced labels at shared intensities make the leading term cancel
    model = Probit(0.0, 1.0)
    data = np.array([[1.0, 0.5], [0.0, 0.5], [1.0, 2.0], [0.0, 2.0]])
    ll = model.loglik(data, np.array([1.0, 1e6]))
    lik = np.exp(ll)
    assert abs(lik - 2.0**-4) <= 1e-6 * 2.0**-4


def test_probit_degeneracy_detector():
    model = Probit(0.0, 1.0)
    separable = np.array([[0.0, 0.5], [0.0, 0.9], [1.0, 1.1], [1.0, 3.0]])
    assert model.degenerate(separable)
    mixed = np.array([[1.0, 0.5], [0.0, 0.9], [0.0, 1.1], [1.0, 3.0]])
    assert not model.degenerate(mixed)
    one_label = np.array([[1.0, 0.5], [1.0, 2.0]])
    assert model.degenerate(one_label)
    reverse = np.array([[1.0, 0.5], [1.0, 0.9], [0.0, 1.1], [0.0, 3.0]])
    assert not model.degenerate(reverse)


def test_boundary_thetas_rejected():
    with pytest.raises(DomainError):
        Multinomial(10, 4).loglik(np.array([[5, 5, 0, 0]]),
                                  np.array([0.5, 0.5, 0.0, 0.0]))
    with pytest.raises(DomainError):
        GaussVariance(0.0).loglik(np.array([1.0]), np.array([0.0]))
    with pytest.raises(DomainError):
        Probit(0.0, 1.0).loglik(np.array([[1.0, 1.0]]), np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        BernoulliToy().loglik(np.array([1.0]), np.array([1.0]))


def test_multinomial_rows_sum_to_n():
    model = Multinomial(7, 3)
    data = model.sample_data(np.array([0.2, 0.3, 0.5]), 200,
                             np.random.default_rng(3))
    assert np.all(data.sum(axis=1) == 7)


def test_sample_suff_matches_dataset_sums():
    model = Multinomial(10, 4)
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    suffs = model.sample_suff(theta, 10, 500, np.random.default_rng(4))
    assert suffs.shape == (500, 4)
    assert np.all(suffs.sum(axis=1) == 100)
    mean = suffs.mean(axis=0) / 100
    assert np.allclose(mean, theta, atol=0.02)


def test_csv_roundtrips(tmp_path):
    rng = np.random.default_rng(5)
    cases = [
        (Multinomial(10, 4), MODELS["multinomial"][1](rng)),
        (Probit(0.0, 1.0), MODELS["probit"][1](rng)),
        (GaussVariance(0.0), MODELS["gaussvar"][1](rng)),
    ]
    for model, theta in cases:
        data = model.sample_data(theta, 12, rng)
        path = tmp_path / f"{model.name}.csv"
        model.save_csv(path, data)
        back = model.load_csv(path)
        assert np.array_equal(np.atleast_2d(back.astype(float)),
                              np.atleast_2d(np.asarray(data, dtype=float)))
        assert path.read_text().splitlines()[0] == ",".join(model.csv_columns)


def test_make_model():
    assert make_model("multinomial", n=5, q=3).n == 5
    with pytest.raises(ValueError):
        make_model("weibull")
