"""Benchmark statistical models: simulation, log-likelihood kernels and scores.

Log-likelihoods are computed up to additive constants that do not depend on
theta, consistently across all operations, so likelihood ratios are exact.
Each model exposes a compressed per-dataset representation (``suff``) and
vectorized grid evaluations over many (dataset, theta) pairs, which is what the
Monte Carlo estimators hammer on.

Models:
* Multinomial(n, q)        counts over q categories, n trials per observation
* Probit(mu_a, sigma2_a)   binary outcome Z given a log-normal intensity a
* GaussVariance(mu)        normal observations, theta is the variance
* BernoulliToy()           single coin; the miniature oracle model
"""

from __future__ import annotations

import csv

import numpy as np
from scipy.special import log_ndtr, ndtr

GUARD_DELTA = 1e-6

# chunk size bound for probit grid evaluations (entries of the m*t*N tensor)
_GRID_CHUNK = 20_000_000


class DomainError(ValueError):
    """theta outside the model's admissible parameter space."""


def _as_generator(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class Model:
    theta_dim: int = 1
    name: str = "model"

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.theta_dim,):
            raise DomainError(f"theta must have dimension {self.theta_dim}")
        if not self.in_support(theta):
            raise DomainError(f"theta {theta} outside the parameter space of {self.name}")
        return theta

    def in_support(self, theta) -> bool:
        raise NotImplementedError

    # single-dataset conveniences built on the vectorized kernels
    def loglik(self, data, theta) -> float:
        theta = self.check_theta(theta)
        return float(self.loglik_grid(self.suff(data)[None], theta[None])[0, 0])

    def score(self, data, theta) -> np.ndarray:
        theta = self.check_theta(theta)
        return self.score_grid(self.suff(data)[None], theta[None])[0, 0]

    def exact_mle(self, data):
        suffs = self.suff(data)[None]
        mles = self.exact_mle_suff(suffs)
        return None if mles is None else mles[0]

    def exact_mle_suff(self, suffs):
        return None

    # paired evaluation: dataset i against theta row i
    def loglik_paired(self, suffs, thetas) -> np.ndarray:
        return self.loglik_blocks(suffs, thetas[:, None, :])[:, 0]

    # block evaluation: dataset i against its own theta block (m, t, q) -> (m, t)
    def loglik_blocks(self, suffs, theta_blocks) -> np.ndarray:
        m, t = theta_blocks.shape[:2]
        out = np.empty((m, t))
        for i in range(m):
            out[i] = self.loglik_grid(suffs[i:i + 1], theta_blocks[i])[0]
        return out

    def sample_suff(self, theta, n_obs, n_sets, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        return np.stack([self.suff(self.sample_data(theta, n_obs, rng))
                         for _ in range(n_sets)])

    def sample_suff_many(self, thetas, n_obs, rng) -> np.ndarray:
        """One dataset (as suff) per theta row; vectorized where possible."""
        rng = _as_generator(rng)
        return np.concatenate([self.sample_suff(thetas[i], n_obs, 1, rng)
                               for i in range(thetas.shape[0])])

    # CSV persistence -----------------------------------------------------
    csv_columns: tuple = ("x",)

    def save_csv(self, path, data) -> None:
        data = np.atleast_2d(np.asarray(data))
        if data.shape[0] and data.shape[1] != len(self.csv_columns):
            data = data.reshape(-1, len(self.csv_columns))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.csv_columns)
            for row in data:
                writer.writerow([repr(v) for v in row.tolist()])

    def load_csv(self, path) -> np.ndarray:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != self.csv_columns:
                raise ValueError(f"expected columns {self.csv_columns}, got {header}")
            rows = [[float(v) for v in row] for row in reader]
        return self._from_rows(np.array(rows, dtype=float))

    def _from_rows(self, rows):
        return rows.reshape(-1) if len(self.csv_columns) == 1 else rows


class Multinomial(Model):
    """N i.i.d. Multinomial(n, theta) count vectors; Theta = open simplex."""

    name = "multinomial"

    def __init__(self, n: int = 10, q: int = 4):
        if n < 1 or q < 2:
            raise ValueError("need n >= 1 trials and q >= 2 categories")
        self.n, self.q = int(n), int(q)
        self.theta_dim = self.q
        self.csv_columns = tuple(f"x{j + 1}" for j in range(q))

    def in_support(self, theta) -> bool:
        return bool(np.all(theta > 0) and abs(float(np.sum(theta)) - 1.0) < 1e-8)

    def sample_data(self, theta, n_obs, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        return rng.multinomial(self.n, theta, size=n_obs)

    def suff(self, data) -> np.ndarray:
        data = np.atleast_2d(np.asarray(data))
        return data.sum(axis=0).astype(float)

    def sample_suff(self, theta, n_obs, n_sets, rng) -> np.ndarray:
        # sum of N multinomials(n) is a multinomial(n*N)
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        return rng.multinomial(self.n * n_obs, theta, size=n_sets).astype(float)

    def sample_suff_many(self, thetas, n_obs, rng) -> np.ndarray:
        rng = _as_generator(rng)
        return rng.multinomial(self.n * n_obs, thetas).astype(float)

    def _check_grid_thetas(self, thetas):
        if np.any(thetas <= 0):
            raise DomainError("multinomial theta on the simplex boundary")

    def loglik_grid(self, suffs, thetas) -> np.ndarray:
        self._check_grid_thetas(thetas)
        return suffs @ np.log(thetas).T

    def loglik_paired(self, suffs, thetas) -> np.ndarray:
        self._check_grid_thetas(thetas)
        return np.sum(suffs * np.log(thetas), axis=1)

    def loglik_blocks(self, suffs, theta_blocks) -> np.ndarray:
        self._check_grid_thetas(theta_blocks)
        return np.einsum("mq,mtq->mt", suffs, np.log(theta_blocks))

    def score_grid(self, suffs, thetas) -> np.ndarray:
        self._check_grid_thetas(thetas)
        return suffs[:, None, :] / thetas[None, :, :]

    def exact_mle_suff(self, suffs, guard: float = GUARD_DELTA):
        total = suffs.sum(axis=1, keepdims=True)
        if np.any(total == 0):
            raise ValueError("empty dataset has no MLE")
        mle = suffs / total
        return (1.0 - self.q * guard) * mle + guard


class Probit(Model):
    """Binary outcome Z ~ Bernoulli(Phi((log a - log theta1)/theta2)).

    The intensity a is Log-N(mu_a, sigma2_a); theta = (theta1, theta2), both
    positive. The per-observation density of a does not depend on theta and is
    dropped from the kernel.
    """

    name = "probit"
    theta_dim = 2
    csv_columns = ("z", "a")

    def __init__(self, mu_a: float = 0.0, sigma2_a: float = 1.0):
        if sigma2_a <= 0:
            raise ValueError("sigma2_a must be positive")
        self.mu_a, self.sigma2_a = float(mu_a), float(sigma2_a)

    def in_support(self, theta) -> bool:
        return bool(np.all(theta > 0))

    def failure_prob(self, a, theta) -> np.ndarray:
        theta = self.check_theta(theta)
        return ndtr((np.log(a) - np.log(theta[0])) / theta[1])

    def sample_data(self, theta, n_obs, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        a = rng.lognormal(self.mu_a, np.sqrt(self.sigma2_a), size=n_obs)
        z = (rng.random(n_obs) < ndtr((np.log(a) - np.log(theta[0])) / theta[1]))
        return np.column_stack([z.astype(float), a])

    def suff(self, data) -> np.ndarray:
        return np.atleast_2d(np.asarray(data, dtype=float))

    def sample_suff(self, theta, n_obs, n_sets, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        a = rng.lognormal(self.mu_a, np.sqrt(self.sigma2_a), size=(n_sets, n_obs))
        pf = ndtr((np.log(a) - np.log(theta[0])) / theta[1])
        z = (rng.random((n_sets, n_obs)) < pf).astype(float)
        return np.stack([z, a], axis=-1)

    def sample_suff_many(self, thetas, n_obs, rng) -> np.ndarray:
        rng = _as_generator(rng)
        m = thetas.shape[0]
        a = rng.lognormal(self.mu_a, np.sqrt(self.sigma2_a), size=(m, n_obs))
        gam = (np.log(a) - np.log(thetas[:, 0])[:, None]) / thetas[:, 1][:, None]
        z = (rng.random((m, n_obs)) < ndtr(gam)).astype(float)
        return np.stack([z, a], axis=-1)

    def _gamma(self, a, thetas):
        # (m, t, N) grid of probit arguments, chunk-friendly
        return (np.log(a)[:, None, :] - np.log(thetas[:, 0])[None, :, None]) \
            / thetas[:, 1][None, :, None]

    def loglik_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0):
            raise DomainError("probit theta components must be positive")
        m, n_obs = suffs.shape[0], suffs.shape[1]
        t = thetas.shape[0]
        out = np.empty((m, t))
        step = max(1, _GRID_CHUNK // max(1, t * n_obs))
        for lo in range(0, m, step):
            hi = min(m, lo + step)
            z = suffs[lo:hi, :, 0]
            gam = self._gamma(suffs[lo:hi, :, 1], thetas)
            out[lo:hi] = np.sum(z[:, None, :] * log_ndtr(gam)
                                + (1.0 - z[:, None, :]) * log_ndtr(-gam), axis=-1)
        return out

    def score_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0):
            raise DomainError("probit theta components must be positive")
        m, n_obs = suffs.shape[0], suffs.shape[1]
        t = thetas.shape[0]
        out = np.empty((m, t, 2))
        log_phi_const = -0.5 * np.log(2.0 * np.pi)
        step = max(1, _GRID_CHUNK // max(1, t * n_obs))
        for lo in range(0, m, step):
            hi = min(m, lo + step)
            z = suffs[lo:hi, :, 0][:, None, :]
            gam = self._gamma(suffs[lo:hi, :, 1], thetas)
            log_pdf = -0.5 * gam * gam + log_phi_const
            hazard_pos = np.exp(log_pdf - log_ndtr(gam))    # phi/Phi
            hazard_neg = np.exp(log_pdf - log_ndtr(-gam))   # phi/(1-Phi)
            bracket = -z * hazard_pos + (1.0 - z) * hazard_neg
            s = np.sum(bracket, axis=-1)
            s_gam = np.sum(bracket * gam, axis=-1)
            out[lo:hi, :, 0] = s / (thetas[:, 0] * thetas[:, 1])[None, :]
            out[lo:hi, :, 1] = s_gam / thetas[:, 1][None, :]
        return out

    def loglik_blocks(self, suffs, theta_blocks) -> np.ndarray:
        if np.any(theta_blocks <= 0):
            raise DomainError("probit theta components must be positive")
        m, t = theta_blocks.shape[:2]
        n_obs = suffs.shape[1]
        out = np.empty((m, t))
        step = max(1, _GRID_CHUNK // max(1, t * n_obs))
        for lo in range(0, m, step):
            hi = min(m, lo + step)
            z = suffs[lo:hi, :, 0][:, None, :]
            gam = (np.log(suffs[lo:hi, :, 1])[:, None, :]
                   - np.log(theta_blocks[lo:hi, :, 0])[:, :, None]) \
                / theta_blocks[lo:hi, :, 1][:, :, None]
            out[lo:hi] = np.sum(z * log_ndtr(gam) + (1.0 - z) * log_ndtr(-gam),
                                axis=-1)
        return out

    def degenerate(self, data) -> bool:
        """True when the labels are separable by a threshold on the intensity.

        Separation in the direction of the monotone link (every Z=0 intensity
        below every Z=1 intensity, or only one label present) makes the
        likelihood constant along a ridge, so the posterior is improper.
        """
        data = self.suff(data)
        z, a = data[:, 0], data[:, 1]
        if np.all(z == 1.0) or np.all(z == 0.0):
            return True
        return float(np.max(a[z == 0.0])) < float(np.min(a[z == 1.0]))

    def _from_rows(self, rows):
        return rows


class GaussVariance(Model):
    """X_i ~ Normal(mu, theta) with known mean; theta > 0 is the variance."""

    name = "gaussvar"
    theta_dim = 1
    csv_columns = ("x",)

    def __init__(self, mu: float = 0.0):
        self.mu = float(mu)

    def in_support(self, theta) -> bool:
        return bool(theta[0] > 0)

    def sample_data(self, theta, n_obs, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        return rng.normal(self.mu, np.sqrt(theta[0]), size=n_obs)

    def suff(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float).reshape(-1)
        return np.array([np.sum((data - self.mu) ** 2), float(data.size)])

    def sample_suff(self, theta, n_obs, n_sets, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        s = theta[0] * rng.chisquare(n_obs, size=n_sets)
        return np.column_stack([s, np.full(n_sets, float(n_obs))])

    def sample_suff_many(self, thetas, n_obs, rng) -> np.ndarray:
        rng = _as_generator(rng)
        m = thetas.shape[0]
        s = thetas[:, 0] * rng.chisquare(n_obs, size=m)
        return np.column_stack([s, np.full(m, float(n_obs))])

    def loglik_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0):
            raise DomainError("variance must be positive")
        s, n = suffs[:, 0], suffs[:, 1]
        th = thetas[:, 0]
        return -0.5 * n[:, None] * np.log(th)[None, :] - s[:, None] / (2.0 * th)[None, :]

    def loglik_blocks(self, suffs, theta_blocks) -> np.ndarray:
        th = theta_blocks[:, :, 0]
        if np.any(th <= 0):
            raise DomainError("variance must be positive")
        s, n = suffs[:, 0], suffs[:, 1]
        return -0.5 * n[:, None] * np.log(th) - s[:, None] / (2.0 * th)

    def score_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0):
            raise DomainError("variance must be positive")
        s, n = suffs[:, 0], suffs[:, 1]
        th = thetas[:, 0]
        val = -n[:, None] / (2.0 * th)[None, :] + s[:, None] / (2.0 * th * th)[None, :]
        return val[:, :, None]

    def exact_mle_suff(self, suffs):
        # maximizer of the variance likelihood, (1/N) sum (x - mu)^2
        if np.any(suffs[:, 1] == 0):
            raise ValueError("empty dataset has no MLE")
        return (suffs[:, 0] / suffs[:, 1])[:, None]


class BernoulliToy(Model):
    """Single-coin model used as the brute-force estimator oracle."""

    name = "bernoulli"
    theta_dim = 1
    csv_columns = ("x",)

    def in_support(self, theta) -> bool:
        return bool(0.0 < theta[0] < 1.0)

    def sample_data(self, theta, n_obs, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        return (rng.random(n_obs) < theta[0]).astype(float)

    def suff(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float).reshape(-1)
        return np.array([np.sum(data), float(data.size)])

    def sample_suff(self, theta, n_obs, n_sets, rng) -> np.ndarray:
        theta = self.check_theta(theta)
        rng = _as_generator(rng)
        k = rng.binomial(n_obs, theta[0], size=n_sets).astype(float)
        return np.column_stack([k, np.full(n_sets, float(n_obs))])

    def sample_suff_many(self, thetas, n_obs, rng) -> np.ndarray:
        rng = _as_generator(rng)
        k = rng.binomial(n_obs, thetas[:, 0]).astype(float)
        return np.column_stack([k, np.full(thetas.shape[0], float(n_obs))])

    def loglik_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0) or np.any(thetas >= 1):
            raise DomainError("bernoulli theta must lie in (0, 1)")
        k, n = suffs[:, 0], suffs[:, 1]
        th = thetas[:, 0]
        return k[:, None] * np.log(th)[None, :] \
            + (n - k)[:, None] * np.log1p(-th)[None, :]

    def loglik_blocks(self, suffs, theta_blocks) -> np.ndarray:
        th = theta_blocks[:, :, 0]
        if np.any(th <= 0) or np.any(th >= 1):
            raise DomainError("bernoulli theta must lie in (0, 1)")
        k, n = suffs[:, 0], suffs[:, 1]
        return k[:, None] * np.log(th) + (n - k)[:, None] * np.log1p(-th)

    def score_grid(self, suffs, thetas) -> np.ndarray:
        if np.any(thetas <= 0) or np.any(thetas >= 1):
            raise DomainError("bernoulli theta must lie in (0, 1)")
        k, n = suffs[:, 0], suffs[:, 1]
        th = thetas[:, 0]
        val = k[:, None] / th[None, :] - (n - k)[:, None] / (1.0 - th)[None, :]
        return val[:, :, None]

    def exact_mle_suff(self, suffs, guard: float = GUARD_DELTA):
        if np.any(suffs[:, 1] == 0):
            raise ValueError("empty dataset has no MLE")
        return np.clip(suffs[:, 0] / suffs[:, 1], guard, 1.0 - guard)[:, None]


def make_model(kind: str, **params) -> Model:
    table = {"multinomial": Multinomial, "probit": Probit,
             "gaussvar": GaussVariance, "bernoulli": BernoulliToy}
    if kind not in table:
        raise ValueError(f"unknown model {kind!r}; expected one of {sorted(table)}")
    return table[kind](**params)
