"""Monte Carlo estimators of the generalized mutual information, its gradient,
and the maximum-likelihood-ratio lower bound used as a cheaper objective.

Everything is computed in the log domain; likelihood ratios are exponentiated
once, with the log-ratio clipped to +-700 (clamp events are counted and
surfaced on the returned estimates).

Estimator layout per gradient call (one stochastic-gradient unit):

* one outer latent draw eps* fixes theta* = g(lambda, eps*);
* U datasets are simulated from theta*;
* a T-point latent batch backs the marginal p_hat(X) = mean_t L(X | g(eps_t)),
  shared across the U datasets and across the F(.) and f'(.) weights;
* for the full mutual information with an alpha divergence, a second,
  independent T-point batch backs the differentiated member of the product-rule
  term (the derivative of the marginal), again shared across the U datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .divergences import DivergenceSpec, F_term, clamped_exp, f_prime, f_value
from .models import Model
from .pushforward import PriorNetwork, sample_latent


@dataclass
class EstimatorConfig:
    """Sample-size knobs of the Monte Carlo estimators.

    n_data:  observations per simulated dataset (N)
    t_marginal: latent draws behind the marginal / MLE proxy (T)
    u_data:  datasets per outer parameter draw in gradient estimates (U)
    n_outer: outer draws for mutual-information monitoring
    mle_mode: "auto" (exact MLE when the model has one, else sampled),
              "exact", or "sample"
    common_random_numbers: derive per-epoch streams deterministically from the
              training seed (identical seed => bit-identical run)
    """

    n_data: int = 10
    t_marginal: int = 50
    u_data: int = 1000
    n_outer: int = 200
    objective: str = "lower_bound"
    mle_mode: str = "auto"
    common_random_numbers: bool = True
    outer_per_step: int = 1  # outer draws averaged per gradient estimate

    def __post_init__(self):
        if self.t_marginal < 1 or self.u_data < 1 or self.n_data < 1:
            raise ValueError("sample sizes must be positive")
        if self.outer_per_step < 1:
            raise ValueError("outer_per_step must be positive")
        if self.objective not in ("full_mi", "lower_bound"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.mle_mode not in ("auto", "exact", "sample"):
            raise ValueError(f"unknown mle_mode {self.mle_mode!r}")


@dataclass
class MIEstimate:
    value: float
    std_error: float
    n_outer: int
    mean_ratio: float
    n_clamped: int = 0

    @property
    def lo95(self) -> float:
        return self.value - 1.96 * self.std_error

    @property
    def hi95(self) -> float:
        return self.value + 1.96 * self.std_error


@dataclass
class GradEstimate:
    grad: np.ndarray
    n_clamped: int = 0


def _log_marginal_rows(model: Model, suffs, thetas) -> np.ndarray:
    """log p_hat(X_i) = logmeanexp_t L(X_i | theta_t) for each dataset row."""
    ll = model.loglik_grid(suffs, thetas)
    return logsumexp(ll, axis=1) - np.log(thetas.shape[0])


def estimate_marginal(net: PriorNetwork, model: Model, data, t: int, seed) -> float:
    """Marginal likelihood p_lambda(X) ~= mean_t L(X | g(lambda, eps_t))."""
    if t < 1:
        raise ValueError("need at least one latent draw")
    thetas = net.sample_prior(t, seed)
    return float(np.exp(_log_marginal_rows(model, model.suff(data)[None], thetas)[0]))


def mle_proxy(net: PriorNetwork, model: Model, data, t: int, seed) -> float:
    """max_t L(X | g(lambda, eps_t)); >= estimate_marginal on the same draws."""
    if t < 1:
        raise ValueError("need at least one latent draw")
    thetas = net.sample_prior(t, seed)
    return float(np.exp(np.max(model.loglik_grid(model.suff(data)[None], thetas)[0])))


def _outer_draws(net, model, cfg, rng):
    """Shared front half of the MI / lower-bound estimators: outer thetas and
    one dataset per theta (returned as sufficient representations)."""
    eps = sample_latent(net.p, cfg.n_outer, rng)
    thetas = net.forward(eps)
    return thetas, model.sample_suff_many(thetas, cfg.n_data, rng)


def estimate_mi(net: PriorNetwork, model: Model, div: DivergenceSpec,
                cfg: EstimatorConfig, seed) -> MIEstimate:
    """Mean of f(p_hat(X)/L(X|theta)) over n_outer draws theta ~ pi, X ~ L(.|theta)."""
    if cfg.n_outer < 2:
        raise ValueError("n_outer must be >= 2 for a standard error")
    rng = np.random.default_rng(seed)
    thetas, suffs = _outer_draws(net, model, cfg, rng)
    log_own = model.loglik_paired(suffs, thetas)
    t_eps = sample_latent(net.p, cfg.n_outer * cfg.t_marginal, rng)
    t_blocks = net.forward(t_eps).reshape(cfg.n_outer, cfg.t_marginal, net.q)
    ll = model.loglik_blocks(suffs, t_blocks)
    log_p = logsumexp(ll, axis=1) - np.log(cfg.t_marginal)
    ratio, n_clamped = clamped_exp(log_p - log_own)
    vals = f_value(div, ratio)
    return MIEstimate(value=float(np.mean(vals)),
                      std_error=float(np.std(vals, ddof=1) / np.sqrt(cfg.n_outer)),
                      n_outer=cfg.n_outer,
                      mean_ratio=float(np.mean(ratio)),
                      n_clamped=n_clamped)


def _log_mle_values(net, model, cfg, suffs, rng) -> np.ndarray:
    """Per-dataset log L(X | theta_hat): exact MLE or the sampled proxy."""
    mode = cfg.mle_mode
    if mode == "auto":
        mode = "exact" if model.exact_mle_suff(suffs[:1]) is not None else "sample"
    if mode == "exact":
        mles = model.exact_mle_suff(suffs)
        if mles is None:
            raise ValueError(f"model {model.name} has no exact MLE; "
                             "use mle_mode='sample'")
        return model.loglik_paired(suffs, mles)
    t_thetas = net.forward(sample_latent(net.p, cfg.t_marginal, rng))
    return np.max(model.loglik_grid(suffs, t_thetas), axis=1)


def estimate_lower_bound(net: PriorNetwork, model: Model, div: DivergenceSpec,
                         cfg: EstimatorConfig, seed) -> MIEstimate:
    """Estimate of the likelihood-ratio lower bound B (same outer plumbing)."""
    _require_decreasing(div)
    if cfg.n_outer < 2:
        raise ValueError("n_outer must be >= 2 for a standard error")
    rng = np.random.default_rng(seed)
    thetas, suffs = _outer_draws(net, model, cfg, rng)
    log_own = model.loglik_paired(suffs, thetas)
    log_mle = _log_mle_values(net, model, cfg, suffs, rng)
    ratio, n_clamped = clamped_exp(log_mle - log_own)
    vals = f_value(div, ratio)
    return MIEstimate(value=float(np.mean(vals)),
                      std_error=float(np.std(vals, ddof=1) / np.sqrt(cfg.n_outer)),
                      n_outer=cfg.n_outer,
                      mean_ratio=float(np.mean(ratio)),
                      n_clamped=n_clamped)


def _require_decreasing(div: DivergenceSpec) -> None:
    if div.kind == "alpha" and not div.stabilized:
        raise ValueError("the lower-bound objective needs a decreasing generator; "
                         "use the stabilized alpha divergence")


def grad_full_mi(net: PriorNetwork, model: Model, div: DivergenceSpec,
                 cfg: EstimatorConfig, seed) -> GradEstimate:
    """Stochastic gradient of the full mutual information.

    First term: the F-weighted score average at theta* chained through the
    parameter Jacobian at eps*. Second term (alpha divergences only; it
    vanishes for f = -log): derivative of the Monte Carlo marginal, backed by
    an independent latent batch. With cfg.outer_per_step > 1 the whole
    estimate is averaged over that many outer draws.
    """
    rng = np.random.default_rng(seed)
    return _average_outer(lambda: _grad_full_mi_once(net, model, div, cfg, rng),
                          cfg.outer_per_step)


def _average_outer(one, k: int) -> GradEstimate:
    total = one()
    for _ in range(k - 1):
        nxt = one()
        total = GradEstimate(grad=total.grad + nxt.grad,
                             n_clamped=total.n_clamped + nxt.n_clamped)
    return GradEstimate(grad=total.grad / k, n_clamped=total.n_clamped)


def _grad_full_mi_once(net, model, div, cfg, rng) -> GradEstimate:
    eps_star = sample_latent(net.p, 1, rng)[0]
    theta_star = net.forward(eps_star)
    jac_star = net.jacobian(eps_star)
    suffs = model.sample_suff(theta_star, cfg.n_data, cfg.u_data, rng)

    marg_thetas = net.forward(sample_latent(net.p, cfg.t_marginal, rng))
    log_p = _log_marginal_rows(model, suffs, marg_thetas)
    log_own = model.loglik_grid(suffs, theta_star[None])[:, 0]
    ratio, n_clamped = clamped_exp(log_p - log_own)

    scores_star = model.score_grid(suffs, theta_star[None])[:, 0, :]   # (U, q)
    f_weights = F_term(div, ratio)
    fj = f_weights @ scores_star / cfg.u_data                          # (q,)
    grad = fj @ jac_star

    if div.kind == "kl":
        return GradEstimate(grad=grad, n_clamped=n_clamped)

    eps_diff = sample_latent(net.p, cfg.t_marginal, rng)
    diff_thetas = net.forward(eps_diff)
    jac_diff = net.jacobian_batch(eps_diff)                            # (T, q, L)
    log_members = model.loglik_grid(suffs, diff_thetas)                # (U, T)
    weights, n_cl2 = clamped_exp(log_members - log_own[:, None])
    fp = f_prime(div, ratio)
    scores_diff = model.score_grid(suffs, diff_thetas)                 # (U, T, q)
    inner = np.einsum("u,ut,utq->tq", fp, weights, scores_diff) / cfg.u_data
    grad = grad + np.einsum("tq,tql->l", inner, jac_diff) / cfg.t_marginal
    return GradEstimate(grad=grad, n_clamped=n_clamped + n_cl2)


def grad_lower_bound(net: PriorNetwork, model: Model, div: DivergenceSpec,
                     cfg: EstimatorConfig, seed) -> GradEstimate:
    """Stochastic gradient of the lower-bound objective (averaged over
    cfg.outer_per_step outer draws)."""
    _require_decreasing(div)
    rng = np.random.default_rng(seed)
    return _average_outer(lambda: _grad_lower_bound_once(net, model, div, cfg, rng),
                          cfg.outer_per_step)


def _grad_lower_bound_once(net, model, div, cfg, rng) -> GradEstimate:
    eps_star = sample_latent(net.p, 1, rng)[0]
    theta_star = net.forward(eps_star)
    jac_star = net.jacobian(eps_star)
    suffs = model.sample_suff(theta_star, cfg.n_data, cfg.u_data, rng)

    log_mle = _log_mle_values(net, model, cfg, suffs, rng)
    log_own = model.loglik_grid(suffs, theta_star[None])[:, 0]
    ratio, n_clamped = clamped_exp(log_mle - log_own)

    scores_star = model.score_grid(suffs, theta_star[None])[:, 0, :]
    fj = F_term(div, ratio) @ scores_star / cfg.u_data
    return GradEstimate(grad=fj @ jac_star, n_clamped=n_clamped)


def objective_gradient(net, model, div, cfg, seed) -> GradEstimate:
    """Gradient of the objective selected in the config."""
    if cfg.objective == "full_mi":
        return grad_full_mi(net, model, div, cfg, seed)
    return grad_lower_bound(net, model, div, cfg, seed)
