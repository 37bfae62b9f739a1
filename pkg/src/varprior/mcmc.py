"""Posterior sampling for implicitly defined priors: adaptive random-walk
Metropolis-Hastings on the latent variable, pushed through the network.

The target on the latent space is p_eps(eps) * L_N(X | g(lambda, eps)), known
pointwise even though the prior density on theta is not. The proposal scale
adapts per batch toward a 40% acceptance rate and is frozen once the kept
window starts, so the retained samples come from a fixed-kernel chain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .models import Model
from .pushforward import PriorNetwork, latent_log_density

SCALE_BOUNDS = (1e-6, 1e3)


@dataclass
class MHConfig:
    total_iters: int = 100_000
    keep_last: int = 50_000
    adapt_batch: int = 100
    target_accept: float = 0.40
    init_scale: float = 1.0
    proposal_cov: np.ndarray | None = None  # full covariance, else identity

    def __post_init__(self):
        if self.keep_last > self.total_iters:
            raise ValueError("keep_last cannot exceed total_iters")
        if self.init_scale <= 0:
            raise ValueError("proposal scale must be positive")
        if self.proposal_cov is not None:
            cov = np.asarray(self.proposal_cov, dtype=float)
            if not np.allclose(cov, cov.T):
                raise ValueError("proposal covariance must be symmetric")
            # raises LinAlgError unless positive definite
            np.linalg.cholesky(cov)
            self.proposal_cov = cov


@dataclass
class Chain:
    eps: np.ndarray               # kept latent states, (keep, p)
    theta: np.ndarray             # pushforward of the kept states, (keep, q)
    accepted: np.ndarray          # per-iteration indicator, (total,)
    scale_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def save_csv(self, path) -> None:
        """Kept window as CSV: iter, accepted, theta1..thetaq."""
        q = self.theta.shape[1]
        offset = self.accepted.size - self.theta.shape[0]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "accepted"] + [f"theta{j + 1}" for j in range(q)])
            for i in range(self.theta.shape[0]):
                writer.writerow([offset + i, int(self.accepted[offset + i])]
                                + [repr(v) for v in self.theta[i].tolist()])


def accept_probability(cur_log_target: float, prop_log_target: float) -> float:
    """Metropolis acceptance probability for a symmetric proposal."""
    if prop_log_target == -np.inf:
        return 0.0
    if cur_log_target == -np.inf:
        return 1.0
    return float(min(1.0, np.exp(min(0.0, prop_log_target - cur_log_target))))


def adapt_proposal(scale: float, batch_accept_rate: float,
                   target: float = 0.40, bounds=SCALE_BOUNDS) -> float:
    """scale <- scale * exp(rate - target), clipped to the allowed band."""
    return float(np.clip(scale * np.exp(batch_accept_rate - target), *bounds))


def softmax_latent_covariance(p: int, strength: float = 0.5) -> np.ndarray:
    """Correlated proposal for latent blocks feeding a softmax output:
    I - strength/p * ones, damping the direction that shifts all
    pre-activations together (which barely moves theta)."""
    return np.eye(p) - (strength / p) * np.ones((p, p))


def run_random_walk(log_target, x0: np.ndarray, cfg: MHConfig, seed,
                    reflect_bounds=None):
    """Generic adaptive random-walk Metropolis driver.

    ``log_target`` maps a state vector to its log density (up to a constant);
    with ``reflect_bounds`` = (lo, hi) arrays, proposals are folded back into
    the box (which keeps the proposal symmetric). Adaptation stops when the
    kept window begins. Returns (kept_states, accepted_flags, info dict).
    """
    rng = np.random.default_rng(seed)
    dim = x0.size
    chol = None if cfg.proposal_cov is None else np.linalg.cholesky(cfg.proposal_cov)
    freeze_at = cfg.total_iters - cfg.keep_last
    cur = np.array(x0, dtype=float)
    cur_lt = log_target(cur)
    scale = cfg.init_scale
    accepted = np.zeros(cfg.total_iters, dtype=bool)
    kept = np.empty((cfg.keep_last, dim))
    scale_history = [scale]
    warnings = []
    n_reflections = 0
    batch_hits = 0

    for it in range(cfg.total_iters):
        step = rng.standard_normal(dim)
        if chol is not None:
            step = chol @ step
        prop = cur + scale * step
        if reflect_bounds is not None:
            lo, hi = reflect_bounds
            span = hi - lo
            outside = np.any((prop < lo) | (prop > hi))
            if outside:
                n_reflections += 1
                folded = np.mod(prop - lo, 2.0 * span)
                prop = lo + np.where(folded > span, 2.0 * span - folded, folded)
        prop_lt = log_target(prop)
        if rng.random() < accept_probability(cur_lt, prop_lt):
            cur, cur_lt = prop, prop_lt
            accepted[it] = True
            batch_hits += 1
        if it >= freeze_at:
            kept[it - freeze_at] = cur
        if (it + 1) % cfg.adapt_batch == 0:
            rate = batch_hits / cfg.adapt_batch
            if it < freeze_at:
                scale = adapt_proposal(scale, rate, cfg.target_accept)
                scale_history.append(scale)
            elif rate == 0.0:
                warnings.append(f"all proposals rejected in batch ending at {it + 1}")
            batch_hits = 0

    info = {
        "acceptance_adaptation": float(np.mean(accepted[:freeze_at])) if freeze_at else None,
        "acceptance_kept": float(np.mean(accepted[freeze_at:])),
        "final_scale": scale,
        "scale_history": scale_history,
        "warnings": warnings,
        "n_reflections": n_reflections,
    }
    return kept, accepted, info


def log_target_eps(net: PriorNetwork, model: Model, data, eps) -> float:
    """log p_eps(eps) + log-likelihood kernel at theta = g(lambda, eps).

    Likelihood domain violations map to -inf (the chain simply rejects)."""
    eps = np.asarray(eps, dtype=float)
    theta = net.forward(eps)
    if not np.all(np.isfinite(theta)):
        return -np.inf
    suff = model.suff(data)
    try:
        ll = float(model.loglik_grid(suff[None], theta[None])[0, 0])
    except ValueError:
        return -np.inf
    base = float(latent_log_density(eps))
    return base + ll if np.isfinite(ll) else -np.inf


def mh_run(net: PriorNetwork, model: Model, data, cfg: MHConfig, seed) -> Chain:
    """Adaptive random-walk MH on the latent variable; returns the kept window
    pushed through the network plus acceptance diagnostics."""
    suff = model.suff(data)[None]

    def log_target(eps):
        theta = net.forward(eps)
        if not np.all(np.isfinite(theta)):
            return -np.inf
        try:
            ll = float(model.loglik_grid(suff, theta[None])[0, 0])
        except ValueError:
            return -np.inf
        base = float(latent_log_density(eps))
        return base + ll if np.isfinite(ll) else -np.inf

    rng0 = np.random.default_rng(seed)
    x0 = rng0.standard_normal(net.p)
    kept, accepted, info = run_random_walk(log_target, x0, cfg, rng0)
    theta = net.forward(kept)
    diag = {
        "acceptance_adaptation": info["acceptance_adaptation"],
        "acceptance_kept": info["acceptance_kept"],
        "final_scale": info["final_scale"],
        "warnings": info["warnings"],
    }
    if hasattr(model, "degenerate"):
        try:
            diag["degenerate_data"] = bool(model.degenerate(data))
        except (IndexError, ValueError):
            diag["degenerate_data"] = None
    for lag in (1, 5, 10):
        try:
            diag[f"autocorr_lag{lag}"] = [
                float(autocorrelation(theta[:, j], lag)[lag])
                for j in range(theta.shape[1])]
        except ValueError:
            diag[f"autocorr_lag{lag}"] = None
    return Chain(eps=kept, theta=theta, accepted=accepted,
                 scale_history=info["scale_history"], diagnostics=diag)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation at lags 0..max_lag; lag 0 is exactly 1."""
    x = np.asarray(series, dtype=float).reshape(-1)
    if x.size <= max_lag:
        raise ValueError("window shorter than the requested lag")
    x = x - np.mean(x)
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise ValueError("autocorrelation undefined for a constant chain")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for lag in range(1, max_lag + 1):
        out[lag] = float(np.dot(x[:-lag], x[lag:])) / denom
    return out
