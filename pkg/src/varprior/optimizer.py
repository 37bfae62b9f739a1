"""Adam-based stochastic ascent, linear-constraint machinery, the augmented
Lagrangian scheme, and the three-step constrained training pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .divergences import DivergenceSpec
from .models import Model
from .objectives import (EstimatorConfig, GradEstimate, MIEstimate,
                         estimate_mi, objective_gradient)
from .pushforward import PriorNetwork, analytic_marginal, sample_latent


class TrainingError(RuntimeError):
    """Raised when training aborts; carries a diagnostic state dump."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonIntegrableError(RuntimeError):
    """Monte Carlo tail divergence detected while estimating constants."""


# ----------------------------------------------------------------------
# Adam (ascent)
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int, lr: float) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0, lr=lr)


def adam_step(state: AdamState, grad: np.ndarray, lam: np.ndarray):
    """One bias-corrected Adam ascent step; returns (state', lam')."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape or lam.shape != state.m.shape:
        raise ValueError("gradient / parameter shape mismatch")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_lam = lam + state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, lr=state.lr, beta1=state.beta1,
                          beta2=state.beta2, eps=state.eps)
    return new_state, new_lam


# ----------------------------------------------------------------------
# constraints
# ----------------------------------------------------------------------


@dataclass
class ConstraintFunction:
    """A positive function a(theta) with its gradient, acting on theta batches.

    ``value(thetas)`` maps (m, q) -> (m,); ``deriv(thetas)`` maps (m, q) -> (m, q).
    """

    value: callable
    deriv: callable
    label: str = "a"


def moment_constraint(component: int, exponent: float) -> ConstraintFunction:
    """a(theta) = theta_component ** exponent."""

    def value(thetas):
        return thetas[:, component] ** exponent

    def deriv(thetas):
        out = np.zeros_like(thetas)
        out[:, component] = exponent * thetas[:, component] ** (exponent - 1.0)
        return out

    return ConstraintFunction(value, deriv, label=f"theta{component + 1}^{exponent}")


def rational_constraint(component: int, beta: float, tau: float) -> ConstraintFunction:
    """a(theta) = 1 / (theta^beta + theta^tau), beta < 0 < tau."""

    def value(thetas):
        x = thetas[:, component]
        return 1.0 / (x**beta + x**tau)

    def deriv(thetas):
        x = thetas[:, component]
        denom = x**beta + x**tau
        out = np.zeros_like(thetas)
        out[:, component] = -(beta * x ** (beta - 1.0) + tau * x ** (tau - 1.0)) / denom**2
        return out

    return ConstraintFunction(value, deriv,
                              label=f"1/(theta{component + 1}^{beta}+theta{component + 1}^{tau})")


def tabulated_constraint(component: int, xs, ys) -> ConstraintFunction:
    """a(theta) interpolated linearly from a user table; derivative from the
    interpolant's slopes. Evaluation outside the table range is an error."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need matching 1-d tables with at least two points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    slopes = np.diff(ys) / np.diff(xs)

    def _check(x):
        if np.any(x < xs[0]) or np.any(x > xs[-1]):
            raise ValueError("tabulated constraint evaluated outside its table")

    def value(thetas):
        x = thetas[:, component]
        _check(x)
        return np.interp(x, xs, ys)

    def deriv(thetas):
        x = thetas[:, component]
        _check(x)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        out = np.zeros_like(thetas)
        out[:, component] = slopes[idx]
        return out

    return ConstraintFunction(value, deriv, label="tabulated")


@dataclass
class Constraint:
    fn: ConstraintFunction
    target: float  # b_k


@dataclass
class LagrangianState:
    """Multipliers and adaptive penalties of the augmented Lagrangian."""

    eta: np.ndarray
    eta_tilde: np.ndarray
    growth: float = 2.0        # v
    threshold: float = 0.005   # M
    cap: float = 1e4           # eta_tilde_max
    period: int = 100          # epochs between multiplier updates

    @classmethod
    def init(cls, n_constraints: int, eta_tilde0: float = 1.0, **kw) -> "LagrangianState":
        return cls(eta=np.zeros(n_constraints),
                   eta_tilde=np.full(n_constraints, eta_tilde0), **kw)


def estimate_constraint(net: PriorNetwork, constraints: list[Constraint],
                        n_samples: int, seed):
    """Monte Carlo estimates of C_k = E[a_k(theta)] - b_k with standard errors."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples for a constraint estimate")
    thetas = net.sample_prior(n_samples, seed)
    values = np.empty(len(constraints))
    ses = np.empty(len(constraints))
    for k, c in enumerate(constraints):
        a = c.fn.value(thetas)
        values[k] = np.mean(a) - c.target
        ses[k] = np.std(a, ddof=1) / np.sqrt(n_samples)
    return values, ses


def update_multipliers(lag: LagrangianState, c_values: np.ndarray) -> LagrangianState:
    """eta <- eta - eta_tilde * C, then grow or shrink the penalties by v
    depending on whether ||C||_inf exceeds the threshold M."""
    c_values = np.asarray(c_values, dtype=float)
    eta = lag.eta - lag.eta_tilde * c_values
    if np.max(np.abs(c_values)) > lag.threshold:
        eta_tilde = np.minimum(lag.eta_tilde * lag.growth, lag.cap)
    else:
        eta_tilde = lag.eta_tilde / lag.growth
    return LagrangianState(eta=eta, eta_tilde=eta_tilde, growth=lag.growth,
                           threshold=lag.threshold, cap=lag.cap, period=lag.period)


def constraint_penalty_gradient(net: PriorNetwork, constraints: list[Constraint],
                                lag: LagrangianState, c_values: np.ndarray,
                                n_samples: int, seed) -> np.ndarray:
    """Gradient of the Lagrangian's constraint part:
    E_eps[ sum_k da_k/dtheta (eta_k - eta_tilde_k C_k) dg/dlambda ]."""
    eps = sample_latent(net.p, n_samples, seed)
    thetas = net.forward(eps)
    jac = net.jacobian_batch(eps)
    coeff = lag.eta - lag.eta_tilde * np.asarray(c_values, dtype=float)
    total = np.zeros((n_samples, net.q))
    for k, c in enumerate(constraints):
        total += coeff[k] * c.fn.deriv(thetas)
    return np.einsum("mq,mql->l", total, jac) / n_samples


def lagrangian_gradient(net, model, div, cfg, constraints, lag, seed) -> GradEstimate:
    """Objective gradient plus the constraint-penalty part (admissible form).

    With no constraints this is exactly the unconstrained objective gradient.
    The per-epoch constraint values are refreshed here from the same latent
    batch that feeds the penalty term.
    """
    base = objective_gradient(net, model, div, cfg, seed)
    if not constraints:
        return base
    ss = np.random.SeedSequence(_entropy_of(seed), spawn_key=(977,))
    c_values, _ = estimate_constraint(net, constraints,
                                      max(100, cfg.t_marginal), ss)
    pen = constraint_penalty_gradient(net, constraints, lag, c_values,
                                      max(100, cfg.t_marginal), ss)
    return GradEstimate(grad=base.grad + pen, n_clamped=base.n_clamped)


def _entropy_of(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        return ent if isinstance(ent, int) else int(ent[0])
    return int(seed)


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------


@dataclass
class TrainResult:
    net: PriorNetwork
    mi_trace: list = field(default_factory=list)          # MIEstimate per epoch
    constraint_trace: list = field(default_factory=list)  # per-epoch max |C_hat|
    multiplier_trace: list = field(default_factory=list)  # dicts at update epochs
    n_clamped: int = 0

    @property
    def final_gap(self):
        return self.multiplier_trace[-1]["gap"] if self.multiplier_trace else None


def train(net: PriorNetwork, model: Model, div: DivergenceSpec,
          cfg: EstimatorConfig, epochs: int, lr: float,
          constraints: list[Constraint] | None = None,
          lagrangian: LagrangianState | None = None,
          seed: int = 0, monitor_every: int = 1,
          constraint_samples: int = 2000,
          update_samples: int = 40_000) -> TrainResult:
    """Adam ascent on the selected objective, optionally with the augmented
    Lagrangian for linear constraints on the prior.

    Per-epoch random streams derive deterministically from ``seed`` (unless
    cfg.common_random_numbers is False), so a fixed seed reproduces the run
    bit for bit. The mutual information is monitored every ``monitor_every``
    epochs with cfg.n_outer outer draws.
    """
    net = net.copy()
    lam = net.get_params()
    adam = AdamState.init(lam.size, lr)
    constraints = constraints or []
    if constraints and lagrangian is None:
        lagrangian = LagrangianState.init(len(constraints))
    root = np.random.SeedSequence(seed if cfg.common_random_numbers else None)
    result = TrainResult(net=net)

    for epoch in range(epochs):
        grad_seed, mi_seed, c_seed = (np.random.SeedSequence(
            _entropy_of(root), spawn_key=(epoch, k)) for k in range(3))
        if constraints:
            n_c = max(100, cfg.t_marginal, constraint_samples)
            c_values, _ = estimate_constraint(net, constraints, n_c, c_seed)
            est = objective_gradient(net, model, div, cfg, grad_seed)
            pen = constraint_penalty_gradient(net, constraints, lagrangian,
                                              c_values, n_c, c_seed)
            est = GradEstimate(grad=est.grad + pen, n_clamped=est.n_clamped)
            result.constraint_trace.append(float(np.max(np.abs(c_values))))
        else:
            est = objective_gradient(net, model, div, cfg, grad_seed)
        result.n_clamped += est.n_clamped
        if not np.all(np.isfinite(est.grad)):
            raise TrainingError(
                f"non-finite gradient at epoch {epoch}",
                diagnostics={"epoch": epoch,
                             "lambda_norm": float(np.linalg.norm(lam)),
                             "grad": est.grad.tolist(),
                             "eta": None if not constraints else lagrangian.eta.tolist()})
        adam, lam = adam_step(adam, est.grad, lam)
        net.set_params(lam)

        if epoch % monitor_every == 0:
            result.mi_trace.append(estimate_mi(net, model, div, cfg, mi_seed))

        if constraints and (epoch + 1) % lagrangian.period == 0:
            u_seed = np.random.SeedSequence(_entropy_of(root), spawn_key=(epoch, 3))
            c_big, c_se = estimate_constraint(net, constraints, update_samples, u_seed)
            lagrangian = update_multipliers(lagrangian, c_big)
            result.multiplier_trace.append({
                "epoch": epoch + 1,
                "c": c_big.tolist(),
                "gap": float(np.max(np.abs(c_big))),
                "eta": lagrangian.eta.tolist(),
                "eta_tilde": lagrangian.eta_tilde.tolist(),
            })
    return result


# ----------------------------------------------------------------------
# constants K, c and the three-step constrained pipeline
# ----------------------------------------------------------------------


@dataclass
class ConstantsEstimate:
    k_hat: float
    k_se: float
    c_hat: float
    c_se: float
    method: str

    @property
    def target(self) -> float:
        """Constraint target b = c / K."""
        return self.c_hat / self.k_hat


def _tail_check(contribs: np.ndarray, label: str) -> None:
    total = float(np.sum(contribs))
    if not np.isfinite(total) or total <= 0:
        raise NonIntegrableError(f"{label}: non-finite Monte Carlo sum")
    if float(np.max(contribs)) > 0.25 * total:
        raise NonIntegrableError(
            f"{label}: a single sample carries more than 25% of the Monte Carlo "
            "sum; the integral looks divergent")


def estimate_constants(net: PriorNetwork, a: ConstraintFunction, alpha: float,
                       n_samples: int, seed, method: str = "plugin",
                       j_density=None, prior_pdf=None) -> ConstantsEstimate:
    """Estimate K = integral(J a^(1/alpha)) and c = integral(J a^(1+1/alpha)).

    method="plugin": moments of the fitted prior, E[a^(1/alpha)] and
    E[a^(1+1/alpha)]. These approximate K and c only up to the (unknowable)
    normalization of the improper target J, but their ratio -- the constraint
    target b -- is normalization-free.

    method="importance": unbiased importance estimates
    mean(J(theta_i) a(theta_i)^power / pdf(theta_i)) over prior samples; needs
    a density representative ``j_density`` for J and the prior's closed-form
    density ``prior_pdf`` (both callables over theta batches (m, q) -> (m,)).

    Tail divergence (non-integrable a) raises NonIntegrableError.
    """
    thetas = net.sample_prior(n_samples, seed)
    a_vals = a.value(thetas)
    if np.any(a_vals <= 0):
        raise ValueError("constraint functions must be positive on the support")
    if method == "plugin":
        weight = 1.0
    elif method == "importance":
        if j_density is None or prior_pdf is None:
            raise ValueError("importance estimation needs j_density and prior_pdf")
        weight = j_density(thetas) / prior_pdf(thetas)
    else:
        raise ValueError(f"unknown constants method {method!r}")
    with np.errstate(over="ignore"):
        k_contrib = a_vals ** (1.0 / alpha) * weight
        c_contrib = a_vals ** (1.0 + 1.0 / alpha) * weight
    _tail_check(k_contrib, "K")
    _tail_check(c_contrib, "c")
    return ConstantsEstimate(
        k_hat=float(np.mean(k_contrib)),
        k_se=float(np.std(k_contrib, ddof=1) / np.sqrt(n_samples)),
        c_hat=float(np.mean(c_contrib)),
        c_se=float(np.std(c_contrib, ddof=1) / np.sqrt(n_samples)),
        method=method)


@dataclass
class PipelineResult:
    net_unconstrained: PriorNetwork
    net_constrained: PriorNetwork
    constants: ConstantsEstimate
    target_b: float
    unconstrained: TrainResult | None
    constrained: TrainResult


def constrained_pipeline(model: Model, div: DivergenceSpec, a: ConstraintFunction,
                         cfg: EstimatorConfig, net_unconstrained: PriorNetwork,
                         net_constrained: PriorNetwork, *,
                         lr_unconstrained: float, lr_constrained: float,
                         epochs_unconstrained: int, epochs_constrained: int,
                         seed: int = 0, n_constants: int = 200_000,
                         constants_method: str = "plugin", j_density=None,
                         skip_unconstrained: bool = False,
                         cfg_unconstrained: EstimatorConfig | None = None,
                         div_unconstrained: DivergenceSpec | None = None,
                         constants_alpha: float | None = None,
                         eta_tilde0: float = 1.0,
                         constraint_samples: int = 2000,
                         monitor_every: int = 1) -> PipelineResult:
    """Three-step constrained fit: unconstrained prior, constants K and c from
    its samples, then constrained training against the target b = c/K.

    The constants' exponents 1/alpha and 1 + 1/alpha come from the alpha
    divergence defining the constrained problem; pass ``constants_alpha`` when
    the stage-3 training divergence is not the alpha divergence itself.
    Different architectures (and estimator configs / divergences) for the two
    stages are explicitly supported.
    """
    if constants_alpha is None:
        if div.kind != "alpha":
            raise ValueError("the constrained pipeline needs an alpha divergence "
                             "(or an explicit constants_alpha)")
        constants_alpha = div.alpha
    ss = np.random.SeedSequence(seed)
    s_train, s_const, s_train2 = ss.spawn(3)
    if skip_unconstrained:
        uncon_result = None
        trained_uncon = net_unconstrained
    else:
        uncon_result = train(net_unconstrained, model,
                             div_unconstrained or div,
                             cfg_unconstrained or cfg,
                             epochs_unconstrained, lr_unconstrained,
                             seed=_entropy_of(s_train),
                             monitor_every=monitor_every)
        trained_uncon = uncon_result.net
    prior_pdf = None
    if constants_method == "importance":
        marg = analytic_marginal(trained_uncon, 0)
        if trained_uncon.q != 1 or marg is None:
            raise ValueError("importance constants need a scalar prior with a "
                             "closed-form density")
        prior_pdf = lambda thetas: marg.pdf(thetas[:, 0])
    constants = estimate_constants(trained_uncon, a, constants_alpha, n_constants,
                                   s_const, method=constants_method,
                                   j_density=j_density, prior_pdf=prior_pdf)
    target = constants.target
    con_result = train(net_constrained, model, div, cfg, epochs_constrained,
                       lr_constrained, constraints=[Constraint(a, target)],
                       lagrangian=LagrangianState.init(1, eta_tilde0=eta_tilde0),
                       seed=_entropy_of(s_train2),
                       constraint_samples=constraint_samples,
                       monitor_every=monitor_every)
    return PipelineResult(net_unconstrained=trained_uncon,
                          net_constrained=con_result.net,
                          constants=constants, target_b=target,
                          unconstrained=uncon_result, constrained=con_result)
