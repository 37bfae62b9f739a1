"""f-divergence generators and the weight functions used by the gradient estimators.

Three generator families are supported:

* ``kl``            f(x) = -log(x), recovering the classical mutual information,
* ``alpha``         f_a(x) = (x^a - a*x - (1-a)) / (a*(a-1)),  a in (0, 1),
* stabilized alpha  fh_a(x) = (x^a - 1) / (a*(a-1)) = f_a(x) + (x-1)/(a-1).

The stabilized variant generates the same divergence (the extra term has zero
expectation) but is decreasing, which the lower-bound objective requires.
``F_term`` is F(x) = f(x) - x*f'(x), the weight attached to the score inside
the Monte Carlo gradient estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# alpha values close to 1 make the stabilized generator blow up like
# (x-1)/(alpha*(alpha-1)); refuse them unless explicitly overridden.
ALPHA_GUARD = 0.95

# log-ratios are clipped to this band before exponentiation
LOG_RATIO_CLAMP = 700.0


@dataclass(frozen=True)
class DivergenceSpec:
    """Selects the generator f. ``alpha`` is ignored for kind="kl"."""

    kind: str = "kl"
    alpha: float = 0.5
    stabilized: bool = True
    allow_extreme_alpha: bool = False

    def __post_init__(self):
        if self.kind not in ("kl", "alpha"):
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.kind == "alpha":
            if not 0.0 < self.alpha < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
            if self.alpha > ALPHA_GUARD and not self.allow_extreme_alpha:
                raise ValueError(
                    f"alpha={self.alpha} > {ALPHA_GUARD} is numerically unstable "
                    "(the stabilized generator diverges as alpha -> 1); pass "
                    "allow_extreme_alpha=True to override"
                )


def kl() -> DivergenceSpec:
    return DivergenceSpec(kind="kl")


def alpha_divergence(alpha: float, stabilized: bool = True, **kw) -> DivergenceSpec:
    return DivergenceSpec(kind="alpha", alpha=alpha, stabilized=stabilized, **kw)


def _check_domain(d: DivergenceSpec, x: np.ndarray) -> None:
    if np.any(x < 0):
        raise ValueError("divergence generator arguments must be >= 0")
    if d.kind == "kl" and np.any(x == 0):
        raise ValueError("f = -log is undefined at x = 0")


def f_value(d: DivergenceSpec, x):
    """Generator value f(x); f(1) = 0 for every kind."""
    x = np.asarray(x, dtype=float)
    _check_domain(d, x)
    if d.kind == "kl":
        return -np.log(x)
    a = d.alpha
    if d.stabilized:
        return (x**a - 1.0) / (a * (a - 1.0))
    return (x**a - a * x - (1.0 - a)) / (a * (a - 1.0))


def f_prime(d: DivergenceSpec, x):
    """Derivative f'(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    _check_domain(d, x)
    if np.any(x == 0):
        raise ValueError("f' is undefined at x = 0")
    if d.kind == "kl":
        return -1.0 / x
    a = d.alpha
    if d.stabilized:
        return x ** (a - 1.0) / (a - 1.0)
    return (x ** (a - 1.0) - 1.0) / (a - 1.0)


def F_term(d: DivergenceSpec, x):
    """F(x) = f(x) - x f'(x), continuous on [0, inf) for the alpha kinds."""
    x = np.asarray(x, dtype=float)
    _check_domain(d, x)
    if d.kind == "kl":
        return 1.0 - np.log(x)
    a = d.alpha
    if d.stabilized:
        return ((1.0 - a) * x**a - 1.0) / (a * (a - 1.0))
    return (1.0 - x**a) / a


def mi_upper_bound(alpha: float) -> float:
    """Universal bound on the alpha-divergence mutual information, 1/(a(1-a))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return 1.0 / (alpha * (1.0 - alpha))


def clamped_exp(log_ratio: np.ndarray) -> tuple[np.ndarray, int]:
    """exp() of a log-ratio clipped to +-LOG_RATIO_CLAMP; returns (value, n_clamped)."""
    log_ratio = np.asarray(log_ratio, dtype=float)
    n_clamped = int(np.count_nonzero(np.abs(log_ratio) > LOG_RATIO_CLAMP))
    return np.exp(np.clip(log_ratio, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)), n_clamped
