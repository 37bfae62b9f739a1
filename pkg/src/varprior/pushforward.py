"""Implicitly defined parametric priors: theta = g(lambda, eps), eps ~ N(0, I_p).

Two architectures are provided:

* ``single``          theta = act(W eps + b), with ``act`` either a softmax over
                      the whole output vector or a per-component elementwise
                      activation from {exp, softplus, sigmoid};
* ``two_layer_prelu`` theta = act(W2 PReLU_zeta(W1 eps + b1) + b2), hidden width
                      ``hidden_dim``, learnable slope zeta.

Softmax outputs get an affine guard theta <- (1 - q*delta)*theta + delta so that
every component stays strictly inside the simplex. Parameter Jacobians
d theta_j / d lambda_l are exact closed forms (no autodiff); the flat parameter
vector is ordered [W.ravel(), b] and, for the two-layer net,
[W1.ravel(), b1, W2.ravel(), b2, zeta].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

ELEMENTWISE = ("exp", "softplus", "sigmoid")

DEFAULT_INIT_STD = 0.05
DEFAULT_ZETA = 0.25
DEFAULT_DELTA = 1e-6


def sample_latent(p: int, count: int, seed) -> np.ndarray:
    """i.i.d. standard-normal latent draws, shape (count, p)."""
    if p < 1:
        raise ValueError("latent dimension must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((count, p))


def latent_log_density(eps: np.ndarray) -> np.ndarray:
    """Log density of N(0, I_p) at eps; eps is (p,) or (m, p)."""
    eps = np.asarray(eps, dtype=float)
    p = eps.shape[-1]
    return -0.5 * np.sum(eps * eps, axis=-1) - 0.5 * p * np.log(2.0 * np.pi)


def _softplus(x):
    # log(1 + e^x) with the overflow branch x + log1p(e^-x) built in
    return np.logaddexp(0.0, x)


def _apply_elementwise(names, z):
    out = np.empty_like(z)
    for j, name in enumerate(names):
        col = z[..., j]
        if name == "exp":
            out[..., j] = np.exp(col)
        elif name == "softplus":
            out[..., j] = _softplus(col)
        elif name == "sigmoid":
            out[..., j] = expit(col)
        else:
            raise ValueError(f"unknown activation {name!r}")
    return out


def _elementwise_derivative(names, z, theta):
    d = np.empty_like(z)
    for j, name in enumerate(names):
        if name == "exp":
            d[..., j] = theta[..., j]
        elif name == "softplus":
            d[..., j] = expit(z[..., j])
        elif name == "sigmoid":
            d[..., j] = theta[..., j] * (1.0 - theta[..., j])
    return d


@dataclass
class PriorNetwork:
    """A pushforward prior network with exact parameter Jacobians.

    ``activation`` is the string "softmax" or a sequence of per-component
    elementwise activation names of length q.
    """

    arch: str
    p: int
    q: int
    activation: object
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    hidden_dim: int | None = None
    zeta: float | None = None
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.arch not in ("single", "two_layer_prelu"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.activation != "softmax":
            self.activation = tuple(self.activation)
            if len(self.activation) != self.q:
                raise ValueError("need one activation per output component")
            for name in self.activation:
                if name not in ELEMENTWISE:
                    raise ValueError(f"unknown activation {name!r}")
        if self.arch == "two_layer_prelu":
            if self.hidden_dim is None or self.zeta is None:
                raise ValueError("two_layer_prelu needs hidden_dim and zeta")
            if self.zeta <= 0:
                raise ValueError("PReLU slope must be positive")
        self._check_shapes()

    def _check_shapes(self):
        if self.arch == "single":
            (w,), (b,) = self.weights, self.biases
            if w.shape != (self.q, self.p) or b.shape != (self.q,):
                raise ValueError("inconsistent single-layer shapes")
        else:
            (w1, w2), (b1, b2) = self.weights, self.biases
            h = self.hidden_dim
            if w1.shape != (h, self.p) or b1.shape != (h,):
                raise ValueError("inconsistent first-layer shapes")
            if w2.shape != (self.q, h) or b2.shape != (self.q,):
                raise ValueError("inconsistent second-layer shapes")

    # ------------------------------------------------------------------
    # construction / parameter vector
    # ------------------------------------------------------------------

    @classmethod
    def initialize(cls, arch, p, q, activation, seed, hidden_dim=None,
                   init_std=DEFAULT_INIT_STD, zeta=DEFAULT_ZETA, delta=DEFAULT_DELTA):
        """Gaussian weights (std ``init_std``), zero biases, zeta = 0.25."""
        rng = np.random.default_rng(seed)
        if arch == "single":
            weights = [rng.normal(0.0, init_std, size=(q, p))]
            biases = [np.zeros(q)]
            return cls(arch, p, q, activation, weights, biases, delta=delta)
        weights = [rng.normal(0.0, init_std, size=(hidden_dim, p)),
                   rng.normal(0.0, init_std, size=(q, hidden_dim))]
        biases = [np.zeros(hidden_dim), np.zeros(q)]
        return cls(arch, p, q, activation, weights, biases,
                   hidden_dim=hidden_dim, zeta=zeta, delta=delta)

    @property
    def n_params(self) -> int:
        n = sum(w.size for w in self.weights) + sum(b.size for b in self.biases)
        return n + (1 if self.arch == "two_layer_prelu" else 0)

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        if self.arch == "two_layer_prelu":
            parts.append(np.array([self.zeta]))
        return np.concatenate(parts)

    def set_params(self, lam: np.ndarray) -> None:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {lam.shape}")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = lam[k:k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = lam[k:k + b.size].copy()
            k += b.size
        if self.arch == "two_layer_prelu":
            self.zeta = float(lam[k])

    def copy(self) -> "PriorNetwork":
        return PriorNetwork(self.arch, self.p, self.q, self.activation,
                            [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases],
                            hidden_dim=self.hidden_dim, zeta=self.zeta,
                            delta=self.delta)

    # ------------------------------------------------------------------
    # forward / sampling
    # ------------------------------------------------------------------

    def _output(self, z):
        """Apply the output activation to pre-activations z (..., q)."""
        if self.activation == "softmax":
            zs = z - np.max(z, axis=-1, keepdims=True)
            e = np.exp(zs)
            s = e / np.sum(e, axis=-1, keepdims=True)
            return (1.0 - self.q * self.delta) * s + self.delta
        return _apply_elementwise(self.activation, z)

    def forward(self, eps: np.ndarray) -> np.ndarray:
        """theta = g(lambda, eps); eps is (p,) or (m, p)."""
        eps = np.asarray(eps, dtype=float)
        if not np.all(np.isfinite(eps)):
            raise ValueError("latent input must be finite")
        if self.arch == "single":
            z = eps @ self.weights[0].T + self.biases[0]
        else:
            u = eps @ self.weights[0].T + self.biases[0]
            h = np.where(u >= 0.0, u, self.zeta * u)
            z = h @ self.weights[1].T + self.biases[1]
        return self._output(z)

    def sample_prior(self, count: int, seed) -> np.ndarray:
        """Pushforward samples, shape (count, q); deterministic per seed."""
        return self.forward(sample_latent(self.p, count, seed))

    # ------------------------------------------------------------------
    # exact Jacobians
    # ------------------------------------------------------------------

    def _output_jacobian(self, z, theta):
        """d theta / d z for a batch: returns (m, q, q)."""
        m, q = z.shape
        if self.activation == "softmax":
            scale = 1.0 - q * self.delta
            s = (theta - self.delta) / scale
            a = -np.einsum("mi,mj->mij", s, s)
            idx = np.arange(q)
            a[:, idx, idx] += s
            return scale * a
        d = _elementwise_derivative(self.activation, z, theta)
        a = np.zeros((m, q, q))
        idx = np.arange(q)
        a[:, idx, idx] = d
        return a

    def jacobian_batch(self, eps: np.ndarray) -> np.ndarray:
        """Exact d theta_j / d lambda_l for each row of eps: (m, q, L)."""
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        if not np.all(np.isfinite(eps)):
            raise ValueError("latent input must be finite")
        m, q, p = eps.shape[0], self.q, self.p
        jac = np.zeros((m, q, self.n_params))
        if self.arch == "single":
            z = eps @ self.weights[0].T + self.biases[0]
            theta = self._output(z)
            a = self._output_jacobian(z, theta)          # (m, q, q)
            jac[:, :, :q * p] = np.einsum("mjr,mk->mjrk", a, eps).reshape(m, q, q * p)
            jac[:, :, q * p:] = a
            return jac
        h_dim = self.hidden_dim
        u = eps @ self.weights[0].T + self.biases[0]     # (m, H)
        hid = np.where(u >= 0.0, u, self.zeta * u)
        z = hid @ self.weights[1].T + self.biases[1]
        theta = self._output(z)
        a = self._output_jacobian(z, theta)              # (m, q, q)
        b = np.einsum("mjr,rh->mjh", a, self.weights[1])  # d theta / d hidden
        d_pre = np.where(u >= 0.0, 1.0, self.zeta)       # PReLU slope per unit
        bd = b * d_pre[:, None, :]                       # (m, q, H)
        k = 0
        jac[:, :, k:k + h_dim * p] = np.einsum("mjh,mk->mjhk", bd, eps).reshape(m, q, h_dim * p)
        k += h_dim * p
        jac[:, :, k:k + h_dim] = bd
        k += h_dim
        jac[:, :, k:k + q * h_dim] = np.einsum("mjr,mh->mjrh", a, hid).reshape(m, q, q * h_dim)
        k += q * h_dim
        jac[:, :, k:k + q] = a
        k += q
        jac[:, :, k] = np.einsum("mjh,mh->mj", b, np.where(u < 0.0, u, 0.0))
        return jac

    def jacobian(self, eps: np.ndarray) -> np.ndarray:
        """Exact Jacobian for a single latent point: (q, L)."""
        return self.jacobian_batch(np.asarray(eps, dtype=float)[None, :])[0]

    # ------------------------------------------------------------------
    # serialization (lossless: floats round-trip through repr)
    # ------------------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "architecture": self.arch,
            "p": self.p,
            "q": self.q,
            "activation": self.activation if self.activation == "softmax"
                          else list(self.activation),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "delta": self.delta,
        }
        if self.arch == "two_layer_prelu":
            doc["hidden_dim"] = self.hidden_dim
            doc["zeta"] = self.zeta
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PriorNetwork":
        doc = json.loads(text)
        arch, p, q = doc["architecture"], doc["p"], doc["q"]
        h = doc.get("hidden_dim")
        shapes = [(q, p)] if arch == "single" else [(h, p), (q, h)]
        weights = [np.array(w, dtype=float).reshape(s)
                   for w, s in zip(doc["weights"], shapes)]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
        act = doc["activation"]
        return cls(arch, p, q, act, weights, biases, hidden_dim=h,
                   zeta=doc.get("zeta"), delta=doc["delta"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PriorNetwork":
        with open(path) as fh:
            return cls.from_json(fh.read())


# ----------------------------------------------------------------------
# closed-form marginals for single-layer exp / softplus components
# ----------------------------------------------------------------------


class LogNormalMarginal:
    """theta_j = exp(w.eps + b) ~ LogNormal(b, ||w||^2)."""

    def __init__(self, mu: float, sigma: float):
        self.mu, self.sigma = float(mu), float(sigma)
        self.name = "lognormal"

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("log-normal marginal is supported on (0, inf)")
        lx = np.log(x)
        return np.exp(-0.5 * ((lx - self.mu) / self.sigma) ** 2) / (
            x * self.sigma * np.sqrt(2.0 * np.pi))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("log-normal marginal is supported on (0, inf)")
        return norm.cdf((np.log(x) - self.mu) / self.sigma)

    @property
    def median(self):
        return float(np.exp(self.mu))


class SoftplusNormalMarginal:
    """theta_j = log(1 + exp(w.eps + b)) with w.eps + b ~ N(b, ||w||^2)."""

    def __init__(self, mu: float, sigma: float):
        self.mu, self.sigma = float(mu), float(sigma)
        self.name = "softplus_normal"

    def _z(self, x):
        # inverse softplus: log(e^x - 1), computed stably
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("softplus marginal is supported on (0, inf)")
        return x + np.log1p(-np.exp(-x))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = self._z(x)
        dz = 1.0 / -np.expm1(-x)   # dz/dx = 1 / (1 - e^-x)
        return norm.pdf((z - self.mu) / self.sigma) / self.sigma * dz

    def cdf(self, x):
        return norm.cdf((self._z(x) - self.mu) / self.sigma)


def analytic_marginal(net: PriorNetwork, component: int):
    """Closed-form marginal distribution of one output component, or None.

    Available for single-layer exp (log-normal) and softplus components only.
    """
    if net.arch != "single" or net.activation == "softmax":
        return None
    name = net.activation[component]
    w = net.weights[0][component]
    sigma = float(np.linalg.norm(w))
    if sigma == 0.0:
        return None  # degenerate pushforward, no density
    b = float(net.biases[0][component])
    if name == "exp":
        return LogNormalMarginal(b, sigma)
    if name == "softplus":
        return SoftplusNormalMarginal(b, sigma)
    return None


def marginal_density(net: PriorNetwork, component: int, theta_value: float):
    """Density value of the closed-form marginal, or None when unavailable."""
    dist = analytic_marginal(net, component)
    if dist is None:
        return None
    return float(dist.pdf(theta_value))
