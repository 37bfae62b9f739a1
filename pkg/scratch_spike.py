"""Spike: validate gradient estimators against the enumeration+quadrature oracle."""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from scipy.special import comb, expit

from varprior.divergences import DivergenceSpec, f_value
from varprior.models import BernoulliToy
from varprior.objectives import EstimatorConfig, grad_full_mi, grad_lower_bound, estimate_mi
from varprior.pushforward import PriorNetwork

N = 3
GH_NODES, GH_W = np.polynomial.hermite.hermgauss(64)


def gh_expect(fn):
    # E_{e~N(0,1)}[fn(e)] by 64-node Gauss-Hermite
    x = np.sqrt(2.0) * GH_NODES
    return float(np.sum(GH_W * fn(x)) / np.sqrt(np.pi))


def theta_of(lam, eps):
    return expit(lam[0] * eps + lam[1])


def lik(k, theta):
    return theta**k * (1 - theta) ** (N - k)


def exact_mi(lam, div):
    p = {k: gh_expect(lambda e: lik(k, theta_of(lam, e))) for k in range(N + 1)}
    total = 0.0
    for k in range(N + 1):
        total += comb(N, k) * gh_expect(
            lambda e: lik(k, theta_of(lam, e)) * f_value(div, p[k] / lik(k, theta_of(lam, e))))
    return total


def exact_lb(lam, div, guard=1e-6):
    total = 0.0
    for k in range(N + 1):
        mle = np.clip(k / N, guard, 1 - guard)
        lm = lik(k, mle)
        total += comb(N, k) * gh_expect(
            lambda e: lik(k, theta_of(lam, e)) * f_value(div, lm / lik(k, theta_of(lam, e))))
    return total


def fd_grad(fn, lam, h=1e-4):
    g = np.zeros(2)
    for i in range(2):
        lp, lm = lam.copy(), lam.copy()
        lp[i] += h; lm[i] -= h
        g[i] = (fn(lp) - fn(lm)) / (2 * h)
    return g


def toy_net(lam):
    return PriorNetwork("single", 1, 1, ["sigmoid"],
                        [np.array([[lam[0]]])], [np.array([lam[1]])])


def check(div, grad_fn, exact_fn, cfg, reps=500, seed0=0, label=""):
    lam = np.array([0.8, 0.3])
    model = BernoulliToy()
    net = toy_net(lam)
    t0 = time.time()
    grads = np.array([grad_fn(net, model, div, cfg, seed0 + r).grad for r in range(reps)])
    el = time.time() - t0
    mean = grads.mean(axis=0)
    se = grads.std(axis=0, ddof=1) / np.sqrt(reps)
    fd = fd_grad(lambda l: exact_fn(l, div), lam)
    z = (mean - fd) / se
    print(f"{label:28s} fd={fd} mean={mean} se={se} z={np.round(z,2)} time={el:.1f}s")
    return np.all(np.abs(z) < 3)


cfg = EstimatorConfig(n_data=N, t_marginal=256, u_data=64, n_outer=50)
ok = True
for div in [DivergenceSpec("kl"),
            DivergenceSpec("alpha", 0.25), DivergenceSpec("alpha", 0.5), DivergenceSpec("alpha", 0.75)]:
    name = div.kind if div.kind == "kl" else f"alpha={div.alpha}"
    ok &= check(div, grad_full_mi, exact_mi, cfg, label=f"full_mi {name}")
    ok &= check(div, grad_lower_bound, exact_lb, cfg, label=f"lower_bound {name}")

# also check MI estimate itself
div = DivergenceSpec("alpha", 0.5)
model = BernoulliToy()
net = toy_net(np.array([0.8, 0.3]))
vals = [estimate_mi(net, model, div, EstimatorConfig(n_data=N, t_marginal=256, u_data=1, n_outer=100), s) for s in range(50)]
means = np.array([v.value for v in vals])
exact = exact_mi(np.array([0.8, 0.3]), div)
print(f"MI exact={exact:.5f} est mean={means.mean():.5f} se={means.std(ddof=1)/np.sqrt(50):.5f}")
print("ALL OK" if ok else "FAILURES")
