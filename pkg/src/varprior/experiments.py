"""Config-driven experiment orchestration: validation, training runs, posterior
sampling, evaluation metrics, artifact persistence, and the named
reproduction experiments.

Artifacts per run directory:
    manifest.json   config echo, seed, epochs, parameter checksum, file map
    network.json    final network (plus network_unconstrained.json for pipelines)
    mi_trace.csv    epoch, mi_mean, mi_lo95, mi_hi95 [, constraint_gap]
    dataset.csv     posterior dataset (when a posterior block is present)
    samples.csv     kept posterior chain (iter, accepted, theta1..thetaq)
    metrics.json    evaluation metrics; the timestamp key is the only field
                    excluded from byte-for-byte reproducibility
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import tomli

from . import evaluation as ev
from .divergences import DivergenceSpec
from .jeffreys import JeffreysGrid, mh_theta_reference, probit_jeffreys_grid
from .mcmc import Chain, MHConfig, mh_run, softmax_latent_covariance
from .models import Model, make_model
from .objectives import EstimatorConfig
from .optimizer import (Constraint, LagrangianState, constrained_pipeline,
                        moment_constraint, rational_constraint,
                        tabulated_constraint, train)
from .pushforward import PriorNetwork

REPRODUCIBLE_IDS = (
    "multinomial_prior", "multinomial_posterior", "probit_unconstrained",
    "probit_constrained", "gaussvar", "gaussvar_constrained",
    "alpha_sweep", "latent_dim_sweep", "seed_ecdf", "mean_norm_curve",
)


class ConfigError(ValueError):
    """Configuration problem; message carries the offending field path."""


# ----------------------------------------------------------------------
# config loading / validation
# ----------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")


def _need(cfg, path, table, key, types, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required field {path}.{key}")
        return default
    val = table[key]
    if types and not isinstance(val, types):
        raise ConfigError(f"field {path}.{key} has wrong type "
                          f"{type(val).__name__}")
    return val


def build_model(cfg: dict) -> Model:
    table = cfg.get("model")
    if table is None:
        raise ConfigError("missing required section model")
    kind = _need(cfg, "model", table, "kind", str, required=True)
    params = {k: v for k, v in table.items() if k != "kind"}
    try:
        return make_model(kind, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}")


def build_network(table: dict, model: Model, seed, section="network") -> PriorNetwork:
    if table is None:
        raise ConfigError(f"missing required section {section}")
    arch = _need(None, section, table, "arch", str, default="single")
    p = _need(None, section, table, "p", int, required=True)
    activation = _need(None, section, table, "activation", (str, list), required=True)
    q = _need(None, section, table, "q", int, default=model.theta_dim)
    if q != model.theta_dim:
        raise ConfigError(f"{section}.q = {q} does not match the model's "
                          f"parameter dimension {model.theta_dim}")
    try:
        return PriorNetwork.initialize(
            arch, p, q, activation, seed,
            hidden_dim=_need(None, section, table, "hidden_dim", int),
            init_std=_need(None, section, table, "init_std", (int, float),
                           default=0.05),
            zeta=_need(None, section, table, "zeta", (int, float), default=0.25),
            delta=_need(None, section, table, "delta", (int, float), default=1e-6))
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}")


def build_divergence(cfg: dict) -> DivergenceSpec:
    table = cfg.get("divergence", {})
    try:
        return DivergenceSpec(
            kind=_need(cfg, "divergence", table, "kind", str, default="alpha"),
            alpha=_need(cfg, "divergence", table, "alpha", (int, float), default=0.5),
            stabilized=_need(cfg, "divergence", table, "stabilized", bool, default=True),
            allow_extreme_alpha=_need(cfg, "divergence", table,
                                      "allow_extreme_alpha", bool, default=False))
    except ValueError as exc:
        raise ConfigError(f"divergence: {exc}")


def build_estimator(cfg: dict, section: str = "estimator") -> EstimatorConfig:
    table = cfg.get(section, {})
    try:
        return EstimatorConfig(
            n_data=_need(cfg, section, table, "n_data", int, default=10),
            t_marginal=_need(cfg, section, table, "t_marginal", int, default=50),
            u_data=_need(cfg, section, table, "u_data", int, default=1000),
            n_outer=_need(cfg, section, table, "n_outer", int, default=200),
            objective=_need(cfg, section, table, "objective", str,
                            default="lower_bound"),
            mle_mode=_need(cfg, section, table, "mle_mode", str, default="auto"),
            common_random_numbers=_need(cfg, section, table,
                                        "common_random_numbers", bool, default=True),
            outer_per_step=_need(cfg, section, table, "outer_per_step", int,
                                 default=1))
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}")


def build_constraint_fn(table: dict):
    kind = _need(None, "constraint", table, "kind", str, required=True)
    component = _need(None, "constraint", table, "component", int, default=0)
    if kind == "moment":
        exponent = _need(None, "constraint", table, "exponent", (int, float),
                         required=True)
        return moment_constraint(component, exponent)
    if kind == "rational":
        beta = _need(None, "constraint", table, "beta", (int, float), required=True)
        tau = _need(None, "constraint", table, "tau", (int, float), required=True)
        return rational_constraint(component, beta, tau)
    if kind == "tabulated":
        xs = _need(None, "constraint", table, "xs", list, required=True)
        ys = _need(None, "constraint", table, "ys", list, required=True)
        return tabulated_constraint(component, xs, ys)
    raise ConfigError(f"constraint.kind {kind!r} unknown")


def validate_config(cfg: dict) -> dict:
    """Full cross-field validation; returns the config unchanged on success."""
    model = build_model(cfg)
    seed = _need(cfg, "", cfg, "seed", int, default=0)
    build_network(cfg.get("network"), model, seed)
    if "network_unconstrained" in cfg:
        build_network(cfg["network_unconstrained"], model, seed,
                      "network_unconstrained")
    div = build_divergence(cfg)
    build_estimator(cfg)
    opt = cfg.get("optimizer", {})
    _need(cfg, "optimizer", opt, "lr", (int, float), required=True)
    _need(cfg, "optimizer", opt, "epochs", int, required=True)
    if "constraint" in cfg:
        build_constraint_fn(cfg["constraint"])
        pipeline = _need(cfg, "constraint", cfg["constraint"], "pipeline", bool,
                         default=False)
        if pipeline and div.kind != "alpha" and "alpha" not in cfg["constraint"]:
            raise ConfigError("constraint: the pipeline needs an alpha divergence "
                              "(or an explicit constraint.alpha for the constants)")
        if not pipeline and "target" not in cfg["constraint"]:
            raise ConfigError("constraint: need either pipeline = true or a target")
    if "posterior" in cfg:
        post = cfg["posterior"]
        if "data_file" not in post:
            _need(cfg, "posterior", post, "theta_true", list, required=True)
            _need(cfg, "posterior", post, "n_obs", int, required=True)
    return cfg


# ----------------------------------------------------------------------
# artifact helpers
# ----------------------------------------------------------------------


def _json_dump(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_mi_trace(path, mi_trace, constraint_trace=None, monitor_every=1) -> None:
    if constraint_trace is not None and len(constraint_trace) != len(mi_trace):
        constraint_trace = None  # traces recorded on different cadences
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["epoch", "mi_mean", "mi_lo95", "mi_hi95"]
        if constraint_trace:
            header.append("constraint_gap")
        writer.writerow(header)
        for e, est in enumerate(mi_trace):
            row = [e * monitor_every, repr(est.value), repr(est.lo95), repr(est.hi95)]
            if constraint_trace:
                row.append(repr(constraint_trace[e]))
            writer.writerow(row)


def read_mi_trace(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: float(v) for k, v in row.items()} for row in reader]


def lambda_checksum(net: PriorNetwork) -> str:
    return hashlib.sha256(net.get_params().tobytes()).hexdigest()


def compare_metrics(path_a, path_b) -> bool:
    """Byte-level equality of two metrics files, ignoring the timestamp."""
    docs = []
    for path in (path_a, path_b):
        with open(path) as fh:
            doc = json.load(fh)
        doc.pop("timestamp", None)
        docs.append(json.dumps(doc, sort_keys=True))
    return docs[0] == docs[1]


# ----------------------------------------------------------------------
# the experiment runner
# ----------------------------------------------------------------------


def _posterior_dataset(cfg, model, seed, notes):
    post = cfg["posterior"]
    if "data_file" in post:
        return model.load_csv(post["data_file"])
    theta_true = np.asarray(post["theta_true"], dtype=float)
    n_obs = post["n_obs"]
    data_seed = post.get("data_seed", seed + 1)
    data = model.sample_data(theta_true, n_obs, np.random.default_rng(data_seed))
    if post.get("require_nondegenerate", model.name == "probit") \
            and hasattr(model, "degenerate"):
        attempts = 0
        while model.degenerate(data) and attempts < 50:
            attempts += 1
            data = model.sample_data(theta_true, n_obs,
                                     np.random.default_rng(data_seed + attempts))
        if attempts:
            notes.append(f"dataset reseeded {attempts} time(s) to avoid degeneracy")
        if model.degenerate(data):
            raise RuntimeError("could not draw a non-degenerate dataset")
    return data


def _posterior_mh_config(post, net) -> MHConfig:
    total = post.get("total_iters", 100_000)
    keep = post.get("keep_last", min(50_000, total // 2))
    cov = None
    if post.get("proposal") == "softmax_centered":
        cov = softmax_latent_covariance(net.p)
    return MHConfig(total_iters=total, keep_last=keep,
                    adapt_batch=post.get("adapt_batch", 100),
                    target_accept=post.get("target_accept", 0.40),
                    init_scale=post.get("init_scale", 1.0),
                    proposal_cov=cov)


def run_experiment(cfg: dict, out_dir, seed_override=None) -> Path:
    """Execute one experiment config; returns the artifact directory.

    Partial outputs are removed if anything fails.
    """
    cfg = validate_config(cfg)
    out = Path(out_dir)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _run_experiment_inner(cfg, out, seed_override)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for name in ("manifest.json", "metrics.json", "mi_trace.csv",
                         "network.json", "network_unconstrained.json",
                         "samples.csv", "dataset.csv", "jeffreys_grid.csv"):
                (out / name).unlink(missing_ok=True)
        raise


def _run_experiment_inner(cfg, out, seed_override):
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    model = build_model(cfg)
    div = build_divergence(cfg)
    est = build_estimator(cfg)
    opt = cfg["optimizer"]
    notes, metrics, files = [], {}, {}

    constraint_cfg = cfg.get("constraint")
    pipeline_result = None
    if constraint_cfg and constraint_cfg.get("pipeline", False):
        a_fn = build_constraint_fn(constraint_cfg)
        net_con = build_network(cfg["network"], model, seed)
        uncon_table = cfg.get("network_unconstrained", cfg["network"])
        net_uncon = build_network(uncon_table, model, seed + 1,
                                  "network_unconstrained")
        opt_uncon = cfg.get("optimizer_unconstrained", opt)
        est_uncon = build_estimator(cfg, "estimator_unconstrained") \
            if "estimator_unconstrained" in cfg else est
        div_uncon = None
        if "divergence_unconstrained" in cfg:
            div_uncon = build_divergence({"divergence":
                                          cfg["divergence_unconstrained"]})
        j_density = None
        if constraint_cfg.get("constants_method") == "importance":
            if model.name != "gaussvar":
                raise ConfigError("constraint.constants_method: the importance "
                                  "route needs the known 1/theta density "
                                  "representative (gaussvar only)")
            j_density = lambda thetas: 1.0 / thetas[:, 0]
        pipeline_result = constrained_pipeline(
            model, div, a_fn, est, net_uncon, net_con,
            lr_unconstrained=opt_uncon["lr"], lr_constrained=opt["lr"],
            epochs_unconstrained=opt_uncon["epochs"],
            epochs_constrained=opt["epochs"], seed=seed,
            n_constants=constraint_cfg.get("n_constants", 200_000),
            constants_method=constraint_cfg.get("constants_method", "plugin"),
            j_density=j_density, cfg_unconstrained=est_uncon,
            div_unconstrained=div_uncon,
            constants_alpha=constraint_cfg.get("alpha"),
            eta_tilde0=constraint_cfg.get("eta_tilde0", 1.0),
            constraint_samples=opt.get("constraint_samples", 2000),
            monitor_every=opt.get("monitor_every", 1))
        result = pipeline_result.constrained
        net = result.net
        pipeline_result.net_unconstrained.save(out / "network_unconstrained.json")
        files["network_unconstrained"] = "network_unconstrained.json"
        consts = pipeline_result.constants
        metrics.update({"k_hat": consts.k_hat, "k_se": consts.k_se,
                        "c_hat": consts.c_hat, "c_se": consts.c_se,
                        "target_b": pipeline_result.target_b,
                        "constants_method": consts.method})
    else:
        net0 = build_network(cfg["network"], model, seed)
        constraints = None
        lagrangian = None
        if constraint_cfg:
            constraints = [Constraint(build_constraint_fn(constraint_cfg),
                                      constraint_cfg["target"])]
            lagrangian = LagrangianState.init(
                1, eta_tilde0=constraint_cfg.get("eta_tilde0", 1.0))
        result = train(net0, model, div, est, epochs=opt["epochs"], lr=opt["lr"],
                       constraints=constraints, lagrangian=lagrangian, seed=seed,
                       monitor_every=opt.get("monitor_every", 1),
                       constraint_samples=opt.get("constraint_samples", 2000))
        net = result.net

    net.save(out / "network.json")
    files["network"] = "network.json"
    write_mi_trace(out / "mi_trace.csv", result.mi_trace,
                   result.constraint_trace or None,
                   monitor_every=opt.get("monitor_every", 1))
    files["mi_trace"] = "mi_trace.csv"

    if result.mi_trace:
        metrics["mi_final"] = result.mi_trace[-1].value
        metrics["mi_final_se"] = result.mi_trace[-1].std_error
        if div.kind == "alpha":
            bound = 1.0 / (div.alpha * (1.0 - div.alpha))
            metrics["mi_bounds_ok"] = bool(all(
                m.value <= bound + 3.0 * m.std_error
                and m.value >= -3.0 * m.std_error for m in result.mi_trace))
    if result.multiplier_trace:
        metrics["constraint_gap"] = result.final_gap
    metrics["clamped_ratios"] = result.n_clamped

    chain = None
    data = None
    if "posterior" in cfg:
        post = cfg["posterior"]
        data = _posterior_dataset(cfg, model, seed, notes)
        model.save_csv(out / "dataset.csv", data)
        files["dataset"] = "dataset.csv"
        chain = mh_run(net, model, data, _posterior_mh_config(post, net),
                       seed=seed + 7919)
        chain.save_csv(out / "samples.csv")
        files["samples"] = "samples.csv"
        metrics["acceptance_kept"] = chain.diagnostics["acceptance_kept"]
        metrics["acceptance_adaptation"] = chain.diagnostics["acceptance_adaptation"]
        metrics["autocorr_lag10"] = chain.diagnostics["autocorr_lag10"]
        if chain.diagnostics.get("degenerate_data"):
            notes.append("posterior dataset flagged degenerate")
        notes.extend(chain.diagnostics["warnings"])

    _evaluate(cfg, model, div, net, chain, data, out, files, metrics, notes, seed)

    metrics["notes"] = notes
    metrics["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    _json_dump(out / "metrics.json", metrics)
    files["metrics"] = "metrics.json"
    manifest = {
        "config": cfg,
        "seed": seed,
        "epochs": opt["epochs"],
        "lambda_sha256": lambda_checksum(net),
        "files": files,
    }
    _json_dump(out / "manifest.json", manifest)
    return out


def _evaluate(cfg, model, div, net, chain, data, out, files, metrics, notes, seed):
    wanted = cfg.get("evaluation", {}).get("metrics", [])
    n_prior = cfg.get("evaluation", {}).get("n_prior_samples", 20_000)

    if "mmd_prior" in wanted:
        prior = net.sample_prior(n_prior, seed + 13)
        ref = _prior_reference_samples(model, n_prior, seed + 14)
        if ref is None:
            notes.append("no exact prior reference for this model; skipped mmd_prior")
        else:
            res = ev.mmd2_unbiased(prior, ref)
            metrics["mmd2_prior"] = res.mmd2
            metrics["mmd2_prior_negative"] = res.negative
            metrics["mmd2_prior_null_scale"] = ev.mmd2_null_scale(
                prior, ref, seed=seed + 15)

    if "mmd_posterior" in wanted and chain is not None:
        ref = _posterior_reference_samples(model, data, chain.theta.shape[0],
                                           seed + 16)
        if ref is None:
            notes.append("no exact posterior reference; skipped mmd_posterior")
        else:
            res = ev.mmd2_unbiased(chain.theta, ref)
            metrics["mmd2_posterior"] = res.mmd2
            metrics["mmd2_posterior_negative"] = res.negative
            metrics["mmd2_posterior_null_scale"] = ev.mmd2_null_scale(
                chain.theta, ref, seed=seed + 17)

    if "ks_posterior" in wanted and chain is not None and model.name == "gaussvar":
        suff = model.suff(data)
        ref = ev.inverse_gamma(suff[1] / 2.0, suff[0] / 2.0)
        metrics["ks_posterior"] = ev.ks_distance(chain.theta[:, 0], ref.cdf)

    if "ks_prior_constrained" in wanted and model.name == "gaussvar":
        prior = net.sample_prior(n_prior, seed + 18)[:, 0]
        target = ev.GaussVarConstrainedPrior()
        metrics["ks_prior_constrained"] = ev.ks_distance(prior, target.cdf)

    if "probit_reference" in wanted and model.name == "probit":
        grid = probit_jeffreys_grid(model)
        grid.save_csv(out / "jeffreys_grid.csv")
        files["jeffreys_grid"] = "jeffreys_grid.csv"
        low, high = grid.tail_slopes()
        metrics["jeffreys_slope_low"] = low
        metrics["jeffreys_slope_high"] = high
        metrics["jeffreys_refine_flags"] = int(grid.refine_flags.sum())
        if chain is not None:
            tilt = cfg.get("constraint")
            if tilt and tilt.get("kind") == "moment":
                alpha = tilt.get("alpha", div.alpha if div.kind == "alpha" else None)
                if alpha is None:
                    raise ConfigError("constraint: need an alpha to tilt the "
                                      "reference density")
                grid = _tilted_grid(grid, tilt["component"],
                                    tilt["exponent"] / alpha)
            post = cfg["posterior"]
            ref_cfg = MHConfig(total_iters=post.get("total_iters", 50_000),
                               keep_last=post.get("keep_last", 25_000))
            ref_samples, ref_diag = mh_theta_reference(grid, model, data,
                                                       ref_cfg, seed + 19)
            n_cmp = min(5000, chain.theta.shape[0], ref_samples.shape[0])
            fit = chain.theta[-n_cmp:]
            ref_take = ref_samples[-n_cmp:]
            res = ev.mmd2_unbiased(fit, ref_take)
            metrics["mmd2_posterior_vs_reference"] = res.mmd2
            metrics["reference_acceptance"] = ref_diag["acceptance_kept"]
            notes.extend(ref_diag.get("warnings", []))


def _tilted_grid(grid: JeffreysGrid, component: int, power: float) -> JeffreysGrid:
    """Constrained reference: multiply the tabulated J by theta_component^power."""
    logs = (grid.log_t1, grid.log_t2)[component]
    tilt = power * logs
    density = grid.log_density + (tilt[:, None] if component == 0 else tilt[None, :])
    return JeffreysGrid(log_t1=grid.log_t1, log_t2=grid.log_t2,
                        log_density=density, refine_flags=grid.refine_flags,
                        model_params=grid.model_params)


def _prior_reference_samples(model, n, seed):
    if model.name == "multinomial":
        return ev.dirichlet_sample(np.full(model.q, 0.5), n, seed)
    return None


def _posterior_reference_samples(model, data, n, seed):
    if model.name == "multinomial":
        gamma = ev.dirichlet_posterior_gamma(np.full(model.q, 0.5),
                                             model.suff(data))
        return ev.dirichlet_sample(gamma, n, seed)
    if model.name == "gaussvar":
        suff = model.suff(data)
        dist = ev.inverse_gamma(suff[1] / 2.0, suff[0] / 2.0)
        return dist.rvs(size=(n, 1), random_state=np.random.default_rng(seed))
    return None
