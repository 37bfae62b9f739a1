"""Variational approximation of objective priors via neural-network
pushforwards, with constrained variants, latent-space MCMC posterior sampling,
and validation against exact or numerically integrated references."""

from .divergences import DivergenceSpec, F_term, alpha_divergence, f_prime, f_value, kl, mi_upper_bound
from .evaluation import (EcdfCurve, Mmd2Result, ecdf, ecdf_envelope, ks_distance,
                         mean_norm_error, mmd2_null_scale, mmd2_unbiased)
from .mcmc import (Chain, MHConfig, accept_probability, adapt_proposal,
                   autocorrelation, log_target_eps, mh_run, run_random_walk,
                   softmax_latent_covariance)
from .models import (BernoulliToy, DomainError, GaussVariance, Model,
                     Multinomial, Probit, make_model)
from .objectives import (EstimatorConfig, GradEstimate, MIEstimate,
                         estimate_lower_bound, estimate_marginal, estimate_mi,
                         grad_full_mi, grad_lower_bound, mle_proxy)
from .optimizer import (AdamState, Constraint, ConstraintFunction,
                        LagrangianState, NonIntegrableError, PipelineResult,
                        TrainingError, TrainResult, adam_step, constrained_pipeline,
                        estimate_constants, estimate_constraint,
                        lagrangian_gradient, moment_constraint,
                        rational_constraint, tabulated_constraint, train,
                        update_multipliers)
from .pushforward import (LogNormalMarginal, PriorNetwork, SoftplusNormalMarginal,
                          analytic_marginal, marginal_density, sample_latent)

__version__ = "0.1.0"
