"""Deterministic particle flows for Bayesian measurement updates."""

from driftflow.distance import CvmConfig, cvm_distance, cvm_gradient, xlog
from driftflow.models import (
    GaussianSpec,
    Likelihood,
    cubic_likelihood,
    deterministic_gaussian_samples,
    linear_likelihood,
    quartic_likelihood,
    sir_baseline,
)
from driftflow.optimizer import BfgsSettings, minimize
from driftflow.particles import (
    ParticleSet,
    bayes_reweight,
    effective_sample_size,
    make_equal_weight,
    weighted_mean,
)
from driftflow.progression import FlowReport, ProgressionSettings, flow_update, next_dgamma
from driftflow.transport_map import MapChain, RbfMap, apply_map, compose, identity_map

__version__ = "0.1.0"
