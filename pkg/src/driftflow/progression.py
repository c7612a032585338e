"""Progressive Bayes flow.

The likelihood is applied as a product of tempered factors ``lik ** dgamma_k``
with exponents summing to one. After each factor the reweighted set is
replaced by an equally weighted one: an affine+RBF map is fitted so that the
mapped particles, at weight ``1/L`` each, are CvM-close to the reweighted set.
The fitted maps are collected into a :class:`MapChain`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from driftflow.distance import CvmConfig, cvm_distance, cvm_gradient, self_term
from driftflow.models import Likelihood
from driftflow.optimizer import BfgsSettings, ObjectiveHandle, minimize
from driftflow.particles import (
    ParticleSet,
    bayes_reweight,
    effective_sample_size,
    make_equal_weight,
)
from driftflow.transport_map import (
    MapChain,
    RbfMap,
    apply_map_batch,
    default_geometry,
    identity_map,
    map_param_gradient,
)

log = logging.getLogger(__name__)

BISECTION_STEPS = 20


@dataclass(frozen=True)
class ProgressionSettings:
    ess_floor: float = 0.5
    min_dgamma: float = 1e-3
    max_substeps: int = 64
    cvm: CvmConfig = field(default_factory=CvmConfig)
    bfgs: BfgsSettings = field(default_factory=BfgsSettings)
    rbf_count: int = 8

    def __post_init__(self) -> None:
        if not 0 < self.ess_floor <= 1:
            raise ValueError("ess_floor must lie in (0, 1]")
        if not 0 < self.min_dgamma <= 1:
            raise ValueError("min_dgamma must lie in (0, 1]")
        if self.max_substeps < 1 or self.rbf_count < 0:
            raise ValueError("max_substeps must be positive and rbf_count nonnegative")


@dataclass
class SubstepRecord:
    dgamma: float
    gamma: float
    ess_before_resample: float
    distance_initial: float
    distance_final: float
    bfgs_iters: int
    converged: bool
    monotone_descent: bool
    degenerate: bool = False
    fallback_identity: bool = False
    message: str = ""


@dataclass
class FlowReport:
    substeps: list[SubstepRecord] = field(default_factory=list)
    completed: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.substeps)

    @property
    def gamma(self) -> float:
        return self.substeps[-1].gamma if self.substeps else 0.0

    @property
    def degenerate(self) -> bool:
        return any(s.degenerate for s in self.substeps)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "gamma": self.gamma,
            "completed": self.completed,
            "warnings": list(self.warnings),
            "substeps": [asdict(s) for s in self.substeps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _ess_ratio(pset: ParticleSet, lik: Likelihood, dgamma: float) -> float:
    return effective_sample_size(bayes_reweight(pset, lik, dgamma)) / pset.count


def next_dgamma(pset: ParticleSet, lik: Likelihood, gamma_done: float, settings: ProgressionSettings) -> float:
    """Largest tempering increment that keeps ESS/L at or above the floor.

    Falls back to ``min_dgamma`` when even that step drops below the floor;
    the caller detects this by recomputing the ESS.
    """
    if not 0.0 <= gamma_done < 1.0:
        raise ValueError("gamma_done must lie in [0, 1)")
    remaining = 1.0 - gamma_done
    if remaining <= settings.min_dgamma:
        return remaining
    floor = settings.ess_floor
    if _ess_ratio(pset, lik, remaining) >= floor:
        return remaining
    lo, hi = settings.min_dgamma, remaining
    if _ess_ratio(pset, lik, lo) < floor:
        return lo
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _ess_ratio(pset, lik, mid) >= floor:
            lo = mid
        else:
            hi = mid
    return lo


def _fit_objective(template: RbfMap, current: np.ndarray, target: ParticleSet, cfg: CvmConfig):
    # The closed form is a distance only while the means stay close; once the
    # full value D_yy + D turns negative the expression is unbounded below.
    # Such trial points are reported as non-finite so the line search backs off.
    lower_bound = -self_term(target, cfg)

    def evaluate(theta):
        m = template.with_params(theta)
        moved = make_equal_weight(apply_map_batch(m, current))
        value = cvm_distance(moved, target, cfg)
        if not value >= lower_bound:
            return np.inf, np.zeros(template.param_count)
        upstream = cvm_gradient(moved, target, cfg)
        return value, map_param_gradient(m, current, upstream)

    return ObjectiveHandle(evaluate, template.param_count)


def fit_resampling_map(
    current: ParticleSet, target: ParticleSet, settings: ProgressionSettings
) -> tuple[RbfMap, SubstepRecord]:
    """Fit one sub-step map from the equal-weight ``current`` set to ``target``.

    ``target`` carries the reweighted masses at the unmapped locations.
    """
    cfg = CvmConfig(settings.cvm.mean_penalty_weight, False, settings.cvm.log_floor)
    centers, widths = default_geometry(current.locations, settings.rbf_count)
    start = identity_map(current.dim, centers, widths)
    obj = _fit_objective(start, current.locations, target, cfg)
    res = minimize(obj, start.params(), settings.bfgs)
    d0 = res.history[0]
    fallback = res.value >= d0 and not res.converged
    fitted = start if fallback else start.with_params(res.x)
    record = SubstepRecord(
        dgamma=0.0,
        gamma=0.0,
        ess_before_resample=effective_sample_size(target),
        distance_initial=d0,
        distance_final=d0 if fallback else res.value,
        bfgs_iters=res.iters,
        converged=res.converged,
        monotone_descent=res.monotone,
        fallback_identity=fallback,
        message=res.message,
    )
    return fitted, record


def flow_update(
    prior: ParticleSet, lik: Likelihood, settings: ProgressionSettings = ProgressionSettings()
) -> tuple[ParticleSet, MapChain, FlowReport]:
    """Move equally weighted prior particles to equally weighted posterior ones.

    Returns the posterior set, the chain of fitted maps and a per-step report.
    ``compose_batch(chain, prior.locations)`` reproduces the posterior
    locations exactly.
    """
    if not prior.is_equal_weight():
        raise ValueError("the prior must be equally weighted")
    current = prior
    chain = MapChain()
    report = FlowReport()
    gamma_done = 0.0

    while gamma_done < 1.0:
        if report.K >= settings.max_substeps:
            report.warnings.append(
                f"max_substeps={settings.max_substeps} exhausted at gamma={gamma_done:.6g}"
            )
            log.warning(report.warnings[-1])
            return current, chain, report

        dgamma = next_dgamma(current, lik, gamma_done, settings)
        target = bayes_reweight(current, lik, dgamma)
        m, rec = fit_resampling_map(current, target, settings)

        gamma_done = 1.0 if dgamma == 1.0 - gamma_done else gamma_done + dgamma
        rec.dgamma = dgamma
        rec.gamma = gamma_done
        if rec.ess_before_resample < settings.ess_floor * current.count:
            rec.degenerate = True
            report.warnings.append(
                f"step {report.K + 1}: ESS {rec.ess_before_resample:.3g} below floor"
                f" even at dgamma={dgamma:.3g} (degeneration)"
            )
            log.warning(report.warnings[-1])
        if rec.fallback_identity:
            report.warnings.append(
                f"step {report.K + 1}: map fit made no progress ({rec.message}); identity map kept"
            )
            log.warning(report.warnings[-1])
        report.substeps.append(rec)

        chain = chain.append(m)
        current = make_equal_weight(apply_map_batch(m, current.locations))

    report.completed = True
    return current, chain, report
