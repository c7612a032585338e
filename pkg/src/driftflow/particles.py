"""Dirac-mixture particle sets and the Bayes reweighting step."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from driftflow.models import Likelihood

#: tempered weights below this are treated as exactly zero
WEIGHT_CLAMP = 1e-300
#: tolerance used when checking that weights are normalized
NORMALIZATION_TOL = 1e-9


class DegenerateWeightsError(ValueError):
    """Raised when every tempered likelihood value is zero."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Weighted point masses ``sum_i w_i * delta(x - x_i)``.

    Attributes
    ----------
    weights : ndarray
        Shape ``(L,)``, nonnegative.
    locations : ndarray
        Shape ``(L, D)``.
    """

    weights: np.ndarray
    locations: np.ndarray

    def __post_init__(self) -> None:
        w = _readonly(self.weights)
        x = np.array(self.locations, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        x.setflags(write=False)
        if w.ndim != 1 or x.ndim != 2:
            raise ValueError("weights must be 1-D and locations 2-D")
        if w.shape[0] == 0:
            raise ValueError("a particle set needs at least one particle")
        if w.shape[0] != x.shape[0]:
            raise ValueError(f"{w.shape[0]} weights but {x.shape[0]} locations")
        if x.shape[1] < 1:
            raise ValueError("dimension must be at least 1")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", x)

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(float(np.sum(self.weights)) - 1.0) <= tol

    def is_equal_weight(self) -> bool:
        return bool(np.all(self.weights == 1.0 / self.count))

    def to_csv(self) -> str:
        """Serialize as ``w,x1,...,xD`` rows with 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w"] + [f"x{d + 1}" for d in range(self.dim)])
        for w, x in zip(self.weights, self.locations):
            writer.writerow([f"{w:.17g}"] + [f"{v:.17g}" for v in x])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ParticleSet:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0] != "w":
            raise ValueError("CSV header must start with 'w'")
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(data[:, 0], data[:, 1:])


def make_equal_weight(locations: Sequence | np.ndarray) -> ParticleSet:
    """Equally weighted set at ``locations`` (order preserved)."""
    x = np.asarray(locations, dtype=float)
    if x.size == 0:
        raise ValueError("cannot build a particle set from no locations")
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    return ParticleSet(np.full(n, 1.0 / n), x)


def _normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all tempered likelihood values are zero")
    w = np.exp(logw - top)
    w[w < WEIGHT_CLAMP] = 0.0
    return w / np.sum(w)


def bayes_reweight(pset: ParticleSet, lik: Likelihood, gamma: float) -> ParticleSet:
    """Multiply weights by ``lik ** gamma`` and renormalize.

    The product is formed in log space, so narrow likelihoods do not underflow
    before normalization. Locations are passed through untouched.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    loglik = np.asarray(lik.log_eval(pset.locations), dtype=float)
    if loglik.shape != (pset.count,):
        raise ValueError("likelihood must return one value per particle")
    if np.any(np.isnan(loglik)) or np.any(loglik == np.inf):
        raise ValueError(f"likelihood {lik.descriptor!r} returned NaN or +inf")
    with np.errstate(divide="ignore"):
        logw = np.log(pset.weights) + gamma * loglik
    return ParticleSet(_normalize_log_weights(logw), pset.locations)


def _require_normalized(pset: ParticleSet) -> None:
    if not pset.is_normalized():
        raise ValueError("particle weights are not normalized")


def effective_sample_size(pset: ParticleSet) -> float:
    """``1 / sum(w_i^2)``; lies in ``[1, L]`` for normalized weights."""
    _require_normalized(pset)
    return float(1.0 / np.sum(pset.weights**2))


def weighted_mean(pset: ParticleSet) -> np.ndarray:
    _require_normalized(pset)
    return pset.weights @ pset.locations
