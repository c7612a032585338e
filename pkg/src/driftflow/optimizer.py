"""BFGS with a backtracking Armijo line search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import math

import numpy as np

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

MAX_BACKTRACKS = 40
CURVATURE_EPS = 1e-10


@dataclass(frozen=True)
class BfgsSettings:
    grad_tol: float = 1e-6
    max_iters: int = 200
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    #: cap on the Euclidean length of each trial step
    max_step: float = math.inf

    def __post_init__(self) -> None:
        if self.grad_tol <= 0 or self.max_iters < 1 or self.initial_step <= 0 or self.max_step <= 0:
            raise ValueError("grad_tol, max_iters and initial_step must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass
class BfgsResult:
    x: np.ndarray
    value: float
    iters: int
    converged: bool
    message: str = ""
    #: objective value at the start and after every accepted step
    history: list[float] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.history, self.history[1:]))


@dataclass(frozen=True)
class ObjectiveHandle:
    """A value-and-gradient callable over ``dim`` parameters."""

    eval: Objective
    dim: int

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = self.eval(theta)
        grad = np.asarray(grad, dtype=float)
        if grad.shape != (self.dim,):
            raise ValueError(f"gradient has shape {grad.shape}, expected ({self.dim},)")
        return float(value), grad


def _finite(value: float, grad: np.ndarray) -> bool:
    return bool(np.isfinite(value) and np.all(np.isfinite(grad)))


def minimize(obj: ObjectiveHandle | Objective, start, settings: BfgsSettings = BfgsSettings()) -> BfgsResult:
    """Minimize ``obj`` from ``start``.

    The returned value never exceeds the value at ``start``. Line-search
    failures and non-finite evaluations stop the run with ``converged=False``
    and hand back the best iterate seen.
    """
    x = np.array(start, dtype=float, copy=True)
    if not isinstance(obj, ObjectiveHandle):
        obj = ObjectiveHandle(obj, x.shape[0])
    if x.shape != (obj.dim,):
        raise ValueError(f"start has shape {x.shape}, expected ({obj.dim},)")

    f, g = obj(x)
    if not _finite(f, g):
        raise ValueError("objective is not finite at the starting point")
    history = [f]
    if np.max(np.abs(g), initial=0.0) <= settings.grad_tol:
        return BfgsResult(x, f, 0, True, "gradient below tolerance at start", history)

    n = x.shape[0]
    H = np.eye(n)
    for it in range(1, settings.max_iters + 1):
        p = -H @ g
        cap = settings.max_step if it > 1 else min(1.0, settings.max_step)
        p_norm = float(np.linalg.norm(p))
        if p_norm > cap:
            p = p * (cap / p_norm)
        slope = float(g @ p)
        if slope >= 0:
            # lost positive definiteness numerically; fall back to steepest descent
            H = np.eye(n)
            p = -g
            slope = float(g @ p)

        t = settings.initial_step
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + t * p
            f_new, g_new = obj(x_new)
            if _finite(f_new, g_new) and f_new <= f + settings.armijo_c1 * t * slope:
                accepted = True
                break
            t *= settings.backtrack_factor
        if not accepted:
            return BfgsResult(x, f, it - 1, False, "line search found no decrease", history)

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                H = (sy / float(y @ y)) * np.eye(n)
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )

        stalled = f_new >= f
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if np.max(np.abs(g)) <= settings.grad_tol:
            return BfgsResult(x, f, it, True, "gradient below tolerance", history)
        if stalled:
            return BfgsResult(x, f, it, False, "objective stalled at rounding level", history)

    return BfgsResult(x, f, settings.max_iters, False, "iteration budget exhausted", history)
