"""Affine plus Gaussian-RBF transport maps and their composition.

A single map sends ``x`` in ``R^D`` to::

    M(x) = A x + b + V k(x),   k_r(x) = exp(-|x - c_r|^2 / (2 s_r^2))

Only ``A``, ``b`` and ``V`` are free parameters. They are packed into one flat
vector in the order ``A`` (row-major), ``b``, ``V`` (row-major); the kernel
centers ``c_r`` and widths ``s_r`` stay fixed once a map is built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: smallest kernel width handed out by :func:`default_geometry`
MIN_WIDTH = 1e-6


def _frozen(a, shape=None) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RbfMap:
    affine_matrix: np.ndarray
    affine_offset: np.ndarray
    rbf_weights: np.ndarray
    rbf_centers: np.ndarray
    rbf_widths: np.ndarray

    def __post_init__(self) -> None:
        A = _frozen(self.affine_matrix)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("affine_matrix must be square")
        dim = A.shape[0]
        widths = _frozen(self.rbf_widths).reshape(-1)
        R = widths.shape[0]
        if np.any(widths <= 0) or not np.all(np.isfinite(widths)):
            raise ValueError("RBF widths must be positive")
        object.__setattr__(self, "affine_matrix", A)
        object.__setattr__(self, "affine_offset", _frozen(self.affine_offset, (dim,)))
        object.__setattr__(self, "rbf_weights", _frozen(self.rbf_weights, (dim, R)))
        object.__setattr__(self, "rbf_centers", _frozen(self.rbf_centers, (R, dim)))
        object.__setattr__(self, "rbf_widths", widths)

    @property
    def dim(self) -> int:
        return self.affine_matrix.shape[0]

    @property
    def rbf_count(self) -> int:
        return self.rbf_widths.shape[0]

    @property
    def param_count(self) -> int:
        return self.dim * self.dim + self.dim + self.dim * self.rbf_count

    def params(self) -> np.ndarray:
        return np.concatenate(
            [self.affine_matrix.ravel(), self.affine_offset, self.rbf_weights.ravel()]
        )

    def with_params(self, theta: np.ndarray) -> RbfMap:
        """Same geometry, new ``A, b, V`` taken from a packed vector."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {theta.shape}")
        D, R = self.dim, self.rbf_count
        return RbfMap(
            theta[: D * D].reshape(D, D),
            theta[D * D : D * D + D],
            theta[D * D + D :].reshape(D, R),
            self.rbf_centers,
            self.rbf_widths,
        )

    def kernels(self, xs: np.ndarray) -> np.ndarray:
        """Kernel activations, shape ``(N, R)``."""
        diff = xs[:, None, :] - self.rbf_centers[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        return np.exp(-0.5 * sq / self.rbf_widths[None, :] ** 2)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "R": self.rbf_count,
            "A": self.affine_matrix.ravel().tolist(),
            "b": self.affine_offset.tolist(),
            "V": self.rbf_weights.ravel().tolist(),
            "centers": self.rbf_centers.tolist(),
            "widths": self.rbf_widths.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RbfMap:
        D, R = int(d["dim"]), int(d["R"])
        return cls(
            np.reshape(d["A"], (D, D)),
            d["b"],
            np.reshape(d["V"], (D, R)),
            np.reshape(d["centers"], (R, D)),
            d["widths"],
        )


@dataclass(frozen=True)
class MapChain:
    """Maps applied first to last: ``M = M_K o ... o M_1``."""

    maps: tuple[RbfMap, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        maps = tuple(self.maps)
        if len({m.dim for m in maps}) > 1:
            raise ValueError("all maps in a chain must share one dimension")
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def dim(self) -> int | None:
        return self.maps[0].dim if self.maps else None

    def append(self, m: RbfMap) -> MapChain:
        return MapChain(self.maps + (m,))

    def to_json(self) -> str:
        return json.dumps({"maps": [m.to_dict() for m in self.maps]}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> MapChain:
        return cls(tuple(RbfMap.from_dict(d) for d in json.loads(text)["maps"]))


def identity_map(dim: int, rbf_centers=None, rbf_widths=None) -> RbfMap:
    """``A = I``, ``b = 0``, ``V = 0`` on the given kernel geometry."""
    centers = np.zeros((0, dim)) if rbf_centers is None else np.asarray(rbf_centers, float)
    widths = np.zeros(0) if rbf_widths is None else np.asarray(rbf_widths, float)
    centers = centers.reshape(-1, dim)
    return RbfMap(np.eye(dim), np.zeros(dim), np.zeros((dim, widths.size)), centers, widths)


def default_geometry(locations: np.ndarray, rbf_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Kernel centers and widths derived from a particle cloud.

    Centers are every ``ceil(L/R)``-th particle after sorting by the first
    coordinate; all kernels share the median pairwise distance as width.
    """
    x = np.asarray(locations, dtype=float)
    L = x.shape[0]
    R = min(L, rbf_count)
    if R == 0:
        return np.zeros((0, x.shape[1])), np.zeros(0)
    order = np.argsort(x[:, 0], kind="stable")
    step = math.ceil(L / R)
    centers = x[order[::step]][:R]
    if L > 1:
        iu = np.triu_indices(L, k=1)
        dist = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))[iu]
        width = float(np.median(dist))
    else:
        width = 1.0
    width = max(width, MIN_WIDTH)
    return centers, np.full(centers.shape[0], width)


def _as_points(xs, dim: int) -> np.ndarray:
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1 and dim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have dimension {dim}")
    return pts


def apply_map_batch(m: RbfMap, xs) -> np.ndarray:
    """Evaluate the map row by row; returns an ``(N, D)`` array."""
    pts = _as_points(xs, m.dim)
    # elementwise products summed over the trailing axis keep each row's
    # result independent of how many rows are passed in
    out = np.sum(pts[:, None, :] * m.affine_matrix[None, :, :], axis=-1) + m.affine_offset
    if m.rbf_count:
        k = m.kernels(pts)
        out = out + np.sum(k[:, None, :] * m.rbf_weights[None, :, :], axis=-1)
    return out


def apply_map(m: RbfMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != m.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, map expects {m.dim}")
    return apply_map_batch(m, x[None, :])[0]


def map_param_gradient(m: RbfMap, xs, upstream) -> np.ndarray:
    """Pull per-point output gradients back onto the packed parameters."""
    pts = _as_points(xs, m.dim)
    up = np.asarray(upstream, dtype=float).reshape(-1, m.dim)
    if up.shape[0] != pts.shape[0]:
        raise ValueError(f"{pts.shape[0]} points but {up.shape[0]} upstream gradients")
    g_A = up.T @ pts
    g_b = np.sum(up, axis=0)
    g_V = up.T @ m.kernels(pts) if m.rbf_count else np.zeros((m.dim, 0))
    return np.concatenate([g_A.ravel(), g_b, g_V.ravel()])


def compose_batch(chain: MapChain, xs) -> np.ndarray:
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    for m in chain.maps:
        pts = apply_map_batch(m, pts)
    return pts


def compose(chain: MapChain, x) -> np.ndarray:
    """Push one point through every map of the chain, first map first."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return compose_batch(chain, x[None, :])[0]


def upsample(chain: MapChain, extra_points: Sequence | np.ndarray) -> np.ndarray:
    """Carry additional prior-space points through the composed flow."""
    pts = np.asarray(extra_points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if chain.dim is not None and pts.shape[1] != chain.dim:
        raise ValueError(f"points must have dimension {chain.dim}")
    return compose_batch(chain, pts)
