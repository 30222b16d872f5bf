"""Flat spin model geometries, their grids and discrete inner products.

Spinor fields are plain complex arrays of shape ``(n_points, fiber_dim)``.
Flattened degree-of-freedom vectors use point-major order, i.e. index
``point * fiber_dim + component``.

All sesquilinear forms are conjugate-linear in the FIRST slot:
``<f, g> = sum_x w(x) f(x)^H g(x)``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, ShapeError

CIRCLE = "circle"
INTERVAL = "interval"
TORUS = "torus"
VARIANTS = (CIRCLE, INTERVAL, TORUS)


@dataclass(frozen=True)
class Geometry:
    """A flat spin model domain.

    variant        one of ``circle`` (S^1), ``interval`` (chiral bag on [0, L])
                   or ``torus`` (flat T^2)
    lengths        (L,) or (L1, L2)
    spin_twist     per-period flag in {0, 1/2}; () for the interval
    chirality_sign +1 or -1 selects G = +sigma_3 or -sigma_3 (interval only)
    resolution     grid points per dimension, even and >= 8
    """

    variant: str
    lengths: tuple[float, ...]
    spin_twist: tuple[float, ...] = ()
    chirality_sign: int = 1
    resolution: int = 64

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown geometry variant {self.variant!r}")
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "spin_twist", tuple(float(v) for v in self.spin_twist))
        n_dims = 2 if self.variant == TORUS else 1
        if len(self.lengths) != n_dims:
            raise ConfigurationError(f"{self.variant} needs {n_dims} length(s)")
        if any(not (v > 0 and math.isfinite(v)) for v in self.lengths):
            raise ConfigurationError("lengths must be positive and finite")
        n_twists = 0 if self.variant == INTERVAL else n_dims
        if len(self.spin_twist) != n_twists:
            raise ConfigurationError(f"{self.variant} needs {n_twists} spin twist flag(s)")
        if any(t not in (0.0, 0.5) for t in self.spin_twist):
            raise ConfigurationError("spin twist flags must be 0 or 1/2")
        if self.chirality_sign not in (1, -1):
            raise ConfigurationError("chirality_sign must be +1 or -1")
        if self.variant != INTERVAL and self.chirality_sign != 1:
            raise ConfigurationError("chirality_sign only applies to the interval")
        if (not isinstance(self.resolution, (int, np.integer)) or self.resolution < 8
                or self.resolution % 2):
            raise ConfigurationError(
                f"resolution must be an even integer >= 8, got {self.resolution!r}")

    @classmethod
    def circle(cls, length: float = 2 * math.pi, resolution: int = 64,
               twist: float = 0.0) -> "Geometry":
        return cls(CIRCLE, (length,), (twist,), 1, resolution)

    @classmethod
    def interval(cls, length: float = math.pi, resolution: int = 64,
                 chirality_sign: int = 1) -> "Geometry":
        return cls(INTERVAL, (length,), (), chirality_sign, resolution)

    @classmethod
    def torus(cls, lengths=(2 * math.pi, 2 * math.pi), resolution: int = 16,
              twists=(0.0, 0.0)) -> "Geometry":
        return cls(TORUS, tuple(lengths), tuple(twists), 1, resolution)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def fiber_dim(self) -> int:
        return 1 if self.variant == CIRCLE else 2

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def kernel_dim(self) -> int:
        """Complex dimension of the space of harmonic spinors."""
        if self.variant == INTERVAL:
            return 0
        if any(self.spin_twist):
            return 0
        return self.fiber_dim

    @property
    def kappa_max(self) -> float:
        """Largest wavenumber resolved by the discretization."""
        return min(math.pi * self.resolution / L for L in self.lengths)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "lengths": list(self.lengths),
            "spin_twist": list(self.spin_twist),
            "chirality_sign": self.chirality_sign,
            "resolution": int(self.resolution),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid with equal quadrature weights."""

    geometry: Geometry
    points: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    @property
    def fiber_dim(self) -> int:
        return self.geometry.fiber_dim

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_dof(self) -> int:
        return self.n_points * self.fiber_dim

    @property
    def volume(self) -> float:
        return float(self.quad_weights.sum())

    @cached_property
    def _pair_data(self):
        geo = self.geometry
        sq = np.zeros((self.n_points, self.n_points))
        phase = np.ones((self.n_points, self.n_points), dtype=complex)
        for axis, L in enumerate(geo.lengths):
            x = self.points[:, axis]
            d = x[:, None] - x[None, :]
            if geo.variant == INTERVAL:
                sq += d ** 2
                continue
            # image of x_j closest to x_i is x_j + wraps * L
            wraps = np.rint(d / L)
            d = d - wraps * L
            sq += d ** 2
            phase *= np.exp(2j * math.pi * geo.spin_twist[axis] * wraps)
        return np.sqrt(sq), phase

    def distance(self) -> np.ndarray:
        """Geodesic distance between all pairs of grid points."""
        return self._pair_data[0]

    def transport_phase(self) -> np.ndarray:
        """Phase carrying psi(x_j) along the shortest path to x_i.

        Antiperiodic spinors pick up a sign when that path crosses the seam.
        """
        return self._pair_data[1]


def build_grid(geometry: Geometry) -> Grid:
    N = geometry.resolution
    if geometry.variant == TORUS:
        L1, L2 = geometry.lengths
        x1 = np.arange(N) * L1 / N
        x2 = np.arange(N) * L2 / N
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        points = np.column_stack([X1.ravel(), X2.ravel()])
        w = np.full(N * N, (L1 / N) * (L2 / N))
    elif geometry.variant == CIRCLE:
        L = geometry.lengths[0]
        points = (np.arange(N) * L / N)[:, None]
        w = np.full(N, L / N)
    else:
        # midpoints: the boundary itself carries no unknowns
        L = geometry.lengths[0]
        points = ((np.arange(N) + 0.5) * L / N)[:, None]
        w = np.full(N, L / N)
    return Grid(geometry, points, w)


def as_field(values, grid: Grid) -> np.ndarray:
    """Return ``values`` as an ``(n_points, fiber_dim)`` complex array."""
    arr = np.asarray(values, dtype=complex)
    if arr.shape == (grid.n_points, grid.fiber_dim):
        return arr
    if arr.shape == (grid.n_dof,):
        return arr.reshape(grid.n_points, grid.fiber_dim)
    if grid.fiber_dim == 1 and arr.shape == (grid.n_points,):
        return arr[:, None]
    raise ShapeError(f"field of shape {arr.shape} does not live on this grid "
                     f"({grid.n_points} points, fiber {grid.fiber_dim})")


def inner_l2(f, g, grid: Grid) -> complex:
    """Discrete L^2 product, conjugate-linear in ``f``."""
    f = as_field(f, grid)
    g = as_field(g, grid)
    return complex(np.sum(grid.quad_weights * np.sum(f.conj() * g, axis=1)))


def inner_a(f, g, W, grid: Grid) -> complex:
    """Weighted product sum_x w(x) <W(x) f(x), g(x)>."""
    from .weights import require_spd

    f = as_field(f, grid)
    g = as_field(g, grid)
    if W.values.shape[0] != grid.n_points or W.fiber_dim != grid.fiber_dim:
        raise ShapeError("weight field does not live on this grid")
    require_spd(W)
    Wf = np.einsum("pij,pj->pi", W.values, f)
    return complex(np.sum(grid.quad_weights * np.sum(Wf.conj() * g, axis=1)))


def norm_h1_discrete(f, D, grid: Grid) -> float:
    """sqrt(||f||^2 + ||D f||^2), the H^1 norm used for every gap measurement."""
    if D.geometry != grid.geometry:
        raise ShapeError("operator and grid come from different geometries")
    f = as_field(f, grid)
    Df = D.apply(f)
    return math.sqrt(inner_l2(f, f, grid).real + inner_l2(Df, Df, grid).real)
