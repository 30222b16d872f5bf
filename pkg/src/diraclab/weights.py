"""Weight endomorphisms A, their algebra, and weakly convergent weight families."""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .domain import CIRCLE, INTERVAL, TORUS, Geometry, Grid, build_grid
from .errors import ConfigurationError, DomainError, ShapeError

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightField:
    """Pointwise Hermitian matrices of shape ``(n_points, fiber_dim, fiber_dim)``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ShapeError(f"weight values must be (n, d, d), got {v.shape}")
        scale = np.linalg.norm(v, axis=(1, 2))
        skew = np.linalg.norm(v - np.conj(np.swapaxes(v, 1, 2)), axis=(1, 2))
        if np.any(skew > HERMITIAN_TOL * np.maximum(scale, 1e-300)):
            raise DomainError("weight is not Hermitian at every grid point")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def scalar(cls, rho, fiber_dim: int = 1) -> "WeightField":
        rho = np.asarray(rho, dtype=float)
        return cls(rho[:, None, None] * np.eye(fiber_dim)[None])

    @classmethod
    def identity(cls, grid: Grid) -> "WeightField":
        return cls.scalar(np.ones(grid.n_points), grid.fiber_dim)

    @classmethod
    def constant(cls, matrix, grid: Grid) -> "WeightField":
        m = np.atleast_2d(np.asarray(matrix, dtype=complex))
        if m.shape != (grid.fiber_dim, grid.fiber_dim):
            raise ShapeError("constant weight has the wrong fiber size")
        return cls(np.broadcast_to(m, (grid.n_points,) + m.shape).copy())

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @cached_property
    def pointwise_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)

    @cached_property
    def spd_certificate(self) -> float:
        """Minimum pointwise eigenvalue."""
        return float(self.pointwise_eigenvalues.min())

    @cached_property
    def max_operator_norm(self) -> float:
        return float(np.abs(self.pointwise_eigenvalues).max())

    @cached_property
    def is_scalar(self) -> bool:
        d = self.fiber_dim
        diag = self.values[:, 0, 0]
        return bool(np.allclose(self.values, diag[:, None, None] * np.eye(d), rtol=0, atol=1e-14))

    def inverse(self) -> "WeightField":
        require_spd(self)
        return WeightField(_pointwise_power(self, -1.0))

    def __add__(self, other: "WeightField") -> "WeightField":
        _check_same_shape(self, other)
        return WeightField(self.values + other.values)

    def __sub__(self, other: "WeightField") -> "WeightField":
        _check_same_shape(self, other)
        return WeightField(self.values - other.values)

    def scaled(self, c: float) -> "WeightField":
        return WeightField(float(c) * self.values)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()


def _check_same_shape(W1: WeightField, W2: WeightField):
    if W1.values.shape != W2.values.shape:
        raise ShapeError("weights live on different grids or fibers")


def _pointwise_power(W: WeightField, power: float) -> np.ndarray:
    d, U = np.linalg.eigh(W.values)
    return np.einsum("pij,pj,pkj->pik", U, d ** power, U.conj())


@dataclass(frozen=True)
class SPDReport:
    min_eig: float
    ok: bool


def validate_spd(W: WeightField, tol: float | None = None) -> SPDReport:
    if tol is None:
        tol = 1e-10 * W.max_operator_norm
    m = W.spd_certificate
    return SPDReport(m, bool(m > tol))


def require_spd(W: WeightField):
    report = validate_spd(W)
    if not report.ok:
        raise DomainError(f"weight is not positive definite (min eigenvalue {report.min_eig:.3e})")


def sqrt_pair(W: WeightField) -> tuple[WeightField, WeightField]:
    """Symmetric positive square root and its inverse."""
    require_spd(W)
    return WeightField(_pointwise_power(W, 0.5)), WeightField(_pointwise_power(W, -0.5))


def lp_norm(W: WeightField, p: float, grid: Grid) -> float:
    """(sum_x w(x) |W(x)|_op^p)^(1/p)."""
    if not p >= 1:
        raise ConfigurationError(f"L^p norm needs p >= 1, got {p}")
    if W.n_points != grid.n_points:
        raise ShapeError("weight field does not live on this grid")
    op = np.linalg.norm(W.values, ord=2, axis=(1, 2))
    return float(np.sum(grid.quad_weights * op ** p) ** (1.0 / p))


class Ordering(str, enum.Enum):
    GE = "GE"
    LE = "LE"
    EQ = "EQ"
    INCOMPARABLE = "INCOMPARABLE"


def loewner_compare(W1: WeightField, W2: WeightField, tol: float | None = None) -> Ordering:
    _check_same_shape(W1, W2)
    if tol is None:
        tol = 1e-12 * max(W1.max_operator_norm, W2.max_operator_norm)
    ev = np.linalg.eigvalsh(W1.values - W2.values)
    ge = ev.min() >= -tol
    le = ev.max() <= tol
    if ge and le:
        return Ordering.EQ
    if ge:
        return Ordering.GE
    if le:
        return Ordering.LE
    return Ordering.INCOMPARABLE


# -- coordinates used by weight profiles and families -----------------------

def base_frequency(geometry: Geometry) -> tuple[float, ...]:
    """Angular frequency of mode number 1 along each axis."""
    if geometry.variant == INTERVAL:
        return (math.pi / geometry.lengths[0],)
    return tuple(2 * math.pi / L for L in geometry.lengths)


def phase_coordinate(grid: Grid, direction=None) -> np.ndarray:
    """phi(x) = sum_j d_j * omega_j * x_j, the argument of mode number 1."""
    omega = base_frequency(grid.geometry)
    if direction is None:
        direction = (1,) + (0,) * (len(omega) - 1)
    if len(direction) != len(omega):
        raise ConfigurationError("direction must have one entry per axis")
    return sum(d * w * grid.points[:, j] for j, (d, w) in enumerate(zip(direction, omega)))


def angle_coordinate(grid: Grid) -> np.ndarray:
    """theta = 2 pi x_1 / L_1, used by closed-form scalar profiles."""
    return 2 * math.pi * grid.points[:, 0] / grid.geometry.lengths[0]


def smooth_base(grid: Grid) -> WeightField:
    """A fixed non-constant SPD field (min eigenvalue >= 1/2)."""
    phi = phase_coordinate(grid)
    if grid.fiber_dim == 1:
        return WeightField.scalar(1 + 0.3 * np.sin(phi))
    v = np.zeros((grid.n_points, 2, 2), dtype=complex)
    v[:, 0, 0] = 1 + 0.3 * np.sin(phi)
    v[:, 1, 1] = 1 + 0.3 * np.cos(phi)
    v[:, 0, 1] = 0.2 * np.exp(1j * phi)
    v[:, 1, 0] = 0.2 * np.exp(-1j * phi)
    return WeightField(v)


def _modes(geometry: Geometry, degree: int):
    rng1 = range(-degree, degree + 1)
    if geometry.dim == 1:
        return [(n,) for n in rng1]
    return [(a, b) for a in rng1 for b in rng1]


def random_hermitian_field(grid: Grid, rng: np.random.Generator, degree: int = 2) -> np.ndarray:
    """Smooth random Hermitian field, a trigonometric polynomial of low degree,
    normalized to max pointwise operator norm 1."""
    d = grid.fiber_dim
    omega = base_frequency(grid.geometry)
    total = np.zeros((grid.n_points, d, d), dtype=complex)
    for mode in _modes(grid.geometry, degree):
        if any(mode) and mode < tuple(-v for v in mode):
            continue  # each +/- pair once
        H = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        phase = sum(n * w * grid.points[:, j] for j, (n, w) in enumerate(zip(mode, omega)))
        e = np.exp(1j * phase)[:, None, None]
        if not any(mode):
            total += (H + H.conj().T)[None] * np.ones_like(e)
        else:
            total += H[None] * e + H.conj().T[None] * e.conj()
    if d == 1:
        total = total.real.astype(complex)
    total /= np.linalg.norm(total, ord=2, axis=(1, 2)).max()
    return total


def random_vector_field(grid: Grid, rng: np.random.Generator, degree: int = 2) -> np.ndarray:
    d = grid.fiber_dim
    omega = base_frequency(grid.geometry)
    total = np.zeros((grid.n_points, d), dtype=complex)
    for mode in _modes(grid.geometry, degree):
        c = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        phase = sum(n * w * grid.points[:, j] for j, (n, w) in enumerate(zip(mode, omega)))
        total += c[None] * np.exp(1j * phase)[:, None]
    if d == 1:
        total = total.real.astype(complex)
    return total / np.abs(total).max()


def random_spd_weight(grid: Grid, rng: np.random.Generator, degree: int = 2) -> WeightField:
    """Smooth random SPD weight with pointwise spectrum in [c - 1, c + 1], c in [1.5, 3]."""
    c = rng.uniform(1.5, 3.0)
    R = random_hermitian_field(grid, rng, degree)
    return WeightField(c * np.eye(grid.fiber_dim)[None] + R)


def ordered_pair(grid: Grid, rng: np.random.Generator, degree: int = 2) -> tuple[WeightField, WeightField]:
    """(W1, W2) with W1 = W2 + v v^H >= W2 pointwise."""
    W2 = random_spd_weight(grid, rng, degree)
    v = rng.uniform(0.2, 1.5) * random_vector_field(grid, rng, degree)
    W1 = WeightField(W2.values + np.einsum("pi,pj->pij", v, v.conj()))
    return W1, W2


# -- families ----------------------------------------------------------------

FAMILY_KINDS = ("oscillatory-sine", "oscillatory-squared", "conformal-exp", "random-spd-perturbation")

FAMILY_PARAMS = {
    "oscillatory-sine": {"amplitude": 0.5, "direction": None},
    "oscillatory-squared": {"amplitude": 1.0, "direction": None},
    "conformal-exp": {"amplitude": 1.0, "base_amplitude": 0.0, "direction": None},
    "random-spd-perturbation": {"base": "identity", "scale": 0.5, "degree": 2, "seed": 0,
                                "resample": False},
}


@dataclass(frozen=True, eq=False)
class WeightFamily:
    kind: str
    params: dict
    geometry: Geometry
    declared_limit: WeightField = field(repr=False)
    _generator: Callable[[int], WeightField] = field(repr=False)
    max_member: int

    def member(self, m: int) -> WeightField:
        m = int(m)
        if m < 1:
            raise ConfigurationError("family members are indexed from m = 1")
        if m > self.max_member:
            raise ConfigurationError(
                f"member m={m} of {self.kind} oscillates above the Nyquist guard "
                f"(resolution {self.geometry.resolution} allows m <= {self.max_member})")
        return self._generator(m)


def make_family(kind: str, params: dict | None, geometry: Geometry) -> WeightFamily:
    """Build a built-in weight family on ``geometry``.

    oscillatory-sine         rho_m = 1 + a sin(m phi)            -> 1
    oscillatory-squared      rho_m = 1 + a sin^2(m phi)          -> 1 + a/2
    conformal-exp            A_m = exp(b sin phi + a sin(m phi)/m) Id -> exp(b sin phi) Id
    random-spd-perturbation  A_m = A + S_m / m, S_m smooth random Hermitian
                             (one draw for all m unless ``resample`` is set)
    where phi is the phase of mode number 1 (2 pi x / L, or pi x / L on the interval).
    """
    if kind not in FAMILY_KINDS:
        raise ConfigurationError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
    merged = dict(FAMILY_PARAMS[kind])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ConfigurationError(f"unknown parameter {key!r} for family {kind}")
        merged[key] = value
    grid = build_grid(geometry)
    fd = geometry.fiber_dim
    direction = merged.get("direction")
    if direction is not None:
        direction = tuple(int(v) for v in direction)
    spread = max(abs(v) for v in direction) if direction else 1
    guard = geometry.resolution / 4

    if kind == "oscillatory-sine":
        a = float(merged["amplitude"])
        if not abs(a) < 1:
            raise ConfigurationError("oscillatory-sine needs |amplitude| < 1")
        phi = phase_coordinate(grid, direction)
        limit = WeightField.scalar(np.ones(grid.n_points), fd)

        def gen(m):
            return WeightField.scalar(1 + a * np.sin(m * phi), fd)
    elif kind == "oscillatory-squared":
        a = float(merged["amplitude"])
        if not a > -1:
            raise ConfigurationError("oscillatory-squared needs amplitude > -1")
        phi = phase_coordinate(grid, direction)
        limit = WeightField.scalar(np.full(grid.n_points, 1 + a / 2), fd)
        spread *= 2  # sin^2 oscillates at twice the mode number

        def gen(m):
            return WeightField.scalar(1 + a * np.sin(m * phi) ** 2, fd)
    elif kind == "conformal-exp":
        a = float(merged["amplitude"])
        b = float(merged["base_amplitude"])
        phi = phase_coordinate(grid, direction)
        u0 = b * np.sin(phi)
        limit = WeightField.scalar(np.exp(u0), fd)

        def gen(m):
            return WeightField.scalar(np.exp(u0 + a * np.sin(m * phi) / m), fd)
    else:
        s = float(merged["scale"])
        if not 0 < s < 1:
            raise ConfigurationError("random-spd-perturbation needs 0 < scale < 1")
        degree = int(merged["degree"])
        seed = int(merged["seed"])
        if merged["base"] == "identity":
            limit = WeightField.identity(grid)
        elif merged["base"] == "smooth":
            limit = smooth_base(grid)
        else:
            raise ConfigurationError("random-spd-perturbation base must be 'identity' or 'smooth'")
        floor = limit.spd_certificate
        if degree >= guard:
            raise ConfigurationError("random perturbation degree exceeds the Nyquist guard")

        fixed = random_hermitian_field(grid, np.random.default_rng(seed), degree)
        resample = bool(merged["resample"])

        def gen(m):
            S = random_hermitian_field(grid, np.random.default_rng([seed, m]), degree) \
                if resample else fixed
            return WeightField(limit.values + (s * floor / m) * S)

        return WeightFamily(kind, merged, geometry, limit, gen, max_member=10 ** 9)

    max_member = math.ceil(guard / spread) - 1
    return WeightFamily(kind, merged, geometry, limit, gen, max_member=max_member)


def dictionary_modes(grid: Grid, size: int) -> np.ndarray:
    """Columns are the Fourier test modes with index magnitude <= size."""
    omega = base_frequency(grid.geometry)
    cols = []
    for mode in _modes(grid.geometry, size):
        phase = sum(n * w * grid.points[:, j] for j, (n, w) in enumerate(zip(mode, omega)))
        cols.append(np.exp(1j * phase))
    return np.column_stack(cols)


def weak_convergence_residual(W_m: WeightField, W_limit: WeightField, dictionary_size: int,
                              grid: Grid) -> float:
    """max |int <(W_m - W_limit) phi, eta>| over the finite test dictionary.

    This certifies weak convergence only against low-frequency test fields.
    """
    if dictionary_size < 1:
        raise ConfigurationError("dictionary_size must be >= 1")
    _check_same_shape(W_m, W_limit)
    if W_m.n_points != grid.n_points:
        raise ShapeError("weights do not live on this grid")
    E = dictionary_modes(grid, dictionary_size)
    delta = W_m.values - W_limit.values
    q = grid.quad_weights
    worst = 0.0
    d = W_m.fiber_dim
    for a in range(d):
        for b in range(d):
            # phi = e_b mode_j, eta = e_a mode_i: <dW phi, eta> = dW_ab(x) conj(mode_j) mode_i
            G = E.T @ ((q * delta[:, a, b])[:, None] * E.conj())
            worst = max(worst, float(np.abs(G).max()))
    return worst
