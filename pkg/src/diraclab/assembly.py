"""Discrete Dirac operators and weighted mass matrices.

Clifford convention: gamma(e_j) = -i sigma_j, so gamma_j gamma_k + gamma_k gamma_j = -2 delta_jk
and D = sum_j gamma(e_j) d_j = sum_j sigma_j (-i d_j), which is Hermitian.

Periodic geometries use exact Fourier differentiation on the (possibly shifted)
lattice. The chiral interval [0, L] is folded onto an antiperiodic circle of
length 2L: with u_pm = (1, pm 1)/sqrt(2) the eigenvectors of sigma_1,

    psi(x) = F(x) u_+ - i s F(2L - x) u_-

satisfies the chiral boundary condition at both ends for every antiperiodic F,
and D psi corresponds to -i F'. The map F -> psi is unitary on the grid, so the
reduced operator stays exactly Hermitian and spectrally accurate.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .domain import CIRCLE, INTERVAL, TORUS, Geometry, Grid, as_field
from .errors import ConfigurationError, DomainError, ShapeError
from .weights import WeightField, validate_spd

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


def clifford_generators(dim: int = 2) -> list[np.ndarray]:
    """gamma(e_j) = -i sigma_j for j < dim."""
    return [-1j * s for s in (SIGMA1, SIGMA2)[:dim]]


def chirality_operator(sign: int = 1) -> np.ndarray:
    return sign * SIGMA3


def chiral_projector(sign: int, inward_normal: float) -> np.ndarray:
    """B+ = (Id - gamma(n) G) / 2 for the normal n = inward_normal * e_1."""
    gamma_n = inward_normal * clifford_generators(1)[0]
    return 0.5 * (np.eye(2) - gamma_n @ chirality_operator(sign))


def wavenumbers(n: int, length: float, twist: float = 0.0) -> np.ndarray:
    """(j + twist) 2 pi / L for j = -n/2 .. n/2 - 1."""
    return (np.arange(-n // 2, n // 2) + twist) * 2 * math.pi / length


def fourier_derivative(n: int, length: float, twist: float = 0.0, points=None) -> np.ndarray:
    """Dense matrix of -i d/dx on n equispaced samples of a twisted periodic function."""
    if points is None:
        points = np.arange(n) * length / n
    kappa = wavenumbers(n, length, twist)
    V = np.exp(1j * np.outer(points, kappa)) / math.sqrt(n)
    K = (V * kappa) @ V.conj().T
    return 0.5 * (K + K.conj().T)


def reflection_map(n: int, sign: int) -> np.ndarray:
    """Unitary T with psi = T F, F sampled at y_j = (j + 1/2) L / n on [0, 2L)."""
    up = np.array([1, 1], dtype=complex) / math.sqrt(2)
    um = np.array([1, -1], dtype=complex) / math.sqrt(2)
    T = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        T[2 * i:2 * i + 2, i] = up
        T[2 * i:2 * i + 2, 2 * n - 1 - i] = -1j * sign * um
    return T


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Discrete Dirac operator on the active degrees of freedom.

    ``action`` maps nodal values to nodal values; ``matrix`` is its Galerkin form
    diag(quad) @ action, the left-hand side of D phi = lambda M_A phi.
    """

    geometry: Geometry
    grid: Grid = field(repr=False)
    action: np.ndarray = field(repr=False)
    basis_map: np.ndarray = field(repr=False)
    kappa_max: float
    lift: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_dof(self) -> int:
        return self.action.shape[0]

    @cached_property
    def quad(self) -> np.ndarray:
        return np.repeat(self.grid.quad_weights, self.grid.fiber_dim)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.quad[:, None] * self.action

    @cached_property
    def hermitian_residual(self) -> float:
        A = self.matrix
        return float(np.linalg.norm(A - A.conj().T) / np.linalg.norm(A))

    @cached_property
    def h1_metric(self) -> np.ndarray:
        """Gram matrix of <f, g> + <Df, Dg>."""
        D = self.action
        G = np.diag(self.quad).astype(complex) + D.conj().T @ (self.quad[:, None] * D)
        return 0.5 * (G + G.conj().T)

    @cached_property
    def h1_factor(self) -> np.ndarray:
        """Upper Cholesky factor R with h1_metric = R^H R."""
        return sla.cholesky(self.h1_metric, lower=False)

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=complex)
        if f.ndim == 2 and f.shape[0] == self.n_dof and f.shape[1] != self.grid.fiber_dim:
            return self.action @ f  # batch of flat vectors
        vec = as_field(f, self.grid).reshape(-1)
        return (self.action @ vec).reshape(self.grid.n_points, self.grid.fiber_dim)

    def boundary_values(self, f) -> tuple[np.ndarray, np.ndarray]:
        """Trigonometric interpolant of an interval field at x = 0 and x = L."""
        if self.geometry.variant != INTERVAL:
            raise ConfigurationError("boundary values only exist on the interval")
        n = self.geometry.resolution
        L = self.geometry.lengths[0]
        F = self.lift.conj().T @ as_field(f, self.grid).reshape(-1)
        y = (np.arange(2 * n) + 0.5) * L / n
        kappa = wavenumbers(2 * n, 2 * L, 0.5)
        coef = np.exp(-1j * np.outer(kappa, y)) @ F / (2 * n)
        F0, FL, F2L = (np.exp(1j * kappa * t) @ coef for t in (0.0, L, 2 * L))
        up = np.array([1, 1]) / math.sqrt(2)
        um = np.array([1, -1]) / math.sqrt(2)
        s = self.geometry.chirality_sign
        return F0 * up - 1j * s * F2L * um, FL * up - 1j * s * FL * um


def assemble_dirac(geometry: Geometry, grid: Grid) -> OperatorMatrix:
    if grid.geometry != geometry:
        raise ShapeError("grid was built from a different geometry")
    N = geometry.resolution
    lift = None
    if geometry.variant == CIRCLE:
        L, = geometry.lengths
        D = fourier_derivative(N, L, geometry.spin_twist[0])
    elif geometry.variant == TORUS:
        (L1, L2), (t1, t2) = geometry.lengths, geometry.spin_twist
        K1 = np.kron(fourier_derivative(N, L1, t1), np.eye(N))
        K2 = np.kron(np.eye(N), fourier_derivative(N, L2, t2))
        D = np.kron(K1, SIGMA1) + np.kron(K2, SIGMA2)
    else:
        L, = geometry.lengths
        y = (np.arange(2 * N) + 0.5) * L / N
        K = fourier_derivative(2 * N, 2 * L, 0.5, points=y)
        lift = reflection_map(N, geometry.chirality_sign)
        D = lift @ K @ lift.conj().T
    D = 0.5 * (D + D.conj().T)
    D.setflags(write=False)
    return OperatorMatrix(geometry, grid, D, np.arange(grid.n_dof), geometry.kappa_max, lift)


@dataclass(frozen=True, eq=False)
class MassMatrix:
    """Block-diagonal M_A with block quad(x) W(x) per grid point."""

    weight: WeightField = field(repr=False)
    grid: Grid = field(repr=False)
    blocks: np.ndarray = field(repr=False)
    basis_map: np.ndarray = field(repr=False)

    @property
    def n_dof(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    @cached_property
    def matrix(self) -> np.ndarray:
        return sla.block_diag(*self.blocks)

    @cached_property
    def cholesky_blocks(self) -> np.ndarray:
        """Lower factors L_p with blocks[p] = L_p L_p^H."""
        return np.linalg.cholesky(self.blocks)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """M_A applied to flat vectors (n_dof,) or (n_dof, r)."""
        n, d = self.blocks.shape[:2]
        v = vecs.reshape(n, d, -1)
        return np.einsum("pij,pjr->pir", self.blocks, v).reshape(vecs.shape)


def assemble_mass(W: WeightField, grid: Grid, basis_map=None) -> MassMatrix:
    if W.n_points != grid.n_points or W.fiber_dim != grid.fiber_dim:
        raise ShapeError("weight field does not live on this grid")
    report = validate_spd(W)
    if not report.ok:
        raise DomainError(f"mass matrix needs an SPD weight (min eigenvalue {report.min_eig:.3e})")
    if basis_map is None:
        basis_map = np.arange(grid.n_dof)
    if len(basis_map) != grid.n_dof:
        raise ShapeError("eliminated degrees of freedom are not supported by this mass assembly")
    blocks = grid.quad_weights[:, None, None] * W.values
    blocks.setflags(write=False)
    return MassMatrix(W, grid, blocks, np.asarray(basis_map))


# -- binary dumps ---------------------------------------------------------------
#
# header, little-endian:
#   8s  magic b"DIRACLB1"
#   I   layout version (1)
#   I   kind (0 = matrix, 1 = eigenvector columns)
#   32s sha256 of the geometry description
#   32s sha256 of the weight values (zeros when not applicable)
#   Q   rows
#   Q   cols
# then, for kind 1, cols int64 signed indices k
# then rows * cols complex128 values in row-major order (real, imag interleaved).

MAGIC = b"DIRACLB1"
_HEADER = struct.Struct("<8sII32s32sQQ")


def write_dump(path, values, geometry: Geometry, weight: WeightField | None = None,
               indices=None):
    values = np.ascontiguousarray(np.atleast_2d(values), dtype="<c16")
    kind = 0 if indices is None else 1
    whash = bytes.fromhex(weight.digest()) if weight is not None else bytes(32)
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, 1, kind, bytes.fromhex(geometry.digest()), whash, rows, cols))
        if kind:
            idx = np.asarray(indices, dtype="<i8")
            if idx.shape != (cols,):
                raise ShapeError("one index per eigenvector column is required")
            fh.write(idx.tobytes())
        fh.write(values.tobytes())


def read_dump(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, kind, ghash, whash, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != 1:
        raise ConfigurationError(f"{path} is not a diraclab dump")
    off = _HEADER.size
    indices = None
    if kind == 1:
        indices = np.frombuffer(blob, dtype="<i8", count=cols, offset=off).astype(np.int64)
        off += 8 * cols
    values = np.frombuffer(blob, dtype="<c16", count=rows * cols, offset=off).reshape(rows, cols)
    return {"geometry_sha256": ghash.hex(), "weight_sha256": whash.hex(),
            "indices": indices, "values": values.astype(complex)}


def matrix_digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()
