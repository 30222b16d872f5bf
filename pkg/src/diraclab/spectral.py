"""Weighted eigenproblem D phi = lambda M_A phi: solve, index, cluster, project."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .assembly import MassMatrix, OperatorMatrix
from .errors import NumericError, RangeError, ShapeError, TruncationError

KERNEL_TOL = 1e-8
CLUSTER_TOL_REL = 1e-6
CLUSTER_TOL_ABS = 1e-9
WINDOW_FRACTION = 0.6


@dataclass(frozen=True)
class Cluster:
    label: int  # signed: 1, 2, ... above zero and -1, -2, ... below
    mean: float
    multiplicity: int
    indices: tuple[int, ...]  # signed eigen-indices sigma_{l-1} < |k| <= sigma_l
    complete: bool = True


@dataclass(frozen=True)
class Indexed:
    values: np.ndarray  # nonzero eigenvalues, ascending
    indices: np.ndarray  # signed index of each value
    kernel: np.ndarray  # positions of kernel eigenvalues in the raw input
    order: np.ndarray  # positions of ``values`` in the raw input
    scale: float


def index_eigenvalues(raw, kernel_tol: float = KERNEL_TOL, kernel_dim_hint=None,
                      scale: float | None = None) -> Indexed:
    """Split raw real eigenvalues into kernel and signed indices.

    Positive values ascending get k = 1, 2, ...; negative values descending get
    k = -1, -2, ....
    """
    raw = np.asarray(raw, dtype=float)
    if scale is None:
        scale = float(np.abs(raw).max()) if raw.size else 1.0
    thr = kernel_tol * scale
    mag = np.abs(raw)
    grey = (mag > thr / 10) & (mag <= thr * 10)
    if np.any(grey):
        raise NumericError(
            f"ambiguous kernel boundary: eigenvalue {raw[grey][0]:.3e} is within a factor 10 of "
            f"the kernel threshold {thr:.3e}; increase the resolution")
    ker = np.flatnonzero(mag <= thr)
    if kernel_dim_hint is not None and len(ker) != kernel_dim_hint:
        raise NumericError(
            f"found {len(ker)} kernel eigenvalues but the geometry predicts {kernel_dim_hint}")
    rest = np.flatnonzero(mag > thr)
    rest = rest[np.argsort(raw[rest], kind="stable")]
    vals = raw[rest]
    n_neg = int(np.sum(vals < 0))
    idx = np.concatenate([-np.arange(n_neg, 0, -1), np.arange(1, len(vals) - n_neg + 1)])
    return Indexed(vals, idx.astype(int), ker, rest, scale)


def cluster_distinct(values, indices, cluster_tol_rel: float = CLUSTER_TOL_REL,
                     cluster_tol_abs: float = 0.0, next_pos: float | None = None,
                     next_neg: float | None = None) -> list[Cluster]:
    """Group consecutive same-sign eigenvalues that agree within tolerance.

    ``next_pos`` / ``next_neg`` are the first eigenvalues beyond the retained
    range; a boundary cluster that would absorb them is marked incomplete.
    """
    values = np.asarray(values, dtype=float)
    indices = np.asarray(indices)

    def close(a, b):
        return abs(a - b) <= cluster_tol_abs + cluster_tol_rel * max(abs(a), abs(b))

    out = []
    for sign, beyond in ((1, next_pos), (-1, next_neg)):
        sel = np.flatnonzero(np.sign(indices) == sign)
        sel = sel[np.argsort(np.abs(indices[sel]))]
        groups = []
        for p in sel:
            if groups and close(values[groups[-1][-1]], values[p]):
                groups[-1].append(p)
            else:
                groups.append([p])
        for lab, g in enumerate(groups, start=1):
            complete = True
            if lab == len(groups):
                complete = beyond is not None and not close(values[g[-1]], beyond)
            out.append(Cluster(sign * lab, float(values[g].mean()), len(g),
                               tuple(int(indices[p]) for p in g), complete))
    out.sort(key=lambda c: c.mean)
    return out


def orthonormalize_a(vectors, M, rank_tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt in the M inner product (columns of ``vectors``)."""
    V = np.array(vectors, dtype=complex, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    Mop = M.apply if isinstance(M, MassMatrix) else (lambda x: M @ x)
    for j in range(V.shape[1]):
        v = V[:, j]
        norm0 = math.sqrt(max(np.vdot(v, Mop(v)).real, 0.0))
        for _ in range(2):  # twice is enough
            for i in range(j):
                v = v - np.vdot(V[:, i], Mop(v)) * V[:, i]
        nrm = math.sqrt(max(np.vdot(v, Mop(v)).real, 0.0))
        if norm0 == 0 or nrm <= rank_tol * norm0:
            raise NumericError(f"vector {j} is numerically dependent on the previous ones")
        V[:, j] = v / nrm
    return V


@dataclass(frozen=True, eq=False)
class WeightedSpectrum:
    D: OperatorMatrix = field(repr=False)
    M: MassMatrix = field(repr=False)
    indices: np.ndarray  # signed, ascending eigenvalue order
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)  # (n_dof, len(indices)), A-orthonormal
    kernel_basis: np.ndarray = field(repr=False)  # (n_dof, h0)
    clusters: list[Cluster]
    residuals: np.ndarray
    kernel_residuals: np.ndarray
    kernel_tol: float
    cluster_tol_rel: float
    cluster_tol_abs: float
    window: float
    reliable_k_max: int
    k_max: int

    @property
    def geometry(self):
        return self.D.geometry

    @property
    def grid(self):
        return self.D.grid

    @property
    def weight(self):
        return self.M.weight

    @property
    def h0(self) -> int:
        return self.kernel_basis.shape[1]

    @cached_property
    def _pos(self) -> dict:
        return {int(k): i for i, k in enumerate(self.indices)}

    def has(self, k: int) -> bool:
        return int(k) in self._pos

    def value(self, k: int) -> float:
        try:
            return float(self.values[self._pos[int(k)]])
        except KeyError:
            raise RangeError(f"eigen-index {k} is not retained (k_max = {self.k_max})") from None

    def vector(self, k: int) -> np.ndarray:
        if int(k) not in self._pos:
            raise RangeError(f"eigen-index {k} is not retained (k_max = {self.k_max})")
        return self.vectors[:, self._pos[int(k)]]

    def columns(self, ks) -> np.ndarray:
        return np.column_stack([self.vector(k) for k in ks]) if len(ks) else \
            np.zeros((self.D.n_dof, 0), dtype=complex)

    def field(self, k: int) -> np.ndarray:
        return self.vector(k).reshape(self.grid.n_points, self.grid.fiber_dim)

    def cluster(self, label: int) -> Cluster:
        for c in self.clusters:
            if c.label == label:
                return c
        raise RangeError(f"cluster {label} is not retained")

    def cluster_of(self, k: int) -> Cluster:
        for c in self.clusters:
            if int(k) in c.indices:
                return c
        raise RangeError(f"eigen-index {k} is not retained")

    def cluster_label(self, k: int) -> int:
        return self.cluster_of(k).label

    @cached_property
    def retained_basis(self) -> np.ndarray:
        """Kernel basis followed by all retained eigenvectors."""
        return np.hstack([self.kernel_basis, self.vectors])


def solve_weighted(D: OperatorMatrix, M: MassMatrix, k_max: int, kernel_dim_hint=None,
                   kernel_tol: float = KERNEL_TOL, cluster_tol_rel: float = CLUSTER_TOL_REL,
                   cluster_tol_abs: float | None = None,
                   window_fraction: float = WINDOW_FRACTION) -> WeightedSpectrum:
    """Eigenpairs with |k| <= k_max of D phi = lambda M_A phi via whitening M_A = L L^H."""
    n = D.n_dof
    if M.n_dof != n or M.grid.geometry != D.geometry:
        raise ShapeError("operator and mass matrix live on different spaces")
    h = 0 if kernel_dim_hint is None else int(kernel_dim_hint)
    if k_max < 1 or 2 * k_max + h > n:
        raise RangeError(f"k_max = {k_max} does not fit a problem of order {n}")
    try:
        Lb = M.cholesky_blocks
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"mass matrix factorization failed: {exc}") from None
    Linv = sla.block_diag(*np.linalg.inv(Lb))
    C = Linv @ D.matrix @ Linv.conj().T
    C = 0.5 * (C + C.conj().T)

    window = window_fraction * D.kappa_max / M.weight.max_operator_norm
    try:
        w, Y = sla.eigh(C, subset_by_value=(-window, window), driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"eigensolver failed: {exc}") from None
    Phi = Linv.conj().T @ Y

    ix = index_eigenvalues(w, kernel_tol, kernel_dim_hint, scale=float(np.abs(w).max()))
    n_pos = int(np.sum(ix.indices > 0))
    n_neg = int(np.sum(ix.indices < 0))
    reliable = min(n_pos, n_neg)
    if k_max > reliable:
        raise TruncationError(
            f"k_max = {k_max} exceeds the reliable window |lambda| < {window:.4g}, which holds "
            f"{n_pos} positive and {n_neg} negative eigenvalues", reliable)

    keep = np.abs(ix.indices) <= k_max
    vals = ix.values[keep]
    idx = ix.indices[keep]
    vecs = Phi[:, ix.order[keep]]
    kern = Phi[:, ix.kernel]

    beyond_pos = ix.values[ix.indices == k_max + 1]
    beyond_neg = ix.values[ix.indices == -(k_max + 1)]
    abs_tol = (CLUSTER_TOL_ABS if cluster_tol_abs is None else cluster_tol_abs) * ix.scale
    clusters = cluster_distinct(vals, idx, cluster_tol_rel, abs_tol,
                                float(beyond_pos[0]) if beyond_pos.size else None,
                                float(beyond_neg[0]) if beyond_neg.size else None)

    # Gram-Schmidt within each degenerate cluster and the kernel
    pos = {int(k): i for i, k in enumerate(idx)}
    for c in clusters:
        if c.multiplicity > 1:
            cols = [pos[k] for k in c.indices]
            vecs[:, cols] = orthonormalize_a(vecs[:, cols], M)
    if kern.shape[1]:
        kern = orthonormalize_a(kern, M)

    res = _residuals(D, M, vecs, vals)
    kres = _residuals(D, M, kern, np.zeros(kern.shape[1]))
    for a in (vals, idx, vecs, kern, res, kres):
        a.setflags(write=False)
    return WeightedSpectrum(D, M, idx, vals, vecs, kern, clusters, res, kres, kernel_tol,
                            cluster_tol_rel, abs_tol, window, reliable, k_max)


def _residuals(D: OperatorMatrix, M: MassMatrix, vecs, vals) -> np.ndarray:
    """||D phi - lambda W phi|| / ||phi|| in the grid L^2 norm."""
    if vecs.shape[1] == 0:
        return np.zeros(0)
    W = M.weight.values
    n, d = W.shape[:2]
    Wv = np.einsum("pij,pjr->pir", W, vecs.reshape(n, d, -1)).reshape(vecs.shape)
    R = D.action @ vecs - Wv * vals[None, :]
    q = D.quad[:, None]
    return np.sqrt(np.sum(q * np.abs(R) ** 2, axis=0) / np.sum(q * np.abs(vecs) ** 2, axis=0))


@dataclass(frozen=True, eq=False)
class SpectralProjector:
    """A-orthogonal projector P = Phi (M Phi)^H onto one cluster (label 0: kernel)."""

    label: int
    basis: np.ndarray = field(repr=False)  # A-orthonormal columns
    dual: np.ndarray = field(repr=False)  # (M basis)^H

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=complex)
        flat = f.reshape(self.basis.shape[0], -1)
        return (self.basis @ (self.dual @ flat)).reshape(f.shape)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.basis @ self.dual


def projector(spectrum: WeightedSpectrum, label: int) -> SpectralProjector:
    if label == 0:
        B = spectrum.kernel_basis
    else:
        c = spectrum.cluster(label)
        if not c.complete:
            raise RangeError(f"cluster {label} touches the retained range and may be incomplete")
        B = spectrum.columns(c.indices)
    return SpectralProjector(label, B, spectrum.M.apply(B).conj().T)


def index_projector(spectrum: WeightedSpectrum, ks, label: int = 0) -> SpectralProjector:
    """Projector onto the span of the eigenvectors with the given signed indices."""
    B = spectrum.columns(list(ks))
    return SpectralProjector(label, B, spectrum.M.apply(B).conj().T)


def write_spectrum_csv(spectrum: WeightedSpectrum, fh):
    """Columns: k, lambda, cluster, residual (one row per retained signed index)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "lambda", "cluster", "residual"])
    for k, lam, r in zip(spectrum.indices, spectrum.values, spectrum.residuals):
        w.writerow([int(k), f"{lam:.17g}", spectrum.cluster_label(k), f"{r:.3e}"])
