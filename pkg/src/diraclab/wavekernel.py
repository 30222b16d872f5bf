"""Spectral wave propagator exp(i t A^{-1} D) and its kernel."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .domain import as_field
from .errors import RangeError, TruncationWarning
from .spectral import WeightedSpectrum

TRUNCATION_THRESHOLD = 1e-6


def _selected(spectrum: WeightedSpectrum, l_max: int | None):
    """Retained eigen-indices and phases source: clusters with |l| <= l_max, kernel first."""
    chosen = []
    for c in spectrum.clusters:
        if l_max is not None and abs(c.label) > l_max:
            continue
        if not c.complete:
            if l_max is not None:
                raise RangeError(f"cluster {c.label} is not completely retained")
            continue
        chosen.append(c)
    return chosen


@dataclass(frozen=True, eq=False)
class Propagator:
    """U(t) = sum_l exp(i t mu_l) P_l + P_kernel on the retained span."""

    spectrum: WeightedSpectrum = field(repr=False)
    t: float
    l_max: int | None = None

    @cached_property
    def _parts(self):
        s = self.spectrum
        clusters = _selected(s, self.l_max)
        ks = [k for c in clusters for k in c.indices]
        mus = [c.mean for c in clusters for _ in c.indices]
        B = np.hstack([s.kernel_basis, s.columns(ks)])
        phase = np.concatenate([np.ones(s.h0), np.exp(1j * self.t * np.asarray(mus, dtype=float))])
        dual = s.M.apply(B).conj().T
        return B, phase, dual

    @property
    def basis(self):
        return self._parts[0]

    def project(self, f) -> np.ndarray:
        B, _, dual = self._parts
        return B @ (dual @ f)

    def apply(self, f) -> np.ndarray:
        B, phase, dual = self._parts
        f = np.asarray(f, dtype=complex)
        flat = f.reshape(B.shape[0], -1)
        return (B @ (phase[:, None] * (dual @ flat))).reshape(f.shape)

    @cached_property
    def matrix(self) -> np.ndarray:
        B, phase, dual = self._parts
        return (B * phase) @ dual


@dataclass
class Evolution:
    field: np.ndarray
    truncation_residual: float  # relative A-norm of the part of psi0 outside the retained span
    truncated: bool


def _a_norm(spectrum: WeightedSpectrum, v) -> float:
    return float(np.sqrt(max(np.vdot(v, spectrum.M.apply(v)).real, 0.0)))


def evolve(spectrum: WeightedSpectrum, t: float, psi0, l_max: int | None = None,
           threshold: float = TRUNCATION_THRESHOLD) -> Evolution:
    grid = spectrum.grid
    v = as_field(psi0, grid).reshape(-1)
    U = Propagator(spectrum, t, l_max)
    proj = U.project(v)
    nv = _a_norm(spectrum, v)
    resid = _a_norm(spectrum, v - proj) / nv if nv > 0 else 0.0
    truncated = resid > threshold
    if truncated:
        warnings.warn(f"initial field has relative A-norm {resid:.2e} outside the retained span",
                      TruncationWarning, stacklevel=2)
    out = U.apply(v).reshape(grid.n_points, grid.fiber_dim)
    return Evolution(out, resid, truncated)


def kernel_matrix_element(spectrum_m: WeightedSpectrum, t: float, p: int, q: int,
                          limit_spectrum: WeightedSpectrum, l_max: int | None = None) -> complex:
    """<psi_q, U_m(t) psi_p> in the A-product of the limit, psi_j limit eigenvectors."""
    if not (limit_spectrum.has(p) and limit_spectrum.has(q)):
        raise RangeError(f"indices ({p}, {q}) are not retained by the limit spectrum")
    if not (spectrum_m.has(p) and spectrum_m.has(q)):
        raise RangeError(f"indices ({p}, {q}) are not retained by the member spectrum")
    U = Propagator(spectrum_m, t, l_max)
    return complex(np.vdot(limit_spectrum.M.apply(limit_spectrum.vector(q)),
                           U.apply(limit_spectrum.vector(p))))


def matrix_elements(spectrum_m: WeightedSpectrum, t: float, indices,
                    limit_spectrum: WeightedSpectrum, l_max: int | None = None) -> np.ndarray:
    """E[i, j] = kernel_matrix_element(p = indices[j], q = indices[i])."""
    U = Propagator(spectrum_m, t, l_max)
    Psi = limit_spectrum.columns(list(indices))
    return limit_spectrum.M.apply(Psi).conj().T @ U.apply(Psi)


def kernel_assemble(spectrum: WeightedSpectrum, t: float, l_max: int | None = None,
                    weighted: bool = False) -> np.ndarray:
    """Nodal kernel K(x_i, x_j) = sum exp(i t mu_l) phi(x_i) phi(x_j)^H.

    The propagator is U psi = K M_A psi. With ``weighted`` the dyads carry the
    weight on both sides, (A phi)(x) (A phi)(y)^H, which acts through plain
    quadrature as A U.
    """
    U = Propagator(spectrum, t, l_max)
    B, phase, _ = U._parts
    if weighted:
        W = spectrum.weight.values
        n, d = W.shape[:2]
        B = np.einsum("pij,pjr->pir", W, B.reshape(n, d, -1)).reshape(B.shape)
    return (B * phase) @ B.conj().T


def write_timeseries_csv(rows, fh):
    """rows: (t, quantity, p, q, value) with complex value."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "quantity", "p", "q", "re", "im"])
    for t, name, p, q, z in rows:
        w.writerow([f"{t:.17g}", name, p, q, f"{z.real:.17g}", f"{z.imag:.17g}"])
