"""Dual Rayleigh quotient, numerical min-max checks and the comparison test.

For psi outside ker D the dual quotient is

    Q(psi) = <psi, D psi> / <A^{-1} D psi, D psi>.

Positive eigenvalues satisfy

    1/lambda_k = inf_{V, dim k-1, V perp_A ker} sup_{psi perp_A V + ker} Q(psi)   (min-max)
               = sup_{W, dim k, W perp_A ker}   inf_{psi in W} Q(psi)             (max-min)

and the negative ones the mirror images with inf and sup exchanged. The variant
inf_W sup_{psi in W} Q with dim W = k does NOT characterize 1/lambda_k for
k > 0: a W inside the negative spectral subspace gives a negative sup. The
reports count how often random subspaces violate that variant.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .domain import Grid, as_field, inner_a, inner_l2
from .errors import NearKernelError, NumericError, PreconditionError, RangeError
from .spectral import WeightedSpectrum
from .weights import Ordering, WeightField, loewner_compare

MINMAX_TOL = 1e-7
COMPARE_TOL = 1e-8


def rayleigh_dual(psi, D, W: WeightField, grid: Grid) -> float:
    psi = as_field(psi, grid)
    Dpsi = D.apply(psi)
    n_psi = np.sqrt(inner_l2(psi, psi, grid).real)
    n_dpsi = np.sqrt(inner_l2(Dpsi, Dpsi, grid).real)
    if n_dpsi < 1e-12 * n_psi or n_psi == 0:
        raise NearKernelError("D psi vanishes: the dual quotient is undefined on ker D")
    num = inner_l2(psi, Dpsi, grid)
    den = inner_a(Dpsi, Dpsi, W.inverse(), grid)
    if abs(num.imag) > 1e-10 * max(abs(num), n_psi * n_dpsi):
        raise NumericError("numerator of the dual quotient is not real; is D Hermitian?")
    return float(num.real / den.real)


class QuotientForms:
    """Numerator and denominator Gram matrices of Q on the nonkernel retained span.

    Both are evaluated from the fields (D applied to the eigenvectors, W^{-1}
    applied pointwise), not from the computed eigenvalues.
    """

    def __init__(self, spectrum: WeightedSpectrum):
        self.spectrum = spectrum
        Phi = spectrum.vectors
        D = spectrum.D
        Winv = spectrum.weight.inverse().values
        DPhi = D.action @ Phi
        n, d = Winv.shape[:2]
        WinvDPhi = np.einsum("pij,pjr->pir", Winv, DPhi.reshape(n, d, -1)).reshape(DPhi.shape)
        q = D.quad[:, None]
        N = Phi.conj().T @ (q * DPhi)
        Den = DPhi.conj().T @ (q * WinvDPhi)
        self.num = 0.5 * (N + N.conj().T)
        self.den = 0.5 * (Den + Den.conj().T)
        self.indices = spectrum.indices

    def coords(self, ks) -> np.ndarray:
        pos = {int(k): i for i, k in enumerate(self.indices)}
        E = np.zeros((len(self.indices), len(ks)))
        for j, k in enumerate(ks):
            E[pos[int(k)], j] = 1.0
        return E

    def extremes(self, C) -> tuple[float, float]:
        """(min, max) of Q over span(C), C coefficient columns in the eigenbasis."""
        N = C.conj().T @ self.num @ C
        Den = C.conj().T @ self.den @ C
        ev = sla.eigh(0.5 * (N + N.conj().T), 0.5 * (Den + Den.conj().T), eigvals_only=True)
        return float(ev[0]), float(ev[-1])

    def complement(self, C) -> np.ndarray:
        """Orthonormal coefficient basis of the A-orthogonal complement of span(C)."""
        if C.shape[1] == 0:
            return np.eye(len(self.indices), dtype=complex)
        return sla.null_space(C.conj().T)


@dataclass
class MinmaxReport:
    k: int
    direction: str
    target: float  # 1 / lambda_k
    value_at_attaining_subspace: float
    best_over_random_subspaces: float
    maxmin_at_attaining_subspace: float
    best_maxmin_over_random: float
    swapped_form_violations: int
    n_samples: int
    seed: int
    tol: float
    verdict: bool = field(default=False)

    def as_row(self) -> dict:
        return asdict(self)


def _random_coeffs(rng, n: int, r: int) -> np.ndarray:
    Z = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    Q, _ = np.linalg.qr(Z)
    return Q


def _verify(spectrum: WeightedSpectrum, k: int, sign: int, n_samples: int, seed: int,
            tol: float, forms: QuotientForms | None) -> MinmaxReport:
    if k < 1:
        raise RangeError("k counts from 1")
    have = int(np.sum(np.sign(spectrum.indices) == sign))
    if have < k + 3:
        raise RangeError(f"need at least {k + 3} retained eigenvalues of this sign, have {have}")
    forms = forms or QuotientForms(spectrum)
    lam = spectrum.value(sign * k)
    target = 1.0 / lam
    atol = tol * abs(target)
    n = len(spectrum.indices)

    # (a) complement of V_* = span{phi_{s1}, ..., phi_{s(k-1)}}
    Vstar = forms.coords([sign * j for j in range(1, k)])
    lo, hi = forms.extremes(forms.complement(Vstar))
    attained = hi if sign > 0 else lo

    # max-min / min-max over k-dimensional W, attained at span{phi_{s1}, ..., phi_{sk}}
    lo, hi = forms.extremes(forms.coords([sign * j for j in range(1, k + 1)]))
    maxmin_star = lo if sign > 0 else hi

    rng = np.random.default_rng([seed, k, sign + 1])
    best = np.inf * sign
    best_mm = -np.inf * sign
    swapped = 0
    for _ in range(n_samples):
        # (b) random (k-1)-dim V, exact extremum over its complement
        if k > 1:
            lo, hi = forms.extremes(forms.complement(_random_coeffs(rng, n, k - 1)))
        else:
            lo, hi = forms.extremes(np.eye(n))
        val = hi if sign > 0 else lo
        best = min(best, val) if sign > 0 else max(best, val)
        # (c) random k-dim W
        lo, hi = forms.extremes(_random_coeffs(rng, n, k))
        mm = lo if sign > 0 else hi
        best_mm = max(best_mm, mm) if sign > 0 else min(best_mm, mm)
        swapped_val = hi if sign > 0 else lo
        if sign * (swapped_val - target) < -atol:
            swapped += 1

    ok = abs(attained - target) <= atol and abs(maxmin_star - target) <= atol
    if n_samples:
        ok = ok and sign * (best - target) >= -atol and sign * (best_mm - target) <= atol
    return MinmaxReport(sign * k, "positive" if sign > 0 else "negative", target, attained,
                        float(best) if n_samples else float("nan"), maxmin_star,
                        float(best_mm) if n_samples else float("nan"), swapped, n_samples,
                        seed, tol, bool(ok))


def verify_minmax_positive(spectrum: WeightedSpectrum, k: int, n_samples: int = 64, seed: int = 0,
                           tol: float = MINMAX_TOL, forms=None) -> MinmaxReport:
    return _verify(spectrum, k, 1, n_samples, seed, tol, forms)


def verify_minmax_negative(spectrum: WeightedSpectrum, k: int, n_samples: int = 64, seed: int = 0,
                           tol: float = MINMAX_TOL, forms=None) -> MinmaxReport:
    """k >= 1 refers to lambda_{-k}."""
    return _verify(spectrum, k, -1, n_samples, seed, tol, forms)


@dataclass
class ComparisonReport:
    ordering: str
    negative_branch: str
    indices: list
    margins: list  # >= -tol when the inequality holds
    tol: float
    verdict: bool
    worst_margin: float


def compare_spectra(spec1: WeightedSpectrum, spec2: WeightedSpectrum,
                    tol: float = COMPARE_TOL) -> ComparisonReport:
    """Check lambda_k(A1) <= lambda_k(A2) for k > 0 and >= for k < 0, given A1 >= A2."""
    if spec1.geometry != spec2.geometry:
        raise PreconditionError("spectra come from different geometries")
    if spec1.h0 or spec2.h0 or spec1.geometry.kernel_dim:
        raise PreconditionError("comparison needs ker D = 0; this geometry has harmonic spinors")
    order = loewner_compare(spec1.weight, spec2.weight)
    if order not in (Ordering.GE, Ordering.EQ):
        raise PreconditionError(f"weights are not ordered A1 >= A2 (got {order.value})")
    ks = sorted(set(spec1.indices.tolist()) & set(spec2.indices.tolist()))
    margins = []
    for k in ks:
        a, b = spec1.value(k), spec2.value(k)
        margins.append(b - a if k > 0 else a - b)
    worst = float(min(margins)) if margins else float("inf")
    return ComparisonReport(order.value, "lambda_k(A1) >= lambda_k(A2) for k < 0", ks, margins,
                            tol, bool(worst >= -tol), worst)


def write_minmax_csv(reports, fh):
    rows = [r.as_row() for r in reports]
    if not rows:
        return
    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
