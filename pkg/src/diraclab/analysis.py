"""Continuity experiments along weight families, subspace gaps and norm diagnostics."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import OperatorMatrix, assemble_dirac, assemble_mass
from .domain import Geometry, Grid, as_field, build_grid
from .errors import ConfigurationError, DomainError, RangeError, ShapeError
from .spectral import SpectralProjector, WeightedSpectrum, index_projector, solve_weighted
from .weights import WeightFamily, WeightField, lp_norm, validate_spd, weak_convergence_residual

DEFAULT_P = 4.0
DEFAULT_ALPHA = 0.5
EIGEN_REDUCTION = 0.25
GAP_REDUCTION = 0.5
DISTANCE_CEILING = 5e-2


def subspace_gap(P1: SpectralProjector, P2: SpectralProjector, D: OperatorMatrix, grid=None) -> float:
    """||P1 - P2|| as an operator on the discrete H^1 space.

    With H^1 Gram matrix G = R^H R the norm is ||R (P1 - P2) R^{-1}||_2. The
    difference has rank <= rank P1 + rank P2, so only thin factors are formed.
    """
    n = D.n_dof
    if P1.basis.shape[0] != n or P2.basis.shape[0] != n:
        raise ShapeError("projectors do not act on this operator's space")
    R = D.h1_factor
    U = R @ np.hstack([P1.basis, -P2.basis])
    V = sla.solve_triangular(R, np.hstack([P1.dual.conj().T, P2.dual.conj().T]), trans="C", lower=False)
    _, ru = np.linalg.qr(U)
    _, rv = np.linalg.qr(V)
    return float(np.linalg.norm(ru @ rv.conj().T, 2))


def subspace_gap_dense(P1: SpectralProjector, P2: SpectralProjector, D: OperatorMatrix) -> float:
    """Reference path for tests: full matrices and a dense SVD."""
    R = D.h1_factor
    X = P1.matrix - P2.matrix
    return float(np.linalg.norm(R @ X @ np.linalg.inv(R), 2))


def holder_norm(psi, alpha: float, grid: Grid) -> float:
    """sup |psi| + max over grid pairs of |psi(x) - psi(y)| / d(x, y)^alpha."""
    if not 0 < alpha < 1:
        raise ConfigurationError(f"Holder exponent must lie in (0, 1), got {alpha}")
    f = as_field(psi, grid)
    sup = float(np.sqrt(np.sum(np.abs(f) ** 2, axis=1)).max())
    d = grid.distance()
    phase = grid.transport_phase()
    # fiberwise difference |f(x_i) - phase_ij f(x_j)|
    diff2 = np.zeros(d.shape)
    for c in range(grid.fiber_dim):
        diff2 += np.abs(f[:, c][:, None] - phase * f[:, c][None, :]) ** 2
    off = d > 0
    best = float(np.max(np.sqrt(diff2[off]) / d[off] ** alpha)) if off.any() else 0.0
    return sup + best


def eigenspace_distance(psi, basis, norm_kind: str, D: OperatorMatrix, grid: Grid,
                        alpha: float = DEFAULT_ALPHA) -> float:
    """Distance from psi to span(basis).

    H1: exact infimum by H^1 least squares. Holder: the H^1 minimizer measured in
    the Holder surrogate, an upper bound for the Holder infimum.
    """
    basis = np.asarray(basis, dtype=complex)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[1] == 0:
        raise RangeError("empty eigenspace basis")
    vec = as_field(psi, grid).reshape(-1)
    R = D.h1_factor
    c, *_ = np.linalg.lstsq(R @ basis, R @ vec, rcond=None)
    r = vec - basis @ c
    if norm_kind.upper() == "H1":
        return float(np.linalg.norm(R @ r))
    if norm_kind.lower() == "holder":
        return holder_norm(r, alpha, grid)
    raise ConfigurationError(f"unknown norm kind {norm_kind!r}")


def h1_norms(D: OperatorMatrix, vecs) -> np.ndarray:
    return np.linalg.norm(D.h1_factor @ vecs, axis=0)


def apriori_exponents(n: int, p: float) -> tuple[int, int]:
    """(T1, T2) = (floor((n/2)/(p-n)), floor(n(p-1)/(2(p-n))))."""
    if not p > n:
        raise ConfigurationError(f"the a priori estimates need p > n (got p={p}, n={n})")
    return math.floor((n / 2) / (p - n)), math.floor(n * (p - 1) / (2 * (p - n)))


def step_v_inequality(a, b, c):
    """a / (b a + c) < 1 / b for positive a, b, c."""
    return a / (b * a + c) < 1.0 / b


@dataclass
class NormDiagnostics:
    n: int
    p: float
    alpha: float
    T1: int
    T2: int
    lp_A: float
    lp_Ainv: float
    indices: list
    eigenvalues: list
    h1: list
    holder: list
    bound_h1: list
    bound_holder: list

    @property
    def ratio_h1(self):
        return [a / b for a, b in zip(self.h1, self.bound_h1)]

    @property
    def ratio_holder(self):
        return [a / b for a, b in zip(self.holder, self.bound_holder)]


def apriori_diagnostics(spectrum: WeightedSpectrum, W: WeightField | None = None,
                        p: float = DEFAULT_P, n: int | None = None, alpha: float = DEFAULT_ALPHA,
                        ks=None) -> NormDiagnostics:
    """Norms of A-normalized eigenspinors next to the a priori bounds with C = 1."""
    W = W if W is not None else spectrum.weight
    n = spectrum.geometry.dim if n is None else n
    T1, T2 = apriori_exponents(n, p)
    grid = spectrum.grid
    a = lp_norm(W, p, grid)
    ai = lp_norm(W.inverse(), p, grid)
    ks = list(spectrum.indices) if ks is None else list(ks)
    vecs = spectrum.columns(ks)
    h1 = h1_norms(spectrum.D, vecs)
    lam = np.array([spectrum.value(k) for k in ks])
    hol = [holder_norm(vecs[:, j], alpha, grid) for j in range(len(ks))]
    base = math.sqrt(ai) + np.abs(lam) * math.sqrt(a)
    growth = 1 + np.abs(lam) * a
    return NormDiagnostics(n, p, alpha, T1, T2, a, ai, [int(k) for k in ks], lam.tolist(),
                           h1.tolist(), hol, (growth ** T1 * base).tolist(),
                           (growth ** T2 * base).tolist())


# -- continuity experiments ---------------------------------------------------------

@dataclass
class MemberResult:
    m: int
    eigen_error: dict = field(default_factory=dict)  # k -> |lambda_k(A_m) - lambda_k(A)|
    relative_error: dict = field(default_factory=dict)
    projector_gap: dict = field(default_factory=dict)  # l -> H^1 gap
    distance_h1: dict = field(default_factory=dict)  # k -> distance
    distance_holder: dict = field(default_factory=dict)
    weak_residual: float = float("nan")
    weak_residual_inverse: float = float("nan")
    step_one_b: dict = field(default_factory=dict)  # k -> B_k^{(m)}
    step_one_slack: dict = field(default_factory=dict)  # k -> lambda_k(A)(1 + k B) - lambda_k(A_m)
    norm_h1: dict = field(default_factory=dict)
    norm_holder: dict = field(default_factory=dict)
    skipped: str | None = None


@dataclass
class ContinuityReport:
    family: dict
    geometry: dict
    members: list
    k_max: int
    l_max: int
    limit_values: dict
    limit_clusters: dict  # l -> list of k
    limit_norm_h1: dict
    diagnostics: list
    thresholds: dict

    def member(self, m: int) -> MemberResult:
        for r in self.members:
            if r.m == m:
                return r
        raise RangeError(f"member {m} not in report")

    @property
    def active(self):
        return [r for r in self.members if r.skipped is None]

    def _series(self, attr, key):
        return [getattr(r, attr)[key] for r in self.active]

    def verdicts(self) -> dict:
        """Pass/fail for each convergence claim (first vs last active member)."""
        act = self.active
        out = {}
        if len(act) < 2:
            return {"enough_members": False}
        first, last = act[0], act[-1]
        ks = sorted(first.eigen_error)
        out["eigenvalues"] = all(
            (last.eigen_error[k] <= EIGEN_REDUCTION * first.eigen_error[k] or last.eigen_error[k] <= 1e-9)
            and last.relative_error[k] <= 1e-3 for k in ks)
        out["projectors"] = all(
            last.projector_gap[l] <= GAP_REDUCTION * first.projector_gap[l]
            or last.projector_gap[l] <= 1e-9 for l in sorted(first.projector_gap))
        dist_ok = True
        for k in ks:
            seq = self._series("distance_h1", k)
            dist_ok &= seq[-1] < DISTANCE_CEILING and seq[-1] <= seq[0]
        out["eigenspaces"] = bool(dist_ok)
        h1 = [max(r.norm_h1.values()) for r in act]
        hol = [max(r.norm_holder.values()) for r in act]
        out["norms_bounded"] = max(h1) <= 10 * h1[0] and max(hol) <= 10 * hol[0]
        return out

    def to_long_rows(self):
        fam = self.family["kind"]
        rows = []
        for r in self.members:
            if r.skipped:
                rows.append((fam, r.m, "skipped", 0, float("nan")))
                continue
            for name, table in (("eigen_error", r.eigen_error), ("relative_error", r.relative_error),
                                ("projector_gap_h1", r.projector_gap),
                                ("distance_h1", r.distance_h1), ("distance_holder", r.distance_holder),
                                ("step_one_B", r.step_one_b), ("step_one_slack", r.step_one_slack),
                                ("norm_h1", r.norm_h1), ("norm_holder", r.norm_holder)):
                for idx in sorted(table):
                    rows.append((fam, r.m, name, idx, table[idx]))
            rows.append((fam, r.m, "weak_residual", 0, r.weak_residual))
            rows.append((fam, r.m, "weak_residual_inverse", 0, r.weak_residual_inverse))
        return rows

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "m", "quantity", "index", "value"])
        for fam, m, q, i, v in self.to_long_rows():
            w.writerow([fam, m, q, i, f"{v:.17g}"])

    def summary(self) -> dict:
        return {
            "family": self.family,
            "geometry": self.geometry,
            "k_max": self.k_max,
            "l_max": self.l_max,
            "members": [r.m for r in self.members],
            "skipped": {r.m: r.skipped for r in self.members if r.skipped},
            "limit_eigenvalues": {str(k): v for k, v in self.limit_values.items()},
            "limit_clusters": {str(l): v for l, v in self.limit_clusters.items()},
            "thresholds": self.thresholds,
            "verdicts": self.verdicts(),
            "diagnostics": self.diagnostics,
        }

    def write_json(self, fh):
        json.dump(self.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _labels(l_max: int):
    return [s * l for l in range(1, l_max + 1) for s in (-1, 1)]


def run_continuity_experiment(geometry: Geometry, family: WeightFamily, member_indices,
                              k_max: int = 4, l_max: int = 3, p: float = DEFAULT_P,
                              alpha: float = DEFAULT_ALPHA, dictionary_size: int = 3,
                              threads: int = 1, solve_k: int | None = None) -> ContinuityReport:
    members = [int(m) for m in member_indices]
    if members != sorted(members) or len(set(members)) != len(members):
        raise ConfigurationError("member indices must be strictly ascending")
    if family.geometry != geometry:
        raise ConfigurationError("family was built for a different geometry")
    grid = build_grid(geometry)
    D = assemble_dirac(geometry, grid)
    A = family.declared_limit
    Ainv = A.inverse()
    hint = geometry.kernel_dim

    weights = {}
    for m in members:
        Wm = family.member(m)
        rep = validate_spd(Wm)
        if not rep.ok:
            raise DomainError(f"family member m={m} is not SPD (min eigenvalue {rep.min_eig:.3e})")
        weights[m] = Wm

    # enough indices to cover k_max and the l_max clusters on each side, with one spare
    k_solve = solve_k or k_max + 2 * l_max + 4
    limit = solve_weighted(D, assemble_mass(A, grid), k_solve, hint)
    clusters = {}
    for lab in _labels(l_max):
        c = limit.cluster(lab)
        if not c.complete:
            raise RangeError(f"limit cluster {lab} is cut by the retained range; raise solve_k")
        clusters[lab] = list(c.indices)
    need = max(max(abs(k) for ks in clusters.values() for k in ks), k_max)
    ks = [s * k for k in range(1, k_max + 1) for s in (-1, 1)]
    limit_proj = {lab: index_projector(limit, idx, lab) for lab, idx in clusters.items()}
    limit_h1 = dict(zip(ks, h1_norms(D, limit.columns(ks)).tolist()))
    AvecsLimit = limit.M.weight.values  # A at each point

    def solve_member(m):
        return m, solve_weighted(D, assemble_mass(weights[m], grid), need + 1, hint)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spectra = dict(pool.map(solve_member, members))
    else:
        spectra = dict(map(solve_member, members))

    diagnostics = []
    results = []
    q = D.quad[:, None]
    n_pts, fd = grid.n_points, grid.fiber_dim
    for m in members:
        sm = spectra[m]
        res = MemberResult(m)
        # index ranges of the limit must not cut through a cluster of the member
        bad = []
        for lab, idx in clusters.items():
            edge = max(idx, key=abs)
            nxt = edge + (1 if edge > 0 else -1)
            a, b = sm.value(edge), sm.value(nxt)
            if abs(a - b) <= sm.cluster_tol_abs + sm.cluster_tol_rel * max(abs(a), abs(b)):
                bad.append(lab)
        if bad:
            res.skipped = f"member eigenvalues straddle the boundary of limit clusters {bad}"
            diagnostics.append(f"m={m}: {res.skipped}")
            results.append(res)
            continue

        for k in ks:
            lam, lam_m = limit.value(k), sm.value(k)
            res.eigen_error[k] = abs(lam_m - lam)
            res.relative_error[k] = abs(lam_m - lam) / abs(lam)
        for lab, idx in clusters.items():
            res.projector_gap[lab] = subspace_gap(index_projector(sm, idx, lab), limit_proj[lab], D)
        for k in ks:
            basis = limit.columns(list(limit.cluster_of(k).indices))
            res.distance_h1[k] = eigenspace_distance(sm.vector(k), basis, "H1", D, grid, alpha)
            res.distance_holder[k] = eigenspace_distance(sm.vector(k), basis, "holder", D, grid, alpha)
        res.weak_residual = weak_convergence_residual(weights[m], A, dictionary_size, grid)
        Wm_inv = weights[m].inverse()
        res.weak_residual_inverse = weak_convergence_residual(Wm_inv, Ainv, dictionary_size, grid)

        # B_k^{(m)} = max_{i,j<=k} |int <(A_m^{-1} - A^{-1}) A phi_i, A phi_j>| (same sign block)
        dAi = Wm_inv.values - Ainv.values
        for k in ks:
            sgn = 1 if k > 0 else -1
            cols = limit.columns([sgn * j for j in range(1, abs(k) + 1)])
            Aphi = np.einsum("pij,pjr->pir", AvecsLimit, cols.reshape(n_pts, fd, -1))
            G = np.einsum("pir,pij,pjs->rs", Aphi.conj(), dAi, Aphi * grid.quad_weights[:, None, None])
            B = float(np.abs(G).max())
            res.step_one_b[k] = B
            lam = limit.value(k)
            res.step_one_slack[k] = abs(lam) * (1 + abs(k) * B) - abs(sm.value(k))

        nh = h1_norms(D, sm.columns(ks))
        for j, k in enumerate(ks):
            res.norm_h1[k] = float(nh[j])
            res.norm_holder[k] = holder_norm(sm.vector(k), alpha, grid)
        results.append(res)

    return ContinuityReport(
        family={"kind": family.kind, "params": _jsonable(family.params)},
        geometry=geometry.to_dict(), members=results, k_max=k_max, l_max=l_max,
        limit_values={int(k): limit.value(k) for k in ks},
        limit_clusters={int(l): v for l, v in clusters.items()},
        limit_norm_h1=limit_h1, diagnostics=diagnostics,
        thresholds={"eigen_reduction": EIGEN_REDUCTION, "gap_reduction": GAP_REDUCTION,
                    "distance_ceiling": DISTANCE_CEILING, "relative_error": 1e-3,
                    "norm_growth": 10.0, "p": p, "alpha": alpha,
                    "dictionary_size": dictionary_size})


def _jsonable(params: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}
