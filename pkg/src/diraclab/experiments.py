"""Experiment pipelines driven by an ExperimentConfig.

Each runner writes its CSV files into ``out`` and returns (verdict, files).
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .analysis import apriori_diagnostics, run_continuity_experiment
from .assembly import assemble_dirac, assemble_mass, write_dump
from .config import ExperimentConfig, build_weight
from .domain import build_grid
from .errors import PreconditionError
from .spectral import solve_weighted, write_spectrum_csv
from .variational import (QuotientForms, compare_spectra, verify_minmax_negative,
                          verify_minmax_positive, write_minmax_csv)
from .wavekernel import Propagator, matrix_elements, write_timeseries_csv
from .weights import make_family, ordered_pair

RESIDUAL_TOL = 1e-7
ORTHO_TOL = 1e-8


def _write(out: Path, name: str, writer) -> str:
    buf = io.StringIO()
    writer(buf)
    (out / name).write_text(buf.getvalue(), encoding="utf-8")
    return name


def _solve(cfg: ExperimentConfig, W, k_max=None):
    grid = build_grid(cfg.geometry)
    D = assemble_dirac(cfg.geometry, grid)
    s = cfg.solver
    return solve_weighted(D, assemble_mass(W, grid), k_max or s["k_max"], cfg.geometry.kernel_dim,
                          kernel_tol=s["kernel_tol"], cluster_tol_rel=s["cluster_tol_rel"],
                          cluster_tol_abs=s["cluster_tol_abs"])


def _ortho_error(spec) -> float:
    B = spec.retained_basis
    G = B.conj().T @ spec.M.apply(B)
    return float(np.abs(G - np.eye(G.shape[0])).max())


def run_spectrum(cfg: ExperimentConfig, out: Path, threads: int = 1):
    grid = build_grid(cfg.geometry)
    spec = _solve(cfg, build_weight(cfg.weight, grid, cfg.seed))
    files = [_write(out, "spectrum.csv", lambda fh: write_spectrum_csv(spec, fh))]
    write_dump(out / "eigenvectors.bin", spec.vectors, cfg.geometry, spec.weight, spec.indices)
    files.append("eigenvectors.bin")
    ok = spec.residuals.max(initial=0) <= RESIDUAL_TOL and _ortho_error(spec) <= ORTHO_TOL
    return bool(ok), files


def run_minmax(cfg: ExperimentConfig, out: Path, threads: int = 1):
    grid = build_grid(cfg.geometry)
    s = cfg.solver
    spec = _solve(cfg, build_weight(cfg.weight, grid, cfg.seed), s["k_max"] + 3)
    forms = QuotientForms(spec)
    reports = []
    for k in range(1, s["k_max"] + 1):
        reports.append(verify_minmax_positive(spec, k, s["n_samples"], cfg.seed, s["tol"], forms))
        reports.append(verify_minmax_negative(spec, k, s["n_samples"], cfg.seed, s["tol"], forms))
    files = [_write(out, "spectrum.csv", lambda fh: write_spectrum_csv(spec, fh)),
             _write(out, "minmax.csv", lambda fh: write_minmax_csv(reports, fh))]
    return all(r.verdict for r in reports), files


def run_continuity(cfg: ExperimentConfig, out: Path, threads: int = 1):
    s = cfg.solver
    fam = make_family(cfg.family["kind"], cfg.family["params"], cfg.geometry)
    rep = run_continuity_experiment(cfg.geometry, fam, cfg.family["members"], k_max=s["k_max"],
                                    l_max=s["l_max"], p=s["p"], alpha=s["alpha"],
                                    dictionary_size=s["dictionary_size"], threads=threads)
    files = [_write(out, "continuity.csv", rep.write_csv),
             _write(out, "continuity_summary.json", rep.write_json)]
    return all(rep.verdicts().values()), files


def run_compare(cfg: ExperimentConfig, out: Path, threads: int = 1):
    grid = build_grid(cfg.geometry)
    if cfg.geometry.kernel_dim:
        raise PreconditionError("comparison needs a geometry without harmonic spinors")
    pairs = []
    n = cfg.compare.get("random_pairs")
    if n:
        for i in range(n):
            pairs.append(ordered_pair(grid, np.random.default_rng([cfg.seed, i])))
    else:
        pairs.append((build_weight(cfg.weight, grid, cfg.seed),
                      build_weight(cfg.second_weight, grid, cfg.seed + 1)))
    rows = []
    ok = True
    for i, (W1, W2) in enumerate(pairs):
        rep = compare_spectra(_solve(cfg, W1), _solve(cfg, W2))
        ok &= rep.verdict
        rows.extend((i, k, m) for k, m in zip(rep.indices, rep.margins))

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "k", "margin"])
        for i, k, m in rows:
            w.writerow([i, k, f"{m:.17g}"])
    return bool(ok), [_write(out, "compare.csv", write)]


def run_wave(cfg: ExperimentConfig, out: Path, threads: int = 1):
    s = cfg.solver
    grid = build_grid(cfg.geometry)
    idx = [sg * j for j in range(1, min(3, s["k_max"]) + 1) for sg in (-1, 1)]
    idx.sort()
    rows = []
    ok = True
    if cfg.family is None:
        spec = _solve(cfg, build_weight(cfg.weight, grid, cfg.seed))
        rng = np.random.default_rng(cfg.seed)
        B = spec.retained_basis
        for t in s["times"]:
            U = Propagator(spec, t)
            E = matrix_elements(spec, t, idx, spec)
            for i, q in enumerate(idx):
                for j, p in enumerate(idx):
                    rows.append((t, "element", p, q, complex(E[i, j])))
            f = B @ (rng.standard_normal(B.shape[1]) + 1j * rng.standard_normal(B.shape[1]))
            Uf = U.apply(f)
            drift = abs(np.vdot(Uf, spec.M.apply(Uf)).real / np.vdot(f, spec.M.apply(f)).real - 1)
            s2 = float(rng.uniform(-10, 10))
            law = np.abs(U.apply(Propagator(spec, s2).apply(f)) - Propagator(spec, t + s2).apply(f)).max()
            rows.append((t, "norm_drift", 0, 0, complex(drift)))
            rows.append((t, "group_law_error", 0, 0, complex(law)))
            ok &= drift <= 1e-8 and law <= 1e-7 * np.abs(f).max()
    else:
        fam = make_family(cfg.family["kind"], cfg.family["params"], cfg.geometry)
        limit = _solve(cfg, fam.declared_limit)
        dev = {}
        for m in cfg.family["members"]:
            sm = _solve(cfg, fam.member(m))
            for t in s["times"]:
                ref = np.diag([np.exp(1j * t * limit.value(p)) for p in idx])
                E = matrix_elements(sm, t, idx, limit)
                dev[m, t] = float(np.abs(E - ref).max())
                for i, q in enumerate(idx):
                    for j, p in enumerate(idx):
                        rows.append((t, f"element_m{m}", p, q, complex(E[i, j])))
        m0, m1 = cfg.family["members"][0], cfg.family["members"][-1]
        ok = all(dev[m1, t] <= 0.5 * dev[m0, t] or dev[m1, t] <= 1e-10 for t in s["times"])
    return bool(ok), [_write(out, "wave.csv", lambda fh: write_timeseries_csv(rows, fh))]


RUNNERS = {
    "spectrum": run_spectrum,
    "minmax": run_minmax,
    "continuity": run_continuity,
    "compare": run_compare,
    "wave": run_wave,
}


def catalog() -> dict:
    from .config import PROFILES, SOLVER_DEFAULTS
    from .weights import FAMILY_PARAMS
    return {
        "geometries": {
            "circle": {"length": "float > 0", "twist": "0 or 0.5", "resolution": "even int >= 8"},
            "interval": {"length": "float > 0", "chirality_sign": "+1 or -1",
                         "resolution": "even int >= 8"},
            "torus": {"lengths": "[float, float]", "twists": "[0 or 0.5, 0 or 0.5]",
                      "resolution": "even int >= 8"},
        },
        "families": {k: {p: (list(v) if isinstance(v, tuple) else v) for p, v in d.items()}
                     for k, d in FAMILY_PARAMS.items()},
        "experiments": {
            "spectrum": ["geometry", "weight?", "solver?"],
            "minmax": ["geometry", "weight?", "solver?"],
            "continuity": ["geometry", "family", "solver?"],
            "compare": ["geometry", "weight + second_weight | compare.random_pairs", "solver?"],
            "wave": ["geometry", "weight? | family", "solver?"],
        },
        "weights": {"kinds": ["identity", "constant", "profile", "smooth", "random"],
                    "profiles": list(PROFILES)},
        "solver_defaults": SOLVER_DEFAULTS,
    }


def catalog_text() -> str:
    cat = catalog()
    lines = ["geometries:"]
    for name, params in cat["geometries"].items():
        lines.append(f"  {name:<10} " + ", ".join(f"{k}={v}" for k, v in params.items()))
    lines.append("families:")
    for name, params in cat["families"].items():
        lines.append(f"  {name:<24} " + ", ".join(f"{k}={v}" for k, v in params.items()))
    lines.append("experiments:")
    for name, blocks in cat["experiments"].items():
        lines.append(f"  {name:<10} " + ", ".join(blocks))
    return "\n".join(lines) + "\n"


def catalog_json() -> str:
    return json.dumps(catalog(), indent=2, sort_keys=True) + "\n"
