import math

import numpy as np
import pytest

from diraclab.assembly import (SIGMA3, assemble_dirac, assemble_mass, chiral_projector,
                               chirality_operator, clifford_generators, read_dump, write_dump)
from diraclab.domain import Geometry, build_grid
from diraclab.errors import DomainError, ShapeError
from diraclab.weights import WeightField, random_spd_weight

from oracles import chiral_interval_eigenvalues, circle_spectrum, torus_symbol_spectrum


def eig_dirac(geo):
    g = build_grid(geo)
    D = assemble_dirac(geo, g)
    return D, np.linalg.eigvalsh(D.action)


def test_clifford_relations():
    gam = clifford_generators(2)
    for i in range(2):
        for j in range(2):
            anti = gam[i] @ gam[j] + gam[j] @ gam[i]
            assert np.allclose(anti, -2 * (i == j) * np.eye(2))


@pytest.mark.parametrize("sign", [1, -1])
def test_chirality_operator_properties(sign):
    G = chirality_operator(sign)
    g1 = clifford_generators(1)[0]
    assert np.allclose(G @ G, np.eye(2))
    assert np.allclose(G.conj().T @ G, np.eye(2))
    assert np.allclose(g1 @ G, -G @ g1)
    for n in (1, -1):
        B = chiral_projector(sign, n)
        assert np.allclose(B @ B, B)
        assert np.linalg.matrix_rank(B) == 1


@pytest.mark.parametrize("twist", [0.0, 0.5])
def test_circle_free_spectrum(twist):
    D, ev = eig_dirac(Geometry.circle(2 * math.pi, 64, twist))
    pos, neg = circle_spectrum(2 * math.pi, twist, 20)
    got_pos = np.sort(ev[ev > 1e-9])[:20]
    got_neg = np.sort(ev[ev < -1e-9])[::-1][:20]
    assert np.allclose(got_pos, pos, atol=1e-10)
    assert np.allclose(got_neg, neg, atol=1e-10)
    assert np.sum(np.abs(ev) < 1e-9) == (1 if twist == 0 else 0)
    assert D.hermitian_residual <= 1e-10


@pytest.mark.parametrize("twists,kernel", [((0.5, 0.0), 0), ((0.0, 0.0), 2), ((0.5, 0.5), 0)])
def test_torus_symbol_oracle(twists, kernel):
    geo = Geometry.torus(resolution=12, twists=twists)
    D, ev = eig_dirac(geo)
    cutoff = 0.6 * geo.kappa_max
    ref = torus_symbol_spectrum(geo.lengths, twists, cutoff)
    got = np.sort(ev[np.abs(ev) <= cutoff])
    assert len(got) == len(ref)
    assert np.allclose(got, ref, atol=1e-10)
    assert np.sum(np.abs(ev) < 1e-9) == kernel
    assert D.hermitian_residual <= 1e-10


def test_torus_twisted_ground_state():
    _, ev = eig_dirac(Geometry.torus(resolution=8, twists=(0.5, 0)))
    pos = np.sort(ev[ev > 0])
    assert np.allclose(pos[:2], 0.5) and pos[2] > 0.6


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("length", [math.pi, 2.0])
def test_interval_matches_transfer_matrix_oracle(sign, length):
    D, ev = eig_dirac(Geometry.interval(length, 64, sign))
    pos, neg = chiral_interval_eigenvalues(length, sign, 10)
    assert np.allclose(np.sort(ev[ev > 0])[:10], pos, atol=1e-10)
    assert np.allclose(np.sort(ev[ev < 0])[::-1][:10], neg, atol=1e-10)
    assert np.min(np.abs(ev)) > 0.4 * math.pi / length
    assert D.hermitian_residual <= 1e-10


def test_interval_spectra_agree_for_both_signs():
    _, a = eig_dirac(Geometry.interval(math.pi, 32, 1))
    _, b = eig_dirac(Geometry.interval(math.pi, 32, -1))
    assert np.allclose(np.sort(a), np.sort(b), atol=1e-12)


@pytest.mark.parametrize("sign", [1, -1])
def test_interval_fields_satisfy_boundary_condition(sign):
    geo = Geometry.interval(math.pi, 32, sign)
    g = build_grid(geo)
    D = assemble_dirac(geo, g)
    rng = np.random.default_rng(3)
    f = rng.standard_normal((32, 2)) + 1j * rng.standard_normal((32, 2))
    left, right = D.boundary_values(f)
    assert np.linalg.norm(chiral_projector(sign, 1) @ left) <= 1e-12 * np.linalg.norm(left)
    assert np.linalg.norm(chiral_projector(sign, -1) @ right) <= 1e-12 * np.linalg.norm(right)


def test_interval_eigenvector_matches_closed_form():
    # lambda = 1/2 on [0, pi], s = +1: psi = e^{ix/2} u+ - i e^{-ix/2} e^{i pi} u-  (up to scale)
    geo = Geometry.interval(math.pi, 32, 1)
    g = build_grid(geo)
    D = assemble_dirac(geo, g)
    x = g.points[:, 0]
    up = np.array([1, 1]) / math.sqrt(2)
    um = np.array([1, -1]) / math.sqrt(2)
    lam = 0.5
    psi = np.exp(1j * lam * x)[:, None] * up - 1j * np.exp(1j * lam * (2 * math.pi - x))[:, None] * um
    assert np.abs(D.apply(psi) - lam * psi).max() < 1e-12


def test_mass_matrix_examples():
    geo = Geometry.torus(resolution=8)
    g = build_grid(geo)
    M1 = assemble_mass(WeightField.identity(g), g)
    assert np.allclose(M1.matrix, np.diag(np.repeat(g.quad_weights, 2)))
    M2 = assemble_mass(WeightField.identity(g).scaled(2), g)
    assert np.allclose(M2.matrix, 2 * M1.matrix)
    M3 = assemble_mass(WeightField.constant(np.diag([1.0, 2.0]), g), g)
    w = g.quad_weights[0]
    ev = np.linalg.eigvalsh(M3.matrix)
    assert np.allclose(np.unique(np.round(ev, 14)), [w, 2 * w])


def test_mass_rejects_indefinite_and_mismatch():
    g = build_grid(Geometry.circle(resolution=8))
    bad = WeightField.scalar(np.linspace(-1, 1, 8))
    with pytest.raises(DomainError):
        assemble_mass(bad, g)
    with pytest.raises(ShapeError):
        assemble_mass(WeightField.scalar(np.ones(16)), g)


def test_mass_apply_matches_matrix():
    geo = Geometry.torus(resolution=8, twists=(0.5, 0))
    g = build_grid(geo)
    M = assemble_mass(random_spd_weight(g, np.random.default_rng(1)), g)
    v = np.random.default_rng(2).standard_normal((128, 3))
    assert np.allclose(M.apply(v), M.matrix @ v)
    assert np.min(np.linalg.eigvalsh(M.matrix)) > 0


def test_dump_round_trip(tmp_path):
    geo = Geometry.circle(resolution=8)
    g = build_grid(geo)
    W = WeightField.identity(g)
    a = np.arange(12).reshape(3, 4) * (1 + 2j)
    write_dump(tmp_path / "m.bin", a, geo, W)
    back = read_dump(tmp_path / "m.bin")
    assert np.array_equal(back["values"], a)
    assert back["geometry_sha256"] == geo.digest()
    assert back["weight_sha256"] == W.digest()
    write_dump(tmp_path / "v.bin", a, geo, None, indices=[-2, -1, 1, 2])
    back = read_dump(tmp_path / "v.bin")
    assert back["indices"].tolist() == [-2, -1, 1, 2]
    assert back["weight_sha256"] == "0" * 64
    raw = (tmp_path / "v.bin").read_bytes()
    assert raw[:8] == b"DIRACLB1"
