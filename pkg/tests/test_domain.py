import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diraclab.assembly import assemble_dirac
from diraclab.domain import Geometry, build_grid, inner_a, inner_l2, norm_h1_discrete
from diraclab.errors import ConfigurationError, ShapeError
from diraclab.weights import WeightField


def test_circle_grid():
    g = build_grid(Geometry.circle(2 * math.pi, 16))
    assert g.n_points == 16 and g.fiber_dim == 1
    assert np.allclose(g.quad_weights, 2 * math.pi / 16)
    assert abs(g.volume - 2 * math.pi) < 1e-12


def test_torus_grid():
    g = build_grid(Geometry.torus(resolution=8))
    assert g.n_points == 64 and g.fiber_dim == 2
    assert np.allclose(g.quad_weights, (2 * math.pi / 8) ** 2)
    assert abs(g.volume - 4 * math.pi ** 2) / (4 * math.pi ** 2) < 1e-12


def test_interval_grid_volume():
    g = build_grid(Geometry.interval(math.pi, 32))
    assert abs(g.volume - math.pi) < 1e-12
    assert g.points.min() > 0 and g.points.max() < math.pi


@pytest.mark.parametrize("kwargs", [
    dict(variant="interval", lengths=(math.pi,), resolution=17),
    dict(variant="circle", lengths=(-1.0,), spin_twist=(0.0,)),
    dict(variant="circle", lengths=(1.0,), spin_twist=(0.25,)),
    dict(variant="torus", lengths=(1.0,), spin_twist=(0.0, 0.0)),
    dict(variant="circle", lengths=(1.0,), spin_twist=(0.0,), resolution=6),
    dict(variant="circle", lengths=(1.0,), spin_twist=(0.0,), chirality_sign=-1),
])
def test_invalid_geometries(kwargs):
    with pytest.raises(ConfigurationError):
        Geometry(**kwargs)


def test_distance_properties():
    for geo in (Geometry.circle(resolution=16, twist=0.5), Geometry.torus(resolution=8),
                Geometry.interval(resolution=16)):
        d = build_grid(geo).distance()
        assert np.allclose(d, d.T)
        assert np.all(np.diag(d) == 0)
        off = ~np.eye(len(d), dtype=bool)
        assert np.all(d[off] > 0)


def test_circle_distance_wraps():
    g = build_grid(Geometry.circle(2 * math.pi, 16))
    assert abs(g.distance()[0, 15] - 2 * math.pi / 16) < 1e-14


def test_antiperiodic_transport_phase():
    g = build_grid(Geometry.circle(2 * math.pi, 16, twist=0.5))
    assert g.transport_phase()[0, 15] == pytest.approx(-1)  # shortest path crosses the seam
    assert g.transport_phase()[0, 1] == pytest.approx(1)


def test_inner_l2_constant():
    g = build_grid(Geometry.circle(2 * math.pi, 16))
    one = np.ones(16)
    assert inner_l2(one, one, g) == pytest.approx(2 * math.pi)


def test_inner_l2_pointwise_orthogonal():
    g = build_grid(Geometry.torus(resolution=8))
    f = np.tile([1, 0], (64, 1))
    h = np.tile([0, 1], (64, 1))
    assert inner_l2(f, h, g) == 0


def test_inner_l2_fourier_modes():
    g = build_grid(Geometry.circle(2 * math.pi, 16))
    th = g.points[:, 0]
    assert abs(inner_l2(np.exp(1j * th), np.exp(2j * th), g)) < 1e-12


def test_inner_l2_conjugate_first_slot():
    g = build_grid(Geometry.circle(2 * math.pi, 16))
    f = np.ones(16)
    assert inner_l2(1j * f, f, g) == pytest.approx(-1j * 2 * math.pi)


@pytest.mark.parametrize("k", range(0, 8))
def test_quadrature_exact_for_low_modes(k):
    N = 16
    g = build_grid(Geometry.circle(3.0, N))
    x = g.points[:, 0]
    val = np.sum(g.quad_weights * np.exp(2j * math.pi * k * x / 3.0))
    exact = 3.0 if k == 0 else 0.0
    assert abs(val - exact) <= 1e-12 * 3.0


def test_shape_mismatch():
    g = build_grid(Geometry.circle(resolution=16))
    with pytest.raises(ShapeError):
        inner_l2(np.ones(8), np.ones(16), g)


def test_inner_a_identity_and_scaling():
    g = build_grid(Geometry.circle(resolution=16))
    rng = np.random.default_rng(0)
    f = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    h = rng.standard_normal(16)
    assert inner_a(f, h, WeightField.identity(g), g) == pytest.approx(inner_l2(f, h, g))
    f = f / math.sqrt(inner_l2(f, f, g).real)
    assert inner_a(f, f, WeightField.identity(g).scaled(2), g) == pytest.approx(2)


def test_inner_a_diagonal_block():
    g = build_grid(Geometry.torus(resolution=8))
    W = WeightField.constant(np.diag([1.0, 2.0]), g)
    f = np.tile([1.0, 0.0], (64, 1)) / (2 * math.pi)
    assert inner_a(f, f, W, g) == pytest.approx(1)


@given(st.integers(0, 2 ** 32 - 1))
def test_inner_a_hermitian_symmetry(seed):
    from diraclab.weights import random_spd_weight
    g = build_grid(Geometry.torus(resolution=8, twists=(0.5, 0)))
    rng = np.random.default_rng(seed)
    W = random_spd_weight(g, rng)
    f = rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2))
    h = rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2))
    a, b = inner_a(f, h, W, g), inner_a(h, f, W, g)
    assert abs(a - np.conj(b)) <= 1e-12 * max(1, abs(a))


def test_h1_norm_examples():
    geo = Geometry.circle(2 * math.pi, 32)
    g = build_grid(geo)
    D = assemble_dirac(geo, g)
    const = np.ones(32) / math.sqrt(2 * math.pi)
    assert norm_h1_discrete(const, D, g) == pytest.approx(1, abs=1e-12)
    th = g.points[:, 0]
    for k in (1, 3, -5):
        f = np.exp(1j * k * th)
        assert norm_h1_discrete(f, D, g) == pytest.approx(math.sqrt(2 * math.pi * (1 + k * k)), rel=1e-12)
        u = f / math.sqrt(2 * math.pi)
        assert norm_h1_discrete(u, D, g) == pytest.approx(math.sqrt(1 + k * k), rel=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_h1_dominates_l2(seed):
    geo = Geometry.interval(resolution=16)
    g = build_grid(geo)
    D = assemble_dirac(geo, g)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((16, 2)) + 1j * rng.standard_normal((16, 2))
    assert norm_h1_discrete(f, D, g) >= math.sqrt(inner_l2(f, f, g).real)


def test_geometry_digest_stable():
    a = Geometry.torus(resolution=8, twists=(0.5, 0.0))
    b = Geometry.torus(resolution=8, twists=(0.5, 0.0))
    assert a.digest() == b.digest() != Geometry.torus(resolution=8).digest()
