import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diraclab.domain import Geometry, build_grid
from diraclab.errors import RangeError, TruncationWarning
from diraclab.wavekernel import (Propagator, evolve, kernel_assemble, kernel_matrix_element,
                                 matrix_elements, write_timeseries_csv)
from diraclab.weights import make_family, random_spd_weight

from conftest import solve


@pytest.fixture(scope="module")
def spec():
    geo = Geometry.torus(resolution=8, twists=(0.5, 0))
    return solve(geo, random_spd_weight(build_grid(geo), np.random.default_rng(4)), 8)


def _a_norm(s, v):
    return math.sqrt(np.vdot(v, s.M.apply(v)).real)


def _random_in_span(s, seed):
    B = s.retained_basis
    r = np.random.default_rng(seed)
    return B @ (r.standard_normal(B.shape[1]) + 1j * r.standard_normal(B.shape[1]))


def test_time_zero_is_projection(spec):
    f = np.random.default_rng(0).standard_normal(spec.D.n_dof) + 0j
    U = Propagator(spec, 0.0)
    assert np.allclose(U.apply(f), U.project(f), atol=1e-12)
    assert np.allclose(U.apply(U.project(f)), U.project(f), atol=1e-10)


def test_single_mode_phase(spec):
    t = 1.3
    psi = spec.vector(2)
    out = Propagator(spec, t).apply(psi)
    assert np.abs(out - np.exp(1j * t * spec.value(2)) * psi).max() <= 1e-10


def test_antiperiodic_period():
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=4)
    psi = s.vector(1) + s.vector(-3)
    # eigenvalues are odd multiples of 1/2: the field returns after 2 pi / lambda_1
    # and is reversed after half of that
    out = evolve(s, 2 * math.pi / s.value(1), psi).field.reshape(-1)
    assert np.abs(out - psi).max() <= 1e-9
    out = evolve(s, math.pi / s.value(1), psi).field.reshape(-1)
    assert np.abs(out + psi).max() <= 1e-9


def test_symmetric_pair_period():
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=4)
    psi = s.vector(1) + s.vector(-1)
    out = evolve(s, 2 * math.pi / s.value(1), psi).field.reshape(-1)
    c = np.vdot(psi, out) / np.vdot(psi, psi)
    assert abs(abs(c) - 1) <= 1e-10 and np.abs(out - c * psi).max() <= 1e-9


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_group_law(t, s2):
    s = _SPEC
    f = _random_in_span(s, 1)
    lhs = Propagator(s, t).apply(Propagator(s, s2).apply(f))
    assert np.abs(lhs - Propagator(s, t + s2).apply(f)).max() <= 1e-8 * np.abs(f).max()


@given(st.floats(-20, 20))
def test_unitary(t):
    s = _SPEC
    f = _random_in_span(s, 2)
    assert _a_norm(s, Propagator(s, t).apply(f)) == pytest.approx(_a_norm(s, f), rel=1e-10)


def test_kernel_reproduces_evolution(spec):
    t = 0.7
    f = _random_in_span(spec, 3)
    K = kernel_assemble(spec, t)
    assert np.abs(K @ spec.M.apply(f) - evolve(spec, t, f).field.reshape(-1)).max() <= 1e-10


def test_kernel_composition(spec):
    Kt, Ks, Kts = (kernel_assemble(spec, x) for x in (0.4, -1.1, -0.7))
    M = spec.M.matrix.toarray() if hasattr(spec.M.matrix, "toarray") else spec.M.matrix
    assert np.abs(Kt @ M @ Ks - Kts).max() <= 1e-10


def test_weighted_kernel(spec):
    t = 0.4
    M = spec.M.matrix.toarray() if hasattr(spec.M.matrix, "toarray") else spec.M.matrix
    Kw = kernel_assemble(spec, t, weighted=True)
    q = spec.D.quad
    W = M / q[:, None]
    U = kernel_assemble(spec, t) @ M
    assert np.abs(Kw * q[None, :] - W @ U).max() <= 1e-10


def test_limit_elements_are_diagonal_phases(spec):
    t = 2.0
    idx = [-2, -1, 1, 2]
    E = matrix_elements(spec, t, idx, spec)
    ref = np.diag([np.exp(1j * t * spec.value(k)) for k in idx])
    # indices 1 and 2 may share a cluster; phases then coincide and the block is still diagonal
    assert np.abs(E - ref).max() <= 1e-10
    assert kernel_matrix_element(spec, t, 1, 1, spec) == pytest.approx(ref[2, 2], abs=1e-10)


def test_element_outside_range(spec):
    with pytest.raises(RangeError):
        kernel_matrix_element(spec, 0.1, 40, 1, spec)


def test_member_elements_approach_limit():
    geo = Geometry.circle(resolution=128)
    fam = make_family("conformal-exp", None, geo)
    limit = solve(geo, fam.declared_limit, 6)
    idx = [-2, -1, 1, 2]
    ref = np.diag([np.exp(1j * limit.value(k)) for k in idx])
    dev = [np.abs(matrix_elements(solve(geo, fam.member(m), 6), 1.0, idx, limit) - ref).max()
           for m in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(dev, dev[1:]))
    assert dev[-1] < 0.5 * dev[0]


def test_truncation_warning(spec):
    f = np.random.default_rng(5).standard_normal(spec.D.n_dof) + 0j
    with pytest.warns(TruncationWarning):
        ev = evolve(spec, 1.0, f)
    assert ev.truncated and ev.truncation_residual > 1e-6


def test_timeseries_csv():
    buf = io.StringIO()
    write_timeseries_csv([(0.5, "element", 1, -1, 1 + 2j)], buf)
    assert buf.getvalue() == "t,quantity,p,q,re,im\n0.5,element,1,-1,1,2\n"


_GEO = Geometry.torus(resolution=8, twists=(0.5, 0))
_SPEC = solve(_GEO, random_spd_weight(build_grid(_GEO), np.random.default_rng(4)), 8)
