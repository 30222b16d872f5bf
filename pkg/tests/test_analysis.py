import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diraclab.analysis import (apriori_diagnostics, apriori_exponents, eigenspace_distance,
                               holder_norm, run_continuity_experiment, step_v_inequality,
                               subspace_gap, subspace_gap_dense)
from diraclab.domain import Geometry, build_grid
from diraclab.errors import ConfigurationError, RangeError
from diraclab.spectral import index_projector, projector
from diraclab.weights import make_family, random_spd_weight

from conftest import solve


@pytest.fixture(scope="module")
def twin():
    geo = Geometry.torus(resolution=8, twists=(0.5, 0))
    g = build_grid(geo)
    a = solve(geo, random_spd_weight(g, np.random.default_rng(1)), 6)
    b = solve(geo, random_spd_weight(g, np.random.default_rng(2)), 6)
    return a, b


def test_gap_identical_is_zero(twin):
    a, _ = twin
    P = projector(a, 1)
    assert subspace_gap(P, P, a.D) <= 1e-10


def test_gap_symmetric_and_matches_dense(twin):
    a, b = twin
    P, Q = index_projector(a, [1, 2], 1), index_projector(b, [1, 2], 1)
    g1, g2 = subspace_gap(P, Q, a.D), subspace_gap(Q, P, a.D)
    assert g1 == pytest.approx(g2, rel=1e-8)
    assert g1 == pytest.approx(subspace_gap_dense(P, Q, a.D), rel=1e-8)


def test_gap_orthogonal_modes():
    # two H^1-orthogonal rank-one orthogonal projectors of equal H^1 norm: gap is 1
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=3)
    P, Q = index_projector(s, [1], 1), index_projector(s, [-1], -1)
    assert subspace_gap(P, Q, s.D) == pytest.approx(1, abs=1e-10)


def test_distance_in_span_and_phase():
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=3)
    basis = s.columns([1, 2])
    v = 0.3 * s.vector(1) - 2j * s.vector(2)
    assert eigenspace_distance(v, basis, "H1", s.D, s.grid) <= 1e-10
    assert eigenspace_distance(np.exp(0.7j) * s.vector(1), s.vector(1), "H1", s.D, s.grid) <= 1e-10
    assert eigenspace_distance(v, basis, "holder", s.D, s.grid) <= 1e-10


def test_distance_orthogonal_is_own_norm():
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=3)
    R = s.D.h1_factor
    v = s.vector(-1)
    d = eigenspace_distance(v, s.vector(1), "H1", s.D, s.grid)
    assert d == pytest.approx(np.linalg.norm(R @ v), rel=1e-10)


def test_distance_errors():
    s = solve(Geometry.circle(resolution=32, twist=0.5), k_max=3)
    with pytest.raises(RangeError):
        eigenspace_distance(s.vector(1), np.zeros((s.D.n_dof, 0)), "H1", s.D, s.grid)
    with pytest.raises(ConfigurationError):
        eigenspace_distance(s.vector(1), s.vector(1), "L7", s.D, s.grid)


def test_holder_constant():
    g = build_grid(Geometry.circle(resolution=32))
    assert holder_norm(np.full(32, 2.0 + 0j), 0.5, g) == pytest.approx(2)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_holder_plane_wave(alpha):
    n = 64
    g = build_grid(Geometry.circle(resolution=n))
    h = 2 * math.pi / n
    # |e^{ix} - e^{iy}| = 2 sin(d/2) with d the circular distance j h
    best = max(2 * math.sin(j * h / 2) / (j * h) ** alpha for j in range(1, n // 2 + 1))
    f = np.exp(1j * g.points.reshape(n, -1)[:, 0])
    assert holder_norm(f, alpha, g) == pytest.approx(1 + best, rel=1e-12)


@given(st.floats(0.1, 10), st.floats(0, 2 * math.pi))
def test_holder_homogeneous(c, phi):
    g = build_grid(Geometry.interval(math.pi, 16, 1))
    f = np.random.default_rng(0).standard_normal((16, 2)) + 0j
    assert holder_norm(c * np.exp(1j * phi) * f, 0.5, g) == pytest.approx(c * holder_norm(f, 0.5, g), rel=1e-10)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
def test_holder_rejects_alpha(alpha):
    g = build_grid(Geometry.circle(resolution=16))
    with pytest.raises(ConfigurationError):
        holder_norm(np.ones(16), alpha, g)


@pytest.mark.parametrize("n,p,expected", [(1, 2, (0, 0)), (1, 4, (0, 0)), (2, 3, (1, 2)), (2, 4, (0, 1))])
def test_apriori_exponents(n, p, expected):
    assert apriori_exponents(n, p) == expected


@pytest.mark.parametrize("n,p", [(1, 1), (2, 2), (2, 1.5)])
def test_apriori_needs_p_above_n(n, p):
    with pytest.raises(ConfigurationError):
        apriori_exponents(n, p)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_step_v(a, b, c):
    assert step_v_inequality(a, b, c)


def test_apriori_bounds_hold(twin):
    a, _ = twin
    d = apriori_diagnostics(a)
    assert (d.T1, d.T2) == (0, 1)
    assert max(d.ratio_h1) < 1 and max(d.ratio_holder) < 10


def test_oscillatory_sine_circle_eigenvalues_invariant():
    # in one dimension the oscillating factor is removed by a change of variable
    geo = Geometry.circle(resolution=128)
    fam = make_family("oscillatory-sine", None, geo)
    rep = run_continuity_experiment(geo, fam, [1, 2, 4], k_max=3, l_max=2)
    for r in rep.active:
        assert max(r.eigen_error.values()) <= 1e-9


@pytest.fixture(scope="module")
def conformal():
    geo = Geometry.interval(math.pi, 128, 1)
    return run_continuity_experiment(geo, make_family("conformal-exp", None, geo), [1, 2, 4, 8],
                                     k_max=3, l_max=2)


def test_conformal_interval_errors_decay(conformal):
    first, last = conformal.active[0], conformal.active[-1]
    for k in first.eigen_error:
        assert last.eigen_error[k] < first.eigen_error[k] / 4


def test_step_one_slack_nonnegative_without_kernel(conformal):
    for r in conformal.active:
        assert min(r.step_one_slack.values()) >= -1e-9


def test_report_outputs(conformal):
    buf = io.StringIO()
    conformal.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "family,m,quantity,index,value"
    assert any(",eigen_error,3," in ln for ln in lines)
    buf = io.StringIO()
    conformal.write_json(buf)
    data = json.loads(buf.getvalue())
    assert data["members"] == [1, 2, 4, 8] and set(data["verdicts"]) >= {"eigenvalues", "projectors"}


def test_members_must_ascend():
    geo = Geometry.circle(resolution=64)
    with pytest.raises(ConfigurationError):
        run_continuity_experiment(geo, make_family("oscillatory-sine", None, geo), [2, 1])


def test_twisted_torus_sine_family_errors_decrease():
    geo = Geometry.torus(resolution=24, twists=(0.5, 0))
    fam = make_family("oscillatory-sine", None, geo)
    rep = run_continuity_experiment(geo, fam, [1, 2, 4], k_max=4, l_max=2)
    assert [r.m for r in rep.active] == [1, 2, 4]
    for k in rep.active[0].eigen_error:
        seq = [r.eigen_error[k] for r in rep.active]
        assert seq[-1] <= seq[0] + 1e-12
