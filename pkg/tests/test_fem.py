import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import iv

from calderon_lab.fem import (
    BoundaryData,
    BoundaryTrace,
    ConductivityField,
    DtnOracle,
    assemble,
    dtn_bilin,
    dtn_quad,
    solve_dirichlet,
)
from calderon_lab.geometry import build_domain
from calderon_lab.mesh import make_mesh


@pytest.fixture(scope="module")
def disk():
    return build_domain("disk")


@pytest.fixture(scope="module")
def mesh(disk):
    return make_mesh(disk, 0.05)


@pytest.fixture(scope="module")
def fine_mesh(disk):
    return make_mesh(disk, 0.025)


def _fourier(mesh, coeffs):
    th = mesh.boundary_params
    v = np.zeros_like(th)
    for k, (a, b) in enumerate(coeffs, start=1):
        v += a * np.cos(k * th) + b * np.sin(k * th)
    return BoundaryData(mesh, v)


def test_stiffness_symmetric_with_constant_kernel(mesh):
    K = assemble(mesh, ConductivityField("radial", b=0.5))
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    np.testing.assert_allclose(K @ np.ones(mesh.n_vertices), 0.0, atol=1e-11)
    # smallest eigenvalue is the constant mode
    vals = spla.eigsh(K, k=2, sigma=-1e-3, which="LM", return_eigenvectors=False)
    assert min(vals) > -1e-10


def test_linear_data_reproduced_exactly(mesh):
    f = BoundaryData.from_function(mesh, lambda p: 0.3 * p[:, 0] - 1.2 * p[:, 1] + 0.7)
    u = solve_dirichlet(mesh, ConductivityField.constant(3.0), f)
    exact = 0.3 * mesh.vertices[:, 0] - 1.2 * mesh.vertices[:, 1] + 0.7
    np.testing.assert_allclose(u, exact, atol=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_dtn_of_fourier_modes(mesh, k):
    # harmonic extension r^k cos k theta has energy k pi
    q = dtn_quad(DtnOracle(ConductivityField.constant(1.0)), _fourier(mesh, [(0, 0)] * (k - 1) + [(1, 0)]))
    assert q == pytest.approx(k * math.pi, rel=0.01)


def test_exponential_conductivity_closed_form(fine_mesh):
    # u = exp(-a.x) solves div(exp(a.x) grad u) = 0 with energy 2 pi |a| I_1(|a|) on the unit disk
    a = np.array([0.5, 0.0])
    f = BoundaryData.from_function(fine_mesh, lambda p: np.exp(-p @ a))
    q = DtnOracle(ConductivityField("exp", a=a)).quad(f)
    assert q == pytest.approx(2 * math.pi * 0.5 * iv(1, 0.5), rel=2e-3)


def test_conductivity_scaling(mesh):
    f = _fourier(mesh, [(0.3, -0.1), (0.2, 0.5)])
    g = ConductivityField("exp", a=(0.2, -0.4))
    q1 = DtnOracle(g).quad(f)
    q3 = DtnOracle(g.scaled(3.0)).quad(f)
    assert q3 == pytest.approx(3 * q1, rel=1e-12)


coef = st.floats(-1.0, 1.0, allow_nan=False)


@given(st.lists(st.tuples(coef, coef), min_size=4, max_size=4), st.lists(st.tuples(coef, coef), min_size=4, max_size=4))
def test_bilinear_form_properties(mesh, cf, cg):
    oracle = DtnOracle(ConductivityField("radial", b=0.5))
    f, g = _fourier(mesh, cf), _fourier(mesh, cg)
    qf, qg = oracle.quad(f), oracle.quad(g)
    assert qf >= -1e-12 and qg >= -1e-12
    b1, b2 = dtn_bilin(oracle, f, g), dtn_bilin(oracle, g, f)
    scale = max(math.sqrt(qf * qg), 1e-12)
    assert abs(b1 - b2) <= 1e-10 * scale
    # polarisation identity
    pol = 0.25 * (oracle.quad(f + g) - oracle.quad(f - g))
    assert abs(pol - b1) <= 1e-9 * max(qf + qg, 1e-12)
    # Cauchy-Schwarz
    assert b1 * b1 <= qf * qg * (1 + 1e-9) + 1e-20


def test_query_counter_and_surface(mesh):
    oracle = DtnOracle(ConductivityField.constant(2.0))
    f = _fourier(mesh, [(1, 0)])
    oracle.quad(f)
    oracle.bilin(f, f)
    assert oracle.queries == 2
    assert {n for n in dir(oracle) if not n.startswith("_")} == {"quad", "bilin", "queries"}


def test_jitter_is_seeded(mesh):
    f = _fourier(mesh, [(1, 0)])
    clean = DtnOracle(ConductivityField.constant(1.0)).quad(f)
    a = DtnOracle(ConductivityField.constant(1.0), jitter=0.01, seed=5).quad(f)
    b = DtnOracle(ConductivityField.constant(1.0), jitter=0.01, seed=5).quad(f)
    assert a == b != clean


def test_boundary_data_validation(mesh, disk):
    with pytest.raises(ValueError):
        BoundaryData(mesh, np.zeros(3))
    with pytest.raises(ValueError):
        BoundaryData(mesh, np.full(mesh.n_boundary, np.nan))
    other = make_mesh(disk, 0.1)
    with pytest.raises(ValueError):
        BoundaryData(mesh, np.zeros(mesh.n_boundary)) + BoundaryData(other, np.zeros(other.n_boundary))


@pytest.mark.parametrize("kind", ["exp", "radial", "bump"])
@given(x=st.floats(-0.9, 0.9), y=st.floats(-0.4, 0.4))
def test_gradient_matches_finite_differences(kind, x, y):
    g = ConductivityField(kind, amplitude=0.7, center=(0.1, 0.0), width=0.6, a=(0.4, -0.3), b=0.5)
    p = np.array([x, y])
    eps = 1e-6
    fd = [(g(p + eps * e) - g(p - eps * e)) / (2 * eps) for e in np.eye(2)]
    np.testing.assert_allclose(g.gradient(p), fd, atol=1e-7)


def test_presets_and_bounds():
    with pytest.raises(ValueError):
        ConductivityField("constant", c=-1.0)
    with pytest.raises(ValueError):
        ConductivityField("nonsense")
    c, C = ConductivityField("radial", b=0.5).bounds(([-1, -1], [1, 1]))
    assert (c, C) == (1.0, 2.0)


def test_boundary_trace_interpolants():
    L = 2 * math.pi
    s = np.arange(16) * L / 16
    v = 2 + np.cos(s)
    for kind in ("linear", "spline"):
        tr = BoundaryTrace.from_samples(s, v, L, kind)
        np.testing.assert_allclose(tr(s), v, atol=1e-14)
        np.testing.assert_allclose(tr(s + L), v, atol=1e-13)
    mid = s[:-1] + 0.5 * L / 16
    lin = BoundaryTrace.from_samples(s, v, L)(mid)
    np.testing.assert_allclose(lin, 0.5 * (v[:-1] + v[1:]), atol=1e-14)
    with pytest.raises(ValueError):
        BoundaryTrace.from_samples(s, v - 5, L)


def test_reference_triangle_element_matrix():
    from calderon_lab.fem import assemble
    from calderon_lab.mesh import Mesh

    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
               np.array([0, 1, 2]), np.array([0.0, 1.0, 2.0 + 2**0.5 - 1]), 2.0 + 2**0.5)
    expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
    np.testing.assert_allclose(assemble(tri, 1.0).toarray(), expected, atol=1e-15)
