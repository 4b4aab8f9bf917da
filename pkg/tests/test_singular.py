import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from calderon_lab.fem import BoundaryTrace, ConductivityField
from calderon_lab.geometry import boundary_frame, build_domain
from calderon_lab.mesh import make_mesh
from calderon_lab.singular import (
    HALF_SPACE_C0,
    PoleError,
    SingularFamily,
    c0_constant,
    c0_discrete,
    c1_constant,
    trace_f0,
    trace_f1,
    u_gradient,
    u_value,
)

HS = [0.1, 0.05, 0.025, 0.0125, 0.00625]


@pytest.fixture(scope="module")
def disk():
    return build_domain("disk")


@pytest.fixture(scope="module")
def frame(disk):
    return boundary_frame(disk, 0.0)


def test_value_at_base_point(frame):
    fam = SingularFamily(frame, 0.05)
    assert u_value(fam, [1.0, 0.0]) == pytest.approx(1 / 0.05)
    np.testing.assert_allclose(fam.pole, [1.05, 0.0], atol=1e-15)


def test_pole_evaluation_raises(frame):
    fam = SingularFamily(frame, 0.05)
    with pytest.raises(PoleError):
        u_value(fam, fam.pole)


@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.95), st.floats(0.01, 0.1))
def test_gradient_is_conjugate_derivative(s, r, h):
    # u = Im(-1/w) with w the complex shifted coordinate, so |grad u| = 1/|w|^2
    dom = build_domain("disk")
    fam = SingularFamily(boundary_frame(dom, s), h)
    x = np.array([r * math.cos(s + 1.0), r * math.sin(s + 1.0)])
    g = u_gradient(fam, x)
    d = np.linalg.norm(x - fam.pole)
    assert np.linalg.norm(g) == pytest.approx(1 / d**2, rel=1e-12)
    eps = 1e-6
    fd = [(u_value(fam, x + eps * e) - u_value(fam, x - eps * e)) / (2 * eps) for e in np.eye(2)]
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_harmonic(frame):
    fam = SingularFamily(frame, 0.1)
    x, eps = np.array([0.6, 0.2]), 1e-3
    lap = sum(u_value(fam, x + eps * e) + u_value(fam, x - eps * e) - 2 * u_value(fam, x) for e in np.eye(2))
    assert abs(lap / eps**2) < 1e-4


def test_traces(disk, frame):
    mesh = make_mesh(disk, 0.1)
    fam = SingularFamily(frame, 0.05)
    f0 = trace_f0(fam, mesh)
    np.testing.assert_allclose(f0.values, 0.05 * u_value(fam, mesh.vertices[mesh.boundary]))
    f1 = trace_f1(fam, mesh, ConductivityField.constant(4.0).boundary_trace(disk))
    np.testing.assert_allclose(f1.values, f0.values / 2)
    with pytest.raises(ValueError):
        trace_f1(fam, mesh, np.zeros(mesh.n_boundary))
    assert isinstance(ConductivityField.constant(1.0).boundary_trace(disk), BoundaryTrace)


@pytest.mark.parametrize("h", HS)
def test_disk_c0_closed_form(disk, frame, h):
    # h^2 int_disk |x - p|^-4 = pi h^2 / (|p|^2 - 1)^2 = pi / (2 + h)^2
    assert c0_constant(disk, frame, h) == pytest.approx(math.pi / (2 + h) ** 2, rel=1e-6)


@pytest.mark.parametrize("h", [0.1, 0.0125])
def test_disk_c1_against_direct_quadrature(disk, frame, h):
    fam = SingularFamily(frame, h)

    def integrand(t):
        return u_value(fam, np.array([math.cos(t), math.sin(t)])) ** 2

    val = quad(integrand, -math.pi, math.pi, points=[0.0], limit=400, epsabs=0, epsrel=1e-12)[0]
    assert c1_constant(disk, frame, h) == pytest.approx(-0.5 * h * val, rel=1e-6)


def test_disk_constants_frozen(disk, frame):
    # frozen from the two oracles above
    assert c0_constant(disk, frame, 0.0125) == pytest.approx(0.7756719641593552, rel=1e-7)
    assert c1_constant(disk, frame, 0.0125) == pytest.approx(-0.7996730470162222, rel=1e-7)


def test_disk_limits_monotone(disk, frame):
    e0 = [abs(c0_constant(disk, frame, h) - HALF_SPACE_C0) for h in HS]
    e1 = [abs(c1_constant(disk, frame, h) + HALF_SPACE_C0) for h in HS]
    assert all(a > b for a, b in zip(e0, e0[1:]))
    assert all(a > b for a, b in zip(e1, e1[1:]))
    assert e0[3] / HALF_SPACE_C0 <= 0.02 and e1[3] / HALF_SPACE_C0 <= 0.05
    assert e1[1] / HALF_SPACE_C0 <= 0.10


@pytest.mark.parametrize("h", [0.05, 0.025])
def test_square_c0_against_area_integral(h):
    sq = build_domain("square")
    fr = boundary_frame(sq, 0.5)
    # pole at (0.5, -h); |grad u|^2 = |x - pole|^-4
    val = dblquad(lambda y, x: ((x - 0.5) ** 2 + (y + h) ** 2) ** -2, 0, 1, 0, 1, epsabs=0, epsrel=1e-10)[0]
    assert c0_constant(sq, fr, h) == pytest.approx(h * h * val, rel=1e-6)


def test_square_flat_limits():
    sq = build_domain("square")
    fr = boundary_frame(sq, 0.5)
    errs = [c0_constant(sq, fr, h) - HALF_SPACE_C0 for h in (0.05, 0.025)]
    # flat boundary: only the far edges contribute, O(h^2)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert c1_constant(sq, fr, 0.0125) == pytest.approx(-HALF_SPACE_C0, rel=0.05)


def test_requires_small_h(disk, frame):
    with pytest.raises(ValueError):
        c0_constant(disk, frame, 0.2)


def test_discrete_calibration_close_to_continuum(disk, frame):
    from calderon_lab.mesh import Refinement

    h = 0.025
    mesh = make_mesh(disk, 0.1, Refinement((1.0, 0.0), 5 * h, h / 8))
    assert c0_discrete(mesh, frame, h) == pytest.approx(c0_constant(disk, frame, h), rel=5e-3)


@pytest.mark.parametrize("angle", [0.7, -2.1])
def test_rotation_equivariance(angle):
    dom = build_domain({"kind": "star", "cos": [1.0, 0.0, 0.0, 0.1], "sin": [0.0, 0.05]})
    rot = dom.rotated(angle)
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    s = 1.3
    x = dom.point(s)
    f1 = boundary_frame(dom, s)
    f2 = boundary_frame(rot, rot.param_of(R @ x))
    for h in (0.05, 0.0125):
        assert c0_constant(rot, f2, h) == pytest.approx(c0_constant(dom, f1, h), abs=1e-10)
        assert c1_constant(rot, f2, h) == pytest.approx(c1_constant(dom, f1, h), abs=1e-10)
    z = 0.5 * x + np.array([0.1, -0.2])
    assert u_value(SingularFamily(f2, 0.05), R @ z) == pytest.approx(u_value(SingularFamily(f1, 0.05), z), abs=1e-10)


@pytest.mark.parametrize("kind,s,h", [("disk", 2.0, 0.05), ("square", 0.5, 0.05), ("disk", 0.0, 0.1)])
def test_c1_negative(kind, s, h):
    dom = build_domain(kind)
    assert c1_constant(dom, boundary_frame(dom, s), h) < 0
