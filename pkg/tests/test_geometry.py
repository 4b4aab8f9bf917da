import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calderon_lab.geometry import (
    Disk,
    GeometryError,
    Polygon,
    StarDomain,
    boundary_frame,
    build_domain,
    local_graph,
)

STAR = {"kind": "star", "cos": [1.0, 0.0, 0.0, 0.3]}
# trapezoid rule on the periodic speed sqrt(r^2 + r'^2), 2^16 nodes
STAR_LENGTH = 7.426639914630699


def _trapezoid_length(c3=0.3, m=1 << 16):
    th = np.arange(m) * 2 * np.pi / m
    r = 1 + c3 * np.cos(3 * th)
    dr = -3 * c3 * np.sin(3 * th)
    return float(np.mean(np.sqrt(r * r + dr * dr)) * 2 * np.pi)


def test_star_length_matches_trapezoid_oracle():
    dom = build_domain(STAR)
    assert dom.length == pytest.approx(STAR_LENGTH, rel=1e-13)
    assert _trapezoid_length() == pytest.approx(STAR_LENGTH, rel=1e-13)


def test_disk_descriptor_and_point():
    d = build_domain("disk")
    assert isinstance(d, Disk)
    assert d.length == pytest.approx(2 * math.pi)
    np.testing.assert_allclose(d.point(0.0), [1.0, 0.0])
    np.testing.assert_allclose(d.normal(0.0), [1.0, 0.0])


def test_square_shorthand_and_polygon_orientation():
    sq = build_domain("square")
    assert sq.length == pytest.approx(4.0)
    assert len(sq.corners) == 4
    cw = Polygon([[0, 0], [0, 1], [1, 1], [1, 0]])
    # stored counter-clockwise: outward normal of the bottom edge points down
    s_bottom = [c for c in np.linspace(0, 4, 81) if np.allclose(cw.point(c)[1], 0) and not cw.is_corner(c)][0]
    np.testing.assert_allclose(cw.normal(s_bottom), [0.0, -1.0], atol=1e-14)


@pytest.mark.parametrize(
    "desc",
    [
        {"kind": "star", "cos": [1.0, 1.2]},
        {"kind": "polygon", "vertices": [[0, 0], [1, 1], [1, 0], [0, 1]]},
        {"kind": "polygon", "vertices": [[0, 0], [1, 0]]},
        {"kind": "triangle-soup"},
    ],
)
def test_invalid_descriptors_raise(desc):
    with pytest.raises(GeometryError):
        build_domain(desc)


def test_frame_at_corner_raises():
    sq = build_domain("square")
    with pytest.raises(GeometryError, match="corner"):
        boundary_frame(sq, sq.corners[1])


def test_frame_orientation_and_determinant():
    d = build_domain("disk")
    fr = boundary_frame(d, 0.0)
    np.testing.assert_allclose(fr.rotation, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-15)
    assert np.linalg.det(fr.rotation) == pytest.approx(1.0)
    np.testing.assert_allclose(fr.to_local_vector(d.normal(0.0)), [0.0, -1.0], atol=1e-15)


def test_frame_radius_rules():
    assert boundary_frame(build_domain("disk"), 1.0).radius == 0.5
    sq = build_domain("square")
    fr = boundary_frame(sq, 0.5)
    assert fr.radius == pytest.approx(0.25)


def test_disk_local_graph_closed_form():
    d = build_domain("disk")
    fr = boundary_frame(d, 0.0)
    # psi(x') = 1 - sqrt(1 - x'^2) on the unit circle
    assert local_graph(d, fr, 0.1) == pytest.approx(0.005012562893380041, abs=1e-15)
    assert local_graph(d, fr, -0.3) == pytest.approx(1 - math.sqrt(1 - 0.09), abs=1e-14)


def test_local_graph_beyond_radius_raises():
    d = build_domain("disk")
    with pytest.raises(GeometryError):
        local_graph(d, boundary_frame(d, 0.0), 0.6)


@pytest.mark.parametrize("desc", ["disk", STAR, "square"])
def test_frame_round_trip(desc):
    dom = build_domain(desc)
    rng = np.random.default_rng(1)
    for s in rng.uniform(0, dom.length, 5):
        if dom.is_corner(s, 1e-6):
            continue
        fr = boundary_frame(dom, s)
        x = rng.uniform(-2, 2, size=(1000, 2))
        np.testing.assert_allclose(fr.inverse(fr.forward(x)), x, atol=1e-12)


@given(st.floats(0.0, 2 * math.pi), st.floats(-1.0, 1.0))
def test_disk_graph_bounds(s, t):
    d = build_domain("disk")
    fr = boundary_frame(d, s)
    xp = t * fr.radius
    psi = local_graph(d, fr, xp)
    assert abs(psi) <= fr.lipschitz * abs(xp) + 1e-14
    # curvature one: psi <= |x'|^2 for |x'| <= 1/2
    assert abs(psi) <= abs(xp) ** 2 + 1e-14


@given(st.floats(0.0, 1.0), st.floats(-1.0, 1.0))
def test_star_graph_bounds(u, t):
    dom = build_domain(STAR)
    fr = boundary_frame(dom, u * dom.length)
    xp = t * fr.radius
    psi = local_graph(dom, fr, xp)
    assert abs(psi) <= fr.lipschitz * abs(xp) * (1 + 1e-9) + 1e-13
    assert abs(psi) <= fr.curvature * xp * xp + 1e-13


def test_polygon_graph_is_flat():
    sq = build_domain("square")
    fr = boundary_frame(sq, 0.4)
    for xp in np.linspace(-fr.radius, fr.radius, 7):
        assert abs(local_graph(sq, fr, xp)) <= 1e-14


def test_area_of_presets():
    assert build_domain("disk").area() == pytest.approx(math.pi, rel=1e-14)
    assert build_domain("square").area() == pytest.approx(1.0, rel=1e-14)
    # area of r = 1 + 0.3 cos 3t is pi (1 + 0.3^2 / 2)
    assert build_domain(STAR).area() == pytest.approx(math.pi * (1 + 0.045), rel=1e-12)


@given(st.floats(-math.pi, math.pi))
def test_rotation_and_reflection_preserve_length(angle):
    dom = build_domain(STAR)
    assert dom.rotated(angle).length == pytest.approx(dom.length, rel=1e-12)
    assert dom.reflected().length == pytest.approx(dom.length, rel=1e-12)


def test_reflected_star_mirrors_points():
    dom = StarDomain([1.0, 0.1, 0.0, 0.2], [0.0, 0.15])
    ref = dom.reflected()
    p = dom.point(1.3)
    q = ref.point(ref.param_of(p * [1, -1]))
    np.testing.assert_allclose(q, p * [1, -1], atol=1e-9)
