"""Conforming quality triangulations with optional local refinement.

Boundary vertices are placed exactly on the boundary curve with a graded
spacing that follows the requested size field; the interior is filled by
constrained Delaunay refinement (Shewchuk's Triangle) with boundary Steiner
points suppressed, so every boundary vertex lies on the true curve.  A
refinement loop then splits triangles until every element diameter is below
the size field evaluated at its vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import triangle

from .geometry import Disk, Domain, GeometryError

# boundary spacing relative to the size field; later entries are fallbacks
_BOUNDARY_FACTORS = (0.8, 0.7, 0.9, 0.6)

__all__ = ["Mesh", "Refinement", "MeshError", "make_mesh", "triangle_quality"]


class MeshError(GeometryError):
    """Raised when the requested quality or size bounds cannot be met."""


@dataclass(frozen=True)
class Refinement:
    """Ball ``B(center, radius)`` inside which elements are at most ``size`` across.

    Outside the ball the size grows linearly with slope ``grading`` up to the
    global target size.
    """

    center: tuple[float, float]
    radius: float
    size: float
    grading: float = 0.3


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangulation of a domain.

    ``boundary`` lists the boundary vertex indices in counter-clockwise
    order and ``boundary_params`` their arclength parameters;
    ``boundary_edges[k]`` joins ``boundary[k]`` and ``boundary[k+1]``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    boundary_params: np.ndarray
    domain_length: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.stack([self.boundary, np.roll(self.boundary, -1)], axis=1)

    @property
    def edge_params(self) -> np.ndarray:
        """Parameter interval ``[s_k, s_{k+1}]`` of each boundary edge."""
        s0 = self.boundary_params
        s1 = np.roll(s0, -1).copy()
        s1[-1] += self.domain_length
        return np.stack([s0, s1], axis=1)

    @property
    def is_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.boundary] = True
        return flag

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)

    def min_angles(self) -> np.ndarray:
        return triangle_quality(self.vertices, self.triangles)


def triangle_quality(vertices, triangles) -> np.ndarray:
    """Smallest interior angle of each triangle, in degrees."""
    p = vertices[triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    cos = np.stack(
        [(b * b + c * c - a * a) / (2 * b * c), (c * c + a * a - b * b) / (2 * c * a), (a * a + b * b - c * c) / (2 * a * b)],
        axis=1,
    )
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).min(axis=1)


def _size_field(size: float, refinement: Refinement | None):
    if refinement is None:
        return lambda x: np.full(np.shape(x)[:-1], size)
    c = np.asarray(refinement.center, dtype=float)

    def field(x):
        d = np.linalg.norm(np.asarray(x) - c, axis=-1)
        return np.minimum(size, refinement.size + refinement.grading * np.maximum(d - refinement.radius, 0.0))

    return field


def _place(a: float, b: float, domain: Domain, sizefn, anchor: float | None) -> np.ndarray:
    """Graded parameter values in ``[a, b)`` following the size field."""
    n_coarse = 4096
    grid = np.linspace(a, b, n_coarse + 1)
    if anchor is not None:
        r = np.geomspace(1e-7, 1.0, 4000) * min(0.5 * (b - a), 1.0)
        fine = anchor + np.concatenate([-r[::-1], r])
        grid = np.union1d(grid, fine[(fine > a) & (fine < b)])
    density = 1.0 / sizefn(domain.point(grid))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))])
    m = max(int(math.ceil(cum[-1] * 1.02)), 3)
    if anchor is None:
        targets = np.arange(m) * cum[-1] / m
    else:
        # put a vertex exactly at the anchor
        k0 = float(np.interp(anchor, grid, cum))
        step = cum[-1] / m
        targets = np.sort(np.mod(k0 + np.arange(m) * step - cum[0], cum[-1]))
    return np.interp(targets, cum, grid)


def _boundary_params(domain: Domain, sizefn, anchor: float | None) -> np.ndarray:
    L = domain.length
    if domain.corners:
        corners = sorted(domain.corners)
        params = []
        for c0, c1 in zip(corners, corners[1:] + [corners[0] + L]):
            anc = None
            if anchor is not None:
                t = anchor if anchor >= c0 else anchor + L
                anc = t if c0 < t < c1 else None
            params.append(_place(c0, c1, domain, sizefn, anc))
        return np.mod(np.concatenate(params), L)
    if anchor is None:
        return _place(0.0, L, domain, sizefn, None)
    # start the sweep half a period before the anchor so the fine zone is interior
    start = anchor - 0.5 * L
    return np.mod(_place(start, start + L, domain, sizefn, anchor), L)


def make_mesh(
    domain: Domain,
    size: float,
    refinement: Refinement | None = None,
    min_angle: float = 25.0,
    max_passes: int = 40,
) -> Mesh:
    """Triangulate ``domain`` with target element size ``size``.

    Parameters
    ----------
    domain : Domain
    size : float
        Global bound on element diameters.
    refinement : Refinement, optional
        Local refinement ball.  When its centre lies on the boundary that
        boundary point becomes a mesh vertex.
    min_angle : float
        Quality bound in degrees handed to the Delaunay refiner; the result is
        checked against the 20 degree floor.
    """
    if not size > 0:
        raise MeshError(f"target size must be positive, got {size}")
    if refinement is not None and not 0 < refinement.size <= size:
        raise MeshError(f"local size {refinement.size} must lie in (0, size={size}]")
    if min_angle > 33.0:
        raise MeshError(f"minimum angle {min_angle} exceeds the 33 degree bound the refiner can guarantee")

    sizefn = _size_field(size, refinement)
    anchor = None
    if refinement is not None:
        c = np.asarray(refinement.center, dtype=float)
        s_c = domain.param_of(c)
        if np.linalg.norm(domain.point(s_c) - c) < 1e-9:
            anchor = s_c
        elif not domain.inside(c):
            # the ball still matters where it overlaps the domain; grade from its nearest boundary point
            anchor = s_c

    failures = []
    for factor in _BOUNDARY_FACTORS:
        try:
            mesh = _triangulate(domain, size, sizefn, anchor, factor, min_angle, max_passes)
            _validate(mesh, domain)
            return mesh
        except MeshError as exc:
            failures.append(str(exc))
    raise MeshError("; ".join(dict.fromkeys(failures)))


def _triangulate(domain, size, sizefn, anchor, factor, min_angle, max_passes) -> Mesh:
    # boundary edges a bit shorter than the size field leave room for the
    # refiner: boundary Steiner points are disabled
    params = _boundary_params(domain, lambda x: factor * sizefn(x), anchor)
    order = np.argsort(params)
    params = params[order]
    # drop near-duplicates produced by wrap-around
    keep = np.concatenate([[True], np.diff(params) > 1e-13])
    if params[-1] + 1e-13 > params[0] + domain.length:
        keep[-1] = False
    params = params[keep]
    bpts = domain.point(params)
    nb = len(bpts)
    segs = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], axis=1)

    area0 = math.sqrt(3.0) / 4.0 * size * size
    opts = f"pq{min_angle:g}Ya{area0:.17g}Q"
    out = triangle.triangulate({"vertices": bpts, "segments": segs}, opts)

    stalled, last_bad = 0, None
    for _ in range(max_passes):
        v, t = out["vertices"], out["triangles"]
        p = v[t]
        diam = np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
        target = np.minimum(sizefn(p).min(axis=1), sizefn(p.mean(axis=1)))
        bad = diam > target
        if not np.any(bad):
            break
        n_bad = int(bad.sum())
        stalled = stalled + 1 if last_bad is not None and n_bad >= last_bad else 0
        last_bad = n_bad
        if stalled >= 4:
            raise MeshError(f"element diameter bound unreachable: {n_bad} triangles exceed the size field")
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        maxarea = np.where(bad, np.minimum(0.5 * area, math.sqrt(3) / 4 * target**2), -1.0)
        out = triangle.triangulate(
            {"vertices": v, "segments": out["segments"], "triangles": t, "triangle_max_area": maxarea},
            f"rpq{min_angle:g}YaQ",
        )
    else:
        raise MeshError(f"size field not met after {max_passes} refinement passes")

    v, t = out["vertices"], np.asarray(out["triangles"], dtype=np.int64)
    # Triangle keeps input vertices first and in order
    if not np.allclose(v[:nb], bpts, atol=0.0, rtol=0.0):
        raise MeshError("boundary vertices were reordered by the triangulator")
    p = v[t]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flip = signed < 0
    t[flip] = t[flip][:, [0, 2, 1]]

    return Mesh(
        vertices=np.ascontiguousarray(v),
        triangles=t,
        boundary=np.arange(nb),
        boundary_params=params,
        domain_length=domain.length,
    )


def _validate(mesh: Mesh, domain: Domain) -> None:
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise MeshError(f"degenerate triangle {int(np.argmin(areas))} (signed area {areas.min():.3e})")
    worst = mesh.min_angles().min()
    if worst < 20.0:
        raise MeshError(f"minimum angle {worst:.2f} deg violates the 20 deg bound")
    if isinstance(domain, Disk):
        r = np.linalg.norm(mesh.vertices[mesh.boundary], axis=1)
        if np.max(np.abs(r - 1.0)) > 1e-12:
            raise MeshError("boundary vertex off the unit circle")
