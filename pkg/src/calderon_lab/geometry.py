"""Computational domains in the plane and local boundary frames.

Every domain exposes a counter-clockwise arclength parametrisation
``s in [0, L)`` of its boundary, together with unit tangents and outward
normals.  A :class:`BoundaryFrame` is the rigid motion that sends a boundary
point to the origin and its outward normal to ``-e_2``, so that near the
origin the domain lies above the graph of a function ``psi`` with
``psi(0) = psi'(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "GeometryError",
    "Domain",
    "Disk",
    "StarDomain",
    "Polygon",
    "BoundaryFrame",
    "build_domain",
    "boundary_frame",
    "local_graph",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


class GeometryError(ValueError):
    """Invalid domain descriptor or a query the geometry cannot answer."""


def _wrap(s, length):
    return np.mod(np.asarray(s, dtype=float), length)


class Domain:
    """Base class for bounded planar domains with a parametrised boundary."""

    kind: str = ""
    length: float
    corners: tuple[float, ...] = ()

    # -- boundary parametrisation (vectorised over s) --------------------
    def point(self, s) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, s) -> np.ndarray:
        raise NotImplementedError

    def normal(self, s) -> np.ndarray:
        """Outward unit normal; the boundary is traversed counter-clockwise."""
        t = self.tangent(s)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def inside(self, p) -> np.ndarray:
        raise NotImplementedError

    def curvature_bound(self) -> float:
        """Upper bound for the boundary curvature away from corners."""
        return 0.0

    def descriptor(self) -> dict:
        raise NotImplementedError

    def rotated(self, angle: float) -> "Domain":
        raise NotImplementedError

    def reflected(self) -> "Domain":
        """Mirror image in the horizontal axis."""
        raise NotImplementedError

    # -- generic helpers -------------------------------------------------
    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.point(np.linspace(0.0, self.length, 4097))
        return pts.min(axis=0), pts.max(axis=0)

    def area(self) -> float:
        """Enclosed area from the boundary integral of ``x dy``."""
        total = 0.0
        for a, b in self._smooth_pieces():
            sub = np.linspace(a, b, 65)
            for lo, hi in zip(sub[:-1], sub[1:]):
                x = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (lo + hi)
                p, t = self.point(x), self.tangent(x)
                total += 0.5 * (hi - lo) * np.dot(_GL_WEIGHTS, p[:, 0] * t[:, 1])
        return float(total)

    def _smooth_pieces(self) -> list[tuple[float, float]]:
        cuts = sorted(set(self.corners)) or [0.0]
        ends = cuts[1:] + [cuts[0] + self.length]
        return list(zip(cuts, ends))

    def is_corner(self, s: float, tol: float = 1e-12) -> bool:
        for c in self.corners:
            d = abs((s - c + 0.5 * self.length) % self.length - 0.5 * self.length)
            if d <= tol * max(1.0, self.length):
                return True
        return False

    def corner_distance(self, s: float) -> float:
        """Euclidean distance from the boundary point ``s`` to the nearest corner."""
        if not self.corners:
            return math.inf
        y = self.point(s)
        pts = self.point(np.asarray(self.corners))
        return float(np.min(np.linalg.norm(pts - y, axis=1)))

    def param_of(self, p) -> float:
        """Boundary parameter of the boundary point closest to ``p``."""
        p = np.asarray(p, dtype=float)
        grid = np.linspace(0.0, self.length, 8193)[:-1]
        d = np.linalg.norm(self.point(grid) - p, axis=1)
        k = int(np.argmin(d))
        step = grid[1] - grid[0]

        def dist2(s):
            q = self.point(s) - p
            return float(q @ q)

        lo, hi = grid[k] - step, grid[k] + step
        # golden-section refinement on a bracket known to hold the minimum
        g = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d_ = b - g * (b - a), a + g * (b - a)
        for _ in range(80):
            if dist2(c) < dist2(d_):
                b = d_
            else:
                a = c
            c, d_ = b - g * (b - a), a + g * (b - a)
        return float(_wrap(0.5 * (a + b), self.length))

    def on_boundary(self, p, tol: float = 1e-9) -> bool:
        s = self.param_of(p)
        return bool(np.linalg.norm(self.point(s) - np.asarray(p)) <= tol)


class Disk(Domain):
    """The unit disk."""

    kind = "disk"

    def __init__(self):
        self.length = 2.0 * math.pi
        self.corners = ()

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.cos(s), np.sin(s)], axis=-1)

    def tangent(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([-np.sin(s), np.cos(s)], axis=-1)

    def inside(self, p):
        p = np.asarray(p, dtype=float)
        return np.einsum("...i,...i->...", p, p) < 1.0

    def curvature_bound(self):
        return 1.0

    def area(self):
        return math.pi

    def param_of(self, p):
        p = np.asarray(p, dtype=float)
        return float(math.atan2(p[1], p[0]) % (2.0 * math.pi))

    def descriptor(self):
        return {"kind": "disk"}

    def rotated(self, angle):
        return Disk()

    def reflected(self):
        return Disk()


class StarDomain(Domain):
    """Domain ``{r < R(theta)}`` with ``R`` a finite cosine/sine series.

    ``R(theta) = sum_k a_k cos(k theta) + sum_k b_k sin(k theta)``; ``b_0`` is
    ignored.  The arclength map is tabulated with composite Gauss-Legendre
    quadrature and inverted by Newton iteration.
    """

    kind = "star"
    _PANELS = 512

    def __init__(self, cos_coeffs, sin_coeffs=()):
        a = np.atleast_1d(np.asarray(cos_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(sin_coeffs, dtype=float)) if len(sin_coeffs) else np.zeros(1)
        m = max(len(a), len(b))
        self.a = np.pad(a, (0, m - len(a)))
        self.b = np.pad(b, (0, m - len(b)))
        self.b[0] = 0.0
        self.k = np.arange(m, dtype=float)

        theta = np.linspace(0.0, 2.0 * math.pi, 20001)
        r = self.radius(theta)
        imin = int(np.argmin(r))
        rmin = min(float(r[imin]), float(self.radius(theta[imin] + np.linspace(-1e-3, 1e-3, 201)).min()))
        if rmin <= 0.0:
            raise GeometryError(f"radius function attains {rmin:.6g} <= 0; star domain requires R > 0")

        edges = np.linspace(0.0, 2.0 * math.pi, self._PANELS + 1)
        self._theta_edges = edges
        half = 0.5 * (edges[1] - edges[0])
        nodes = (edges[:-1, None] + half) + half * _GL_NODES[None, :]
        seg = half * (self._speed(nodes) @ _GL_WEIGHTS)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._cum[-1])
        self.corners = ()

    # radius function and derivatives in theta
    def radius(self, theta, der: int = 0):
        theta = np.asarray(theta, dtype=float)
        if der not in (0, 1, 2):
            raise ValueError(der)
        out = np.zeros(theta.shape)
        for k, a, b in zip(self.k, self.a, self.b):
            if a == 0.0 and b == 0.0:
                continue
            if k == 0.0:
                out = out + (a if der == 0 else 0.0)
                continue
            c, s = np.cos(k * theta), np.sin(k * theta)
            if der == 0:
                out = out + a * c + b * s
            elif der == 1:
                out = out + k * (b * c - a * s)
            else:
                out = out - k * k * (a * c + b * s)
        return out

    def _speed(self, theta):
        r, dr = self.radius(theta), self.radius(theta, 1)
        return np.sqrt(r * r + dr * dr)

    def _arclength(self, theta):
        theta = np.asarray(theta, dtype=float)
        idx = np.clip(np.searchsorted(self._theta_edges, theta, side="right") - 1, 0, self._PANELS - 1)
        lo = self._theta_edges[idx]
        half = 0.5 * (theta - lo)
        nodes = (lo + half)[..., None] + half[..., None] * _GL_NODES
        return self._cum[idx] + half * (self._speed(nodes) @ _GL_WEIGHTS)

    def theta_of(self, s):
        s = _wrap(s, self.length)
        # start from the tabulated panel ends, then Newton
        theta = np.interp(s, self._cum, self._theta_edges)
        for _ in range(30):
            step = (self._arclength(theta) - s) / self._speed(theta)
            theta = np.clip(theta - step, 0.0, 2.0 * math.pi)
            if np.all(np.abs(step) < 4e-16 * 2.0 * math.pi):
                break
        return theta

    def point(self, s):
        th = self.theta_of(s)
        r = self.radius(th)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def tangent(self, s):
        th = self.theta_of(s)
        r, dr = self.radius(th), self.radius(th, 1)
        v = np.stack([dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th)], axis=-1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def inside(self, p):
        p = np.asarray(p, dtype=float)
        th = np.arctan2(p[..., 1], p[..., 0])
        return np.hypot(p[..., 0], p[..., 1]) < self.radius(th)

    def curvature_bound(self):
        th = np.linspace(0.0, 2.0 * math.pi, 8193)
        r, d1, d2 = self.radius(th), self.radius(th, 1), self.radius(th, 2)
        kappa = np.abs(r * r + 2 * d1 * d1 - r * d2) / (r * r + d1 * d1) ** 1.5
        return float(kappa.max())

    def descriptor(self):
        return {"kind": "star", "cos": self.a.tolist(), "sin": self.b.tolist()}

    def rotated(self, angle):
        # R(theta - angle) re-expanded in the same basis
        c, s = np.cos(self.k * angle), np.sin(self.k * angle)
        return StarDomain(self.a * c - self.b * s, self.a * s + self.b * c)

    def reflected(self):
        return StarDomain(self.a, -self.b)


class Polygon(Domain):
    """Simple polygon; vertices are reordered counter-clockwise."""

    kind = "polygon"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least three 2-D vertices")
        signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if abs(signed) < 1e-14:
            raise GeometryError("polygon has zero area")
        if signed < 0:
            v = v[::-1].copy()
        self.vertices = v
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths < 1e-12):
            raise GeometryError("polygon has repeated vertices")
        _check_simple(v)
        self._edges = edges
        self._lengths = lengths
        self._cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self._cum[-1])
        self.corners = tuple(float(c) for c in self._cum[:-1])

    def _locate(self, s):
        s = _wrap(s, self.length)
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self.vertices) - 1)
        return idx, s - self._cum[idx]

    def point(self, s):
        idx, t = self._locate(s)
        unit = self._edges[idx] / self._lengths[idx][..., None]
        return self.vertices[idx] + t[..., None] * unit

    def tangent(self, s):
        idx, _ = self._locate(s)
        return self._edges[idx] / self._lengths[idx][..., None]

    def inside(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        inside = np.zeros(np.shape(x), dtype=bool)
        v, w = self.vertices, np.roll(self.vertices, -1, axis=0)
        for (x0, y0), (x1, y1) in zip(v, w):
            crosses = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (x < xint)
        return inside

    def area(self):
        v = self.vertices
        return float(0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    def descriptor(self):
        return {"kind": "polygon", "vertices": self.vertices.tolist()}

    def rotated(self, angle):
        c, s = math.cos(angle), math.sin(angle)
        return Polygon(self.vertices @ np.array([[c, s], [-s, c]]))

    def reflected(self):
        return Polygon(self.vertices * np.array([1.0, -1.0]))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 <= 0) and (d3 * d4 <= 0)


def _check_simple(v):
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise GeometryError(f"polygon is not simple: edges {i} and {j} intersect")


def build_domain(desc) -> Domain:
    """Construct a domain from a descriptor.

    Accepted descriptors (dicts, or a bare string for the disk)::

        {"kind": "disk"}
        {"kind": "star", "cos": [1.0, 0, 0, 0.3], "sin": []}
        {"kind": "polygon", "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]}

    ``"square"`` is accepted as shorthand for the unit square.
    """
    if isinstance(desc, Domain):
        return desc
    if isinstance(desc, str):
        desc = {"kind": desc}
    kind = str(desc.get("kind", "")).lower().replace("_", "-")
    if kind in ("disk", "unit-disk"):
        return Disk()
    if kind == "square":
        return Polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if kind in ("star", "star-shaped"):
        return StarDomain(desc.get("cos", [1.0]), desc.get("sin", ()))
    if kind == "polygon":
        return Polygon(desc["vertices"])
    raise GeometryError(f"unknown domain kind {desc.get('kind')!r}")


@dataclass(frozen=True, eq=False)
class BoundaryFrame:
    """Rigid motion ``x -> R (x - y)`` with ``R nu(y) = -e_2`` and ``det R = +1``.

    ``radius`` is the validity radius of the local graph description and
    ``lipschitz`` the largest slope of ``psi`` observed inside it.
    """

    base: np.ndarray
    rotation: np.ndarray
    param: float
    radius: float
    lipschitz: float = 0.0
    curvature: float = 0.0
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0]))

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.base) @ self.rotation.T

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z @ self.rotation + self.base

    def to_local_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def to_global_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation


def _rotation_for_normal(nu) -> np.ndarray:
    # rotation by phi with phi = -pi/2 - angle(nu)
    a = math.atan2(nu[1], nu[0])
    phi = -0.5 * math.pi - a
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _star_radius(domain: Domain, s: float, frame_rot, y) -> tuple[float, float]:
    """Validity radius and slope bound by walking the boundary away from ``s``."""
    m = 4096
    ds = domain.length / m
    offsets = np.arange(1, m // 2) * ds
    best = 0.5
    lip = 0.0
    for sign in (1.0, -1.0):
        ss = s + sign * offsets
        loc = (domain.point(ss) - y) @ frame_rot.T
        tl = domain.tangent(ss) @ frame_rot.T
        dist = np.linalg.norm(loc, axis=1)
        ok = tl[:, 0] >= 0.2
        bad = np.flatnonzero(~ok)
        # arc stops at the first point where the graph condition fails or the
        # walk starts coming back towards y
        stop = bad[0] if len(bad) else len(ss)
        back = np.flatnonzero(np.diff(dist) < 0)
        if len(back):
            stop = min(stop, back[0] + 1)
        if stop < len(ss):
            best = min(best, 0.5 * dist[stop])
        inner = dist[:stop] < best
        if np.any(inner):
            lip = max(lip, float(np.max(np.abs(tl[:stop][inner, 1] / tl[:stop][inner, 0]))))
    return best, lip


def boundary_frame(domain: Domain, s: float) -> BoundaryFrame:
    """Local frame at the boundary point with parameter ``s``.

    Raises
    ------
    GeometryError
        If ``s`` is a corner, where the normal is undefined.
    """
    s = float(_wrap(s, domain.length))
    if domain.is_corner(s, tol=1e-9):
        raise GeometryError(f"normal undefined at corner parameter s={s:.12g}")
    y = domain.point(s)
    nu = domain.normal(s)
    rot = _rotation_for_normal(nu)
    if isinstance(domain, Disk):
        delta = 0.5
        lip = delta / math.sqrt(1.0 - delta * delta)
        curv = 1.0
    elif isinstance(domain, Polygon):
        delta = 0.5 * domain.corner_distance(s)
        lip, curv = 0.0, 0.0
    else:
        delta, lip = _star_radius(domain, s, rot, y)
        curv = domain.curvature_bound()
    return BoundaryFrame(
        base=y, rotation=rot, param=s, radius=float(delta), lipschitz=float(lip), curvature=float(curv), normal=nu
    )


def local_graph(domain: Domain, frame: BoundaryFrame, xp: float) -> float:
    """Height ``psi(x')`` of the boundary above the tangent line in the frame."""
    xp = float(xp)
    if abs(xp) > frame.radius * (1.0 + 1e-12):
        raise GeometryError(f"|x'|={abs(xp):.6g} exceeds the frame validity radius {frame.radius:.6g}")
    if xp == 0.0:
        return 0.0

    def g(t):
        return float(frame.forward(domain.point(frame.param + t))[0]) - xp

    # local x' is increasing in arclength along the graph arc
    step = math.copysign(frame.radius / 8.0, xp)
    a, b = 0.0, step
    for _ in range(64):
        if g(a) * g(b) <= 0.0:
            break
        a, b = b, b + step
    else:
        raise GeometryError("failed to bracket the local graph")
    t = brentq(g, min(a, b), max(a, b), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(frame.forward(domain.point(frame.param + t))[1])
