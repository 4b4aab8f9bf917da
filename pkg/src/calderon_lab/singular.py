"""Singular harmonic probes and their geometric calibration constants.

In the frame of a boundary point ``y`` (outward normal sent to ``-e_n``) the
probe is the half-space Poisson kernel shifted outside the domain,

    u_h(x) = z_n / |z|^n,    z = R (x - y) + h e_n,

whose pole sits at distance ``h`` beyond ``y`` along the outward normal.
Its trace concentrates at ``y`` as ``h -> 0``.  The two constants

    c0(h) = h^n int_Omega |grad u_h|^2
    c1(h) = -1/2 h^(n-1) int_dOmega u_h^2

depend on the geometry only.  Since ``u_h`` is harmonic on a neighbourhood
of the closed domain, Green's identity turns ``c0`` into the boundary
integral ``h^n int_dOmega u_h d_nu u_h``; both constants are then computed by
adaptive Gauss-Legendre quadrature on panels that shrink dyadically towards
``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import BoundaryData, BoundaryTrace, DirichletSystem
from .geometry import BoundaryFrame, Domain
from .mesh import Mesh

__all__ = [
    "PoleError",
    "QuadratureError",
    "SingularFamily",
    "u_value",
    "u_gradient",
    "trace_f0",
    "trace_f1",
    "c0_constant",
    "c1_constant",
    "c0_discrete",
    "boundary_integral",
    "HALF_SPACE_C0",
]

#: limit of c0(h) on C^1 boundaries: int over {x_2 > 1} of |x|^-4
HALF_SPACE_C0 = math.pi / 4.0

_GL20 = np.polynomial.legendre.leggauss(20)
_GL41 = np.polynomial.legendre.leggauss(41)


class PoleError(ValueError):
    """Evaluation at (or too close to) the pole of the probe."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message}: estimate={estimate:.12g}, error bound={error:.3g}")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class SingularFamily:
    """Probe ``u_h`` attached to a boundary frame."""

    frame: BoundaryFrame
    h: float
    n: int = 2

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"offset h must be positive, got {self.h}")
        if self.n != 2:
            raise ValueError("probes are evaluated in the plane (n = 2)")

    @property
    def pole(self) -> np.ndarray:
        """Global position of the singularity, ``y + h nu(y)``."""
        return self.frame.inverse(np.array([0.0, -self.h]))

    def shifted(self, x) -> np.ndarray:
        z = self.frame.forward(x)
        z[..., -1] += self.h
        return z


def _check_pole(r):
    if np.any(r < 1e-14):
        raise PoleError("evaluation point coincides with the pole of u_h")


def u_value(family: SingularFamily, x) -> np.ndarray:
    """``u_h(x) = z_n / |z|^n``."""
    z = family.shifted(x)
    r = np.linalg.norm(z, axis=-1)
    _check_pole(r)
    return z[..., -1] / r**family.n


def u_gradient(family: SingularFamily, x) -> np.ndarray:
    """Gradient in global coordinates: ``R^T (e_n/|z|^n - n z_n z/|z|^(n+2))``."""
    n = family.n
    z = family.shifted(x)
    r = np.linalg.norm(z, axis=-1)
    _check_pole(r)
    gz = -n * (z[..., -1] / r ** (n + 2))[..., None] * z
    gz[..., -1] += 1.0 / r**n
    return family.frame.to_global_vector(gz)


def trace_f0(family: SingularFamily, mesh: Mesh) -> BoundaryData:
    """Boundary data ``h^(n/2) u_h`` at the mesh boundary vertices."""
    pts = mesh.vertices[mesh.boundary]
    return BoundaryData(mesh, family.h ** (family.n / 2) * u_value(family, pts))


def trace_f1(family: SingularFamily, mesh: Mesh, gamma_boundary) -> BoundaryData:
    """Boundary data ``h^(n/2) gamma^(-1/2) u_h``.

    ``gamma_boundary`` is either a :class:`BoundaryTrace` or the array of
    gamma values at the boundary vertices.
    """
    if isinstance(gamma_boundary, BoundaryTrace):
        g = gamma_boundary(mesh.boundary_params)
    else:
        g = np.asarray(gamma_boundary, dtype=float)
    if g.shape != (mesh.n_boundary,):
        raise ValueError(f"need {mesh.n_boundary} boundary values of gamma, got shape {g.shape}")
    if not np.all(g > 0):
        raise ValueError("boundary values of gamma must be strictly positive")
    f0 = trace_f0(family, mesh)
    return BoundaryData(mesh, f0.values / np.sqrt(g))


def _panels(domain: Domain, s0: float, h: float) -> list[tuple[float, float]]:
    """Breakpoints at ``s0 +- h 2^k`` (k >= -2) and at the corners, over one period."""
    L = domain.length
    half = 0.5 * L
    offsets = [h / 4.0]
    while offsets[-1] * 2 < half:
        offsets.append(offsets[-1] * 2)
    pts = {s0 - half, s0 + half, s0}
    for o in offsets:
        pts.add(s0 - o)
        pts.add(s0 + o)
    for c in domain.corners:
        # corner positions within [s0 - L/2, s0 + L/2]
        t = (c - s0 + half) % L - half + s0
        pts.add(t)
    pts = sorted(p for p in pts if s0 - half <= p <= s0 + half)
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b - a > 1e-15 * L]


def _gl(func, a, b, rule):
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(w, func(mid + half * x)))


def boundary_integral(domain: Domain, func, s0: float, h: float, rtol: float = 1e-10, max_panels: int = 20000):
    """Adaptive integral of ``func(s)`` over one period of the boundary.

    ``func`` takes an array of arclength parameters.  Panels are bisected
    until the 20- and 41-point Gauss-Legendre rules agree to
    ``rtol * |total|``.  Returns ``(value, error_estimate)``.
    """
    work = []
    for a, b in _panels(domain, s0, h):
        coarse, fine = _gl(func, a, b, _GL20), _gl(func, a, b, _GL41)
        work.append((a, b, fine, abs(fine - coarse)))
    for _ in range(max_panels):
        total = sum(p[2] for p in work)
        scale = max(abs(total), 1e-300)
        worst = max(range(len(work)), key=lambda i: work[i][3])
        if sum(p[3] for p in work) <= rtol * scale:
            break
        a, b, _, _ = work.pop(worst)
        m = 0.5 * (a + b)
        for lo, hi in ((a, m), (m, b)):
            coarse, fine = _gl(func, lo, hi, _GL20), _gl(func, lo, hi, _GL41)
            work.append((lo, hi, fine, abs(fine - coarse)))
    total = math.fsum(p[2] for p in sorted(work))
    err = math.fsum(p[3] for p in work)
    return total, err


def _require(domain: Domain, frame: BoundaryFrame, h: float, family: SingularFamily):
    if h > frame.radius / 5.0 * (1 + 1e-12):
        raise ValueError(f"h={h:g} exceeds frame validity radius / 5 = {frame.radius / 5:g}")
    pole = family.pole
    if domain.inside(pole):
        raise PoleError(f"pole {pole} of u_h lies inside the domain")


def c0_constant(domain: Domain, frame: BoundaryFrame, h: float, rtol: float = 1e-4) -> float:
    """``h^n int_Omega |grad u_h|^2`` via Green's identity on the boundary."""
    fam = SingularFamily(frame, h)
    _require(domain, frame, h, fam)

    def integrand(s):
        x = domain.point(s)
        return u_value(fam, x) * np.einsum("...i,...i->...", u_gradient(fam, x), domain.normal(s))

    val, err = boundary_integral(domain, integrand, frame.param, h)
    val *= h**fam.n
    err *= h**fam.n
    if not err <= rtol * abs(val):
        raise QuadratureError("c0 quadrature did not converge", val, err)
    return val


def c1_constant(domain: Domain, frame: BoundaryFrame, h: float, rtol: float = 1e-4) -> float:
    """``-1/2 h^(n-1) int_dOmega u_h^2``; always negative."""
    fam = SingularFamily(frame, h)
    _require(domain, frame, h, fam)

    def integrand(s):
        return u_value(fam, domain.point(s)) ** 2

    val, err = boundary_integral(domain, integrand, frame.param, h)
    val *= -0.5 * h ** (fam.n - 1)
    err *= 0.5 * h ** (fam.n - 1)
    if not err <= rtol * abs(val):
        raise QuadratureError("c1 quadrature did not converge", val, err)
    return val


def c0_discrete(mesh: Mesh, frame: BoundaryFrame, h: float) -> float:
    """Discrete counterpart of ``c0``: P1 energy of the ``f0`` trace for gamma = 1.

    Differs from :func:`c0_constant` by the discretisation error of the
    mesh, which it shares with measurements taken on the same mesh.
    """
    family = SingularFamily(frame, h)
    system = DirichletSystem(mesh, 1.0)
    return system.energy(system.solve(trace_f0(family, mesh).values))
