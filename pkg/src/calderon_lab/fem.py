"""P1 forward solver for ``div(gamma grad u) = 0`` and the Dirichlet-to-Neumann form.

The DtN map is only ever accessed through its quadratic and bilinear forms,
evaluated as energies of discrete gamma-harmonic extensions:

    <Lambda f, g> = int_Omega gamma grad u_f . grad u_g

Conductivities are evaluated at the three edge midpoints of each triangle.
Dirichlet data is imposed by elimination, leaving an SPD interior system.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .mesh import Mesh

__all__ = [
    "FEMError",
    "ConductivityField",
    "BoundaryData",
    "BoundaryTrace",
    "DirichletSystem",
    "DtnOracle",
    "assemble",
    "solve_dirichlet",
    "dtn_quad",
    "dtn_bilin",
]


class FEMError(RuntimeError):
    """Assembly or linear-solver failure."""


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m] ** 2))
    return out


def _bump_derivative(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t < 1.0
    tm = t[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - tm**2)) * (-2.0 * tm / (1.0 - tm**2) ** 2)
    return out


class ConductivityField:
    """Closed-form conductivity presets.

    ``constant``  gamma = c
    ``exp``       gamma = exp(a . x)
    ``radial``    gamma = 1 + b |x|^2
    ``bump``      gamma = 1 + A chi(|x - x0| / rho), chi(t) = exp(1 - 1/(1 - t^2)) on t < 1

    ``scale`` multiplies any preset; it is what :meth:`scaled` changes.
    """

    KINDS = ("constant", "exp", "radial", "bump")

    def __init__(self, kind: str, scale: float = 1.0, **params):
        if kind not in self.KINDS:
            raise ValueError(f"unknown conductivity preset {kind!r}; expected one of {self.KINDS}")
        if not scale > 0:
            raise ValueError("conductivity scale must be positive")
        self.kind = kind
        self.scale = float(scale)
        if kind == "constant":
            self.c = float(params.get("c", 1.0))
            if not self.c > 0:
                raise ValueError("constant conductivity must be positive")
        elif kind == "exp":
            self.a = np.asarray(params.get("a", (0.5, 0.0)), dtype=float)
        elif kind == "radial":
            self.b = float(params.get("b", 0.5))
            if self.b <= -1.0:
                raise ValueError("radial preset needs b > -1 on the unit disk")
        else:
            self.amplitude = float(params.get("amplitude", 0.5))
            self.center = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)
            self.width = float(params.get("width", 0.5))
            if self.amplitude <= -1.0 or self.width <= 0:
                raise ValueError("bump preset needs amplitude > -1 and width > 0")

    @classmethod
    def constant(cls, c: float = 1.0):
        return cls("constant", c=c)

    def params(self) -> dict:
        if self.kind == "constant":
            return {"c": self.c}
        if self.kind == "exp":
            return {"a": self.a.tolist()}
        if self.kind == "radial":
            return {"b": self.b}
        return {"amplitude": self.amplitude, "center": self.center.tolist(), "width": self.width}

    def scaled(self, factor: float) -> "ConductivityField":
        return ConductivityField(self.kind, scale=self.scale * factor, **self.params())

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            g = np.full(x.shape[:-1], self.c)
        elif self.kind == "exp":
            g = np.exp(x @ self.a)
        elif self.kind == "radial":
            g = 1.0 + self.b * np.einsum("...i,...i->...", x, x)
        else:
            r = np.linalg.norm(x - self.center, axis=-1)
            g = 1.0 + self.amplitude * _bump(r / self.width)
        return self.scale * g

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            g = np.zeros(x.shape)
        elif self.kind == "exp":
            g = np.exp(x @ self.a)[..., None] * self.a
        elif self.kind == "radial":
            g = 2.0 * self.b * x
        else:
            d = x - self.center
            r = np.linalg.norm(d, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r[..., None] > 0, d / r[..., None], 0.0)
            g = (self.amplitude / self.width) * _bump_derivative(r / self.width)[..., None] * unit
        return self.scale * g

    def grad_log(self, x) -> np.ndarray:
        return self.gradient(x) / self(x)[..., None]

    def grad_sqrt(self, x) -> np.ndarray:
        return self.gradient(x) / (2.0 * np.sqrt(self(x)))[..., None]

    def bounds(self, box) -> tuple[float, float]:
        """Lower and upper bounds ``(c, C)`` of gamma over an axis-aligned box."""
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        if self.kind == "constant":
            c = C = self.c
        elif self.kind == "exp":
            vals = np.exp(corners @ self.a)
            c, C = vals.min(), vals.max()
        elif self.kind == "radial":
            nearest = np.clip(0.0, lo, hi)
            r2min = float(nearest @ nearest)
            r2max = float(np.max(np.einsum("ij,ij->i", corners, corners)))
            vals = (1.0 + self.b * r2min, 1.0 + self.b * r2max)
            c, C = min(vals), max(vals)
        else:
            c, C = min(1.0, 1.0 + self.amplitude), max(1.0, 1.0 + self.amplitude)
        c, C = self.scale * c, self.scale * C
        if not c > 0:
            raise ValueError(f"conductivity lower bound {c} is not positive on the box")
        return float(c), float(C)

    def boundary_trace(self, domain) -> "BoundaryTrace":
        """Restriction of gamma to the boundary, as a function of arclength."""
        return BoundaryTrace(lambda s: self(domain.point(s)), domain.length)

    def __repr__(self):
        extra = "" if self.scale == 1.0 else f", scale={self.scale:g}"
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"ConductivityField({self.kind!r}, {args}{extra})"


class BoundaryTrace:
    """A positive function on the boundary, evaluated through arclength only.

    This is the only view of the conductivity that reconstruction code is
    allowed to hold.  It can come from a preset (exact trace) or from sampled
    estimates, interpolated linearly in the periodic boundary parameter.
    """

    def __init__(self, func, length: float):
        self._func = func
        self.length = float(length)

    @classmethod
    def from_samples(cls, params, values, length: float, kind: str = "linear") -> "BoundaryTrace":
        """Periodic interpolant of boundary samples.

        ``kind`` is ``"linear"`` (piecewise linear in arclength) or
        ``"spline"`` (periodic cubic spline).
        """
        s = np.mod(np.asarray(params, dtype=float), length)
        v = np.asarray(values, dtype=float)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("boundary samples of gamma must be finite and positive")
        order = np.argsort(s)
        s, v = s[order], v[order]
        if kind == "linear":
            xs = np.concatenate([s - length, s, s + length])
            vs = np.concatenate([v, v, v])
            return cls(lambda q: np.interp(np.mod(q, length), xs, vs), length)
        if kind == "spline":
            if len(s) < 4:
                raise ValueError("spline interpolation needs at least four samples")
            spline = CubicSpline(np.append(s, s[0] + length), np.append(v, v[0]), bc_type="periodic")
            return cls(lambda q: spline(np.mod(q - s[0], length) + s[0]), length)
        raise ValueError(f"unknown interpolation kind {kind!r}")

    def __call__(self, s) -> np.ndarray:
        return np.asarray(self._func(np.asarray(s, dtype=float)), dtype=float)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Values at the boundary vertices of a mesh, in ``mesh.boundary`` order."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_boundary,):
            raise ValueError(f"expected {self.mesh.n_boundary} boundary values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary data must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, mesh: Mesh, func):
        """Sample ``func(points)`` at the boundary vertices."""
        return cls(mesh, func(mesh.vertices[mesh.boundary]))

    def _check(self, other):
        if other.mesh is not self.mesh:
            raise ValueError("boundary data live on different meshes")

    def __add__(self, other):
        self._check(other)
        return BoundaryData(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return BoundaryData(self.mesh, self.values - other.values)

    def __mul__(self, c):
        return BoundaryData(self.mesh, self.values * float(c))

    __rmul__ = __mul__


def _element_data(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    bad = np.flatnonzero(~(det > 1e-300))
    if len(bad):
        k = int(bad[0])
        raise FEMError(f"degenerate triangle {k} with vertices {mesh.triangles[k].tolist()} (2*area={det[k]:.3e})")
    area = 0.5 * det
    # gradients of the barycentric basis functions, shape (ntri, 3, 2)
    grads = np.empty((len(det), 3, 2))
    grads[:, 1, 0], grads[:, 1, 1] = e2[:, 1] / det, -e2[:, 0] / det
    grads[:, 2, 0], grads[:, 2, 1] = -e1[:, 1] / det, e1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    return area, grads, mids


def element_conductivity(mesh: Mesh, gamma) -> np.ndarray:
    """Edge-midpoint quadrature average of gamma on each triangle.

    ``gamma`` is a callable on points or a positive number.
    """
    _, _, mids = _element_data(mesh)
    if callable(gamma):
        gbar = np.asarray(gamma(mids.reshape(-1, 2)), dtype=float).reshape(-1, 3).mean(axis=1)
    else:
        gbar = np.full(len(mids), float(gamma))
    if not np.all(gbar > 0):
        raise FEMError("conductivity is not positive on the mesh")
    return gbar


def assemble(mesh: Mesh, gamma) -> sp.csr_matrix:
    """Global stiffness matrix ``K_ij = int gamma grad phi_i . grad phi_j``."""
    return _stiffness(mesh, element_conductivity(mesh, gamma))


def _stiffness(mesh: Mesh, gbar) -> sp.csr_matrix:
    area, grads, _ = _element_data(mesh)
    local = (gbar * area)[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2).tocsr()
    K.sum_duplicates()
    return K


class DirichletSystem:
    """Interior-elimination solver for one (mesh, gamma) pair.

    The interior block is factorised once; every Dirichlet solve after that
    is a pair of triangular solves.  Conjugate gradients with a Jacobi
    preconditioner is the fallback when the factorisation fails.
    """

    def __init__(self, mesh: Mesh, gamma, rtol: float = 1e-10):
        self.mesh = mesh
        self.rtol = rtol
        area, grads, _ = _element_data(mesh)
        gbar = element_conductivity(mesh, gamma)
        self._area, self._grads, self._gbar = area, grads, gbar
        self.K = _stiffness(mesh, gbar)
        self.interior = mesh.interior
        self.boundary = mesh.boundary
        K = self.K
        self.K_II = K[self.interior][:, self.interior].tocsc()
        self.K_IB = K[self.interior][:, self.boundary].tocsr()
        try:
            self._lu = spla.splu(self.K_II, permc_spec="COLAMD")
        except RuntimeError:
            self._lu = None

    def _solve_interior(self, rhs):
        if self._lu is not None:
            x = self._lu.solve(rhs)
            res = np.linalg.norm(self.K_II @ x - rhs)
            if res <= self.rtol * max(np.linalg.norm(rhs), 1e-300):
                return x
        diag = self.K_II.diagonal()
        M = spla.LinearOperator(self.K_II.shape, matvec=lambda v: v / diag)
        x, info = spla.cg(self.K_II, rhs, rtol=1e-12, atol=0.0, maxiter=20 * len(rhs), M=M)
        res = np.linalg.norm(self.K_II @ x - rhs)
        if info != 0 or res > self.rtol * max(np.linalg.norm(rhs), 1e-300):
            raise FEMError(f"linear solver did not converge: iterations={info}, residual={res:.3e}")
        return x

    def solve(self, f_values) -> np.ndarray:
        f_values = np.asarray(f_values, dtype=float)
        u = np.empty(self.mesh.n_vertices)
        u[self.boundary] = f_values
        if len(self.interior):
            rhs = -(self.K_IB @ f_values)
            u[self.interior] = self._solve_interior(rhs)
        return u

    def energy(self, u, v=None) -> float:
        """Element-wise ``sum_e gbar_e |e| grad u . grad v``, summed in element order."""
        t = self.mesh.triangles
        gu = np.einsum("eik,ei->ek", self._grads, u[t])
        gv = gu if v is None else np.einsum("eik,ei->ek", self._grads, v[t])
        return float(np.sum(self._gbar * self._area * np.einsum("ek,ek->e", gu, gv)))


def solve_dirichlet(mesh: Mesh, gamma, f: BoundaryData) -> np.ndarray:
    """Discrete solution of ``div(gamma grad u) = 0``, ``u = f`` on the boundary."""
    if f.mesh is not mesh:
        raise ValueError("boundary data belong to another mesh")
    return DirichletSystem(mesh, gamma).solve(f.values)


class DtnOracle:
    """Measurement device: the DtN form of a hidden conductivity.

    Only :meth:`quad` and :meth:`bilin` reveal anything about gamma.  The
    boundary data carry their own mesh, so one oracle serves a whole
    refinement schedule; factorisations are cached per mesh.

    ``jitter`` applies multiplicative noise ``1 + jitter * N(0, 1)`` to every
    answer (robustness experiments only).  Queries may come from several
    threads; the cache and the counter are guarded by a lock.
    """

    def __init__(self, gamma, mesh: Mesh | None = None, *, jitter: float = 0.0, seed: int = 0, cache_size: int = 8):
        self.__gamma = gamma
        self.__systems: OrderedDict = OrderedDict()
        self.__cache_size = cache_size
        self.__jitter = float(jitter)
        self.__rng = np.random.default_rng(seed)
        self.__lock = threading.Lock()
        self.queries = 0
        if mesh is not None:
            self.__system(mesh)

    def __system(self, mesh: Mesh) -> DirichletSystem:
        with self.__lock:
            return self.__lookup(mesh)

    def __lookup(self, mesh: Mesh) -> DirichletSystem:
        key = id(mesh)
        entry = self.__systems.get(key)
        if entry is not None and entry[0] is mesh:
            self.__systems.move_to_end(key)
            return entry[1]
        system = DirichletSystem(mesh, self.__gamma)
        self.__systems[key] = (mesh, system)
        while len(self.__systems) > self.__cache_size:
            self.__systems.popitem(last=False)
        return system

    def __noisy(self, value: float) -> float:
        if self.__jitter:
            with self.__lock:
                value *= 1.0 + self.__jitter * self.__rng.standard_normal()
        return value

    def __count(self):
        with self.__lock:
            self.queries += 1

    def quad(self, f: BoundaryData) -> float:
        """``<Lambda f, f>``."""
        self.__count()
        system = self.__system(f.mesh)
        u = system.solve(f.values)
        return self.__noisy(system.energy(u))

    def bilin(self, f: BoundaryData, g: BoundaryData) -> float:
        """``<Lambda f, g>``."""
        if f.mesh is not g.mesh:
            raise ValueError("boundary data live on different meshes")
        self.__count()
        system = self.__system(f.mesh)
        return self.__noisy(system.energy(system.solve(f.values), system.solve(g.values)))


def dtn_quad(oracle: DtnOracle, f: BoundaryData) -> float:
    return oracle.quad(f)


def dtn_bilin(oracle: DtnOracle, f: BoundaryData, g: BoundaryData) -> float:
    return oracle.bilin(f, g)

