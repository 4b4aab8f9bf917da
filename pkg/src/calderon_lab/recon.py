"""Boundary reconstruction of gamma and of its normal log-derivative.

Both procedures drive a :class:`~calderon_lab.fem.DtnOracle` with singular
probes along a decreasing dyadic schedule of offsets ``h`` and extrapolate
the normalised measurements to ``h = 0``:

    value    rho(h)   = <Lambda f0_h, f0_h> / c0(h)            -> gamma(y)
    normal   sigma(h) = (<Lambda f1_h, f1_h> - c0(h)) / (c1(h) h) -> d_nu log gamma(y)

Nothing here sees the interior of gamma.  The normal stage additionally
reads gamma on the boundary through a :class:`~calderon_lab.fem.BoundaryTrace`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .fem import BoundaryTrace, DtnOracle
from .geometry import Domain, boundary_frame, build_domain
from .mesh import Mesh, Refinement, make_mesh
from .singular import SingularFamily, c0_constant, c0_discrete, c1_constant, trace_f0, trace_f1

__all__ = [
    "ReconstructionError",
    "RecoverySchedule",
    "RateReport",
    "FitResult",
    "fit_limit",
    "schedule_mesh",
    "recover_value",
    "recover_normal",
    "recover_pipeline",
    "PipelineResult",
    "calibration_c0",
    "BETA_GRID",
]

BETA_GRID = (0.25, 0.5, 0.75, 1.0)


class ReconstructionError(ValueError):
    """Invalid reconstruction request (corner point, bad schedule, ...)."""


@dataclass(frozen=True)
class RecoverySchedule:
    """Dyadic offsets ``h_j = h0 2^-j`` and the mesh rule coupled to them.

    Near ``y`` (within ``ball_factor * h``) elements are at most
    ``local_ratio * h`` across; outside they grow with slope ``grading`` up
    to ``global_size``.

    ``calibration`` selects how ``c0(h)`` is obtained: ``"continuum"`` is
    the quadrature constant on the exact domain, ``"discrete"`` is the
    energy of the same probe for gamma = 1 on the measurement mesh.  The two
    agree up to discretisation error; the discrete one cancels that error
    to leading order, which the normal stage needs because it reads an
    O(h) correction on top of ``c0``.
    """

    h0: float = 0.1
    steps: int = 5
    local_ratio: float = 0.125
    ball_factor: float = 5.0
    global_size: float = 0.1
    grading: float = 0.3
    value_model: str = "affine"
    normal_model: str = "scan"
    value_calibration: str = "continuum"
    normal_calibration: str = "discrete"
    value_tail: int | None = None
    normal_tail: int | None = None
    stage_a_model: str = "quadratic"
    stage_a_tail: int | None = 3
    stage_a_calibration: str = "discrete"

    def __post_init__(self):
        if self.steps < 1 or not self.h0 > 0:
            raise ReconstructionError("schedule needs h0 > 0 and at least one step")
        if not 0 < self.local_ratio <= 0.125 + 1e-15:
            raise ReconstructionError("local mesh size must satisfy h_min >= 8 * local size")
        for cal in (self.value_calibration, self.normal_calibration, self.stage_a_calibration):
            if cal not in ("continuum", "discrete"):
                raise ReconstructionError(f"unknown calibration {cal!r}")

    @property
    def hs(self) -> tuple[float, ...]:
        return tuple(self.h0 * 2.0**-j for j in range(self.steps))

    def validate_for(self, radius: float) -> None:
        if self.h0 > radius / 5.0 * (1 + 1e-12):
            raise ReconstructionError(f"h0={self.h0:g} exceeds frame validity radius / 5 = {radius / 5:g}")

    def refinement(self, center, h: float) -> Refinement:
        return Refinement(tuple(map(float, center)), self.ball_factor * h, self.local_ratio * h, self.grading)

    @property
    def mesh_rule(self) -> tuple:
        return (self.local_ratio, self.ball_factor, self.global_size, self.grading)

    def stage_a(self) -> "RecoverySchedule":
        """Schedule used for the boundary values that feed the normal stage."""
        return replace(self, value_model=self.stage_a_model, value_tail=self.stage_a_tail,
                       value_calibration=self.stage_a_calibration)


@dataclass
class RateReport:
    """Abscissae, measured values and the fitted extrapolation."""

    abscissae: np.ndarray
    values: np.ndarray
    exponent: float
    intercept: float
    residual: float
    model: str = ""
    flags: list[str] = field(default_factory=list)
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissae = np.asarray(self.abscissae, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.abscissae.shape != self.values.shape:
            raise ValueError("abscissae and values must have equal length")


@dataclass(frozen=True)
class FitResult:
    limit: float
    exponent: float
    slope: float
    residual: float
    fallback: bool = False


def _design(h, model, beta):
    cols = [np.ones_like(h), h**beta]
    if model == "quadratic":
        cols.append(h * h)
    elif model == "hlog":
        cols.append(h * np.log(h))
    return np.stack(cols, axis=1)


def _solve_fit(h, v, model, beta):
    A = _design(h, model, beta)
    # conditioning is judged on unit-norm columns so it does not depend on the units of h
    if np.linalg.cond(A / np.linalg.norm(A, axis=0)) > 1e12:
        raise np.linalg.LinAlgError("singular normal equations")
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = float(np.linalg.norm(A @ coef - v))
    return float(coef[0]), float(coef[1]), res


def fit_limit(points, model: str | float = "affine", tail: int | None = None) -> FitResult:
    """Least-squares fit of ``value = L + a h^beta``; returns the limit ``L``.

    ``model`` is one of

    ``"last"``       no extrapolation, the value at the smallest h
    ``"affine"``     beta = 1
    a number         fixed beta in (0, 1]
    ``"scan"``       beta from :data:`BETA_GRID`, smallest residual wins
    ``"quadratic"``  ``L + a h + b h^2``
    ``"hlog"``       ``L + a h + b h log h``

    ``tail`` restricts the fit to the ``tail`` smallest abscissae.  A singular
    fit falls back to the value at the smallest ``h`` and sets ``fallback``.
    """
    pts = sorted((float(a), float(b)) for a, b in points)
    h = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if len(h) < 3:
        raise ValueError("fit_limit needs at least three points")
    if len(np.unique(h)) != len(h):
        raise ValueError("abscissae must be distinct")
    if not np.all(h > 0):
        raise ValueError("abscissae must be positive")
    if tail is not None:
        if tail < 3:
            raise ValueError("tail must keep at least three points")
        h, v = h[:tail], v[:tail]
    last = FitResult(float(v[0]), 0.0, 0.0, float(np.linalg.norm(v - v[0])))
    if model == "last":
        return last
    if model in ("affine", "quadratic", "hlog"):
        betas = (1.0,)
    elif model == "scan":
        betas = BETA_GRID
    else:
        try:
            betas = (float(model),)
        except (TypeError, ValueError):
            raise ValueError(f"unknown extrapolation model {model!r}") from None
        if not 0 < betas[0] <= 1:
            raise ValueError(f"fixed exponent must lie in (0, 1], got {model}")
    best = None
    for beta in betas:
        try:
            L, a, res = _solve_fit(h, v, model, beta)
        except np.linalg.LinAlgError:
            continue
        if best is None or res < best.residual - 1e-15 * max(1.0, abs(L)):
            best = FitResult(L, beta, a, res)
    if best is None:
        warnings.warn("extrapolation fit is singular; using the last value", RuntimeWarning, stacklevel=2)
        return replace(last, fallback=True)
    return best


# -- meshes ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _cached_mesh(domain_key: str, s: float, h: float, rule: tuple) -> Mesh:
    domain = build_domain(json.loads(domain_key))
    local_ratio, ball_factor, global_size, grading = rule
    center = tuple(map(float, domain.point(s)))
    return make_mesh(domain, global_size, Refinement(center, ball_factor * h, local_ratio * h, grading))


def _domain_key(domain: Domain) -> str:
    return json.dumps(domain.descriptor(), sort_keys=True)


def schedule_mesh(domain: Domain, s: float, h: float, schedule: RecoverySchedule) -> Mesh:
    """Mesh refined around the boundary point ``s`` for probe offset ``h`` (cached)."""
    return _cached_mesh(_domain_key(domain), round(float(s), 14), float(h), schedule.mesh_rule)


@lru_cache(maxsize=256)
def _reference_energy(domain_key: str, s: float, h: float, rule: tuple) -> float:
    """Energy of the probe for gamma = 1 on the schedule mesh."""
    domain = build_domain(json.loads(domain_key))
    return c0_discrete(_cached_mesh(domain_key, s, h, rule), boundary_frame(domain, s), h)


def calibration_c0(domain: Domain, s: float, h: float, schedule: RecoverySchedule, kind: str) -> float:
    """``c0(h)`` from quadrature on the exact boundary or from the gamma = 1 discrete energy."""
    if kind == "continuum":
        return c0_constant(domain, boundary_frame(domain, s), h)
    return _reference_energy(_domain_key(domain), round(float(s), 14), float(h), schedule.mesh_rule)


def _prepare(domain: Domain, s: float, schedule: RecoverySchedule):
    s = float(np.mod(s, domain.length))
    if domain.is_corner(s, tol=1e-9):
        raise ReconstructionError(f"boundary parameter {s:g} is a corner")
    frame = boundary_frame(domain, s)
    schedule.validate_for(frame.radius)
    if domain.corner_distance(s) < 5.0 * schedule.h0:
        raise ReconstructionError(f"boundary parameter {s:g} is closer than 5 h0 to a corner")
    return s, frame


def _monotone_flags(h, vals, target=None) -> list[str]:
    flags = []
    d = np.abs(np.diff(vals[np.argsort(h)[::-1]]))
    # successive changes should shrink as h decreases
    inversions = int(np.sum(d[1:] > d[:-1] * 1.1 + 1e-12))
    if inversions > 1:
        flags.append(f"non-monotone convergence ({inversions} inversions)")
    return flags


def recover_value(oracle: DtnOracle, domain: Domain, s: float, schedule: RecoverySchedule = RecoverySchedule()):
    """Estimate ``gamma(y)`` at the boundary point with parameter ``s``.

    Returns ``(estimate, report)``; ``report.columns`` holds the per-h
    columns ``h, q0, c0, rho``.
    """
    s, frame = _prepare(domain, s, schedule)
    hs, q0s, c0s, rhos = [], [], [], []
    for h in schedule.hs:
        mesh = schedule_mesh(domain, s, h, schedule)
        f0 = trace_f0(SingularFamily(frame, h), mesh)
        q0 = oracle.quad(f0)
        c0 = calibration_c0(domain, s, h, schedule, schedule.value_calibration)
        hs.append(h), q0s.append(q0), c0s.append(c0), rhos.append(q0 / c0)
    fit = fit_limit(zip(hs, rhos), schedule.value_model, schedule.value_tail)
    report = RateReport(
        hs, rhos, fit.exponent, fit.limit, fit.residual, model=str(schedule.value_model),
        flags=_monotone_flags(np.array(hs), np.array(rhos)) + (["fit fallback"] if fit.fallback else []),
        columns={"h": hs, "q0": q0s, "c0": c0s, "rho": rhos},
    )
    return fit.limit, report


def recover_normal(
    oracle: DtnOracle,
    domain: Domain,
    s: float,
    gamma_boundary: BoundaryTrace,
    schedule: RecoverySchedule = RecoverySchedule(),
):
    """Estimate ``d_nu log gamma(y)`` from probes ``gamma^(-1/2) u_h``.

    Returns ``(estimate, report)``; ``report.columns`` holds
    ``h, q1, c0, c1, sigma``.
    """
    if not isinstance(gamma_boundary, BoundaryTrace):
        raise TypeError("gamma_boundary must be a BoundaryTrace")
    s, frame = _prepare(domain, s, schedule)
    hs, q1s, c0s, c1s, sig = [], [], [], [], []
    for h in schedule.hs:
        mesh = schedule_mesh(domain, s, h, schedule)
        f1 = trace_f1(SingularFamily(frame, h), mesh, gamma_boundary)
        q1 = oracle.quad(f1)
        c0 = calibration_c0(domain, s, h, schedule, schedule.normal_calibration)
        c1 = c1_constant(domain, frame, h)
        if c1 == 0.0:
            raise ReconstructionError("c1 vanished")
        hs.append(h), q1s.append(q1), c0s.append(c0), c1s.append(c1)
        sig.append((q1 - c0) / (c1 * h))
    fit = fit_limit(zip(hs, sig), schedule.normal_model, schedule.normal_tail)
    report = RateReport(
        hs, sig, fit.exponent, fit.limit, fit.residual, model=str(schedule.normal_model),
        flags=_monotone_flags(np.array(hs), np.array(sig)) + (["fit fallback"] if fit.fallback else []),
        columns={"h": hs, "q1": q1s, "c0": c0s, "c1": c1s, "sigma": sig},
    )
    return fit.limit, report


@dataclass
class PipelineResult:
    """Per requested point: stage-A value, stage-B normal derivative and their reports."""

    points: list
    values: list
    normals: list
    trace: BoundaryTrace
    value_reports: list
    normal_reports: list


def recover_pipeline(
    oracle: DtnOracle,
    domain: Domain,
    points,
    schedule: RecoverySchedule = RecoverySchedule(),
    samples: int = 16,
    kind: str = "linear",
) -> PipelineResult:
    """Two-stage reconstruction: gamma values first, then normal derivatives.

    Stage A estimates gamma at ``samples`` uniformly spread boundary
    parameters plus the requested points, using ``schedule.stage_a()``.
    The estimates, interpolated in arclength (``kind`` as in
    :meth:`BoundaryTrace.from_samples`), replace the exact boundary trace
    in stage B.
    """
    points = [round(float(np.mod(p, domain.length)), 14) for p in points]
    grid = [round(k * domain.length / samples, 14) for k in range(samples)]
    # grid points near corners would be rejected by the value stage
    grid = [p for p in grid if domain.corner_distance(p) >= 5.0 * schedule.h0]
    nodes = sorted(set(grid + points))
    sched_a = schedule.stage_a()
    stage_a = {p: recover_value(oracle, domain, p, sched_a) for p in nodes}
    trace = BoundaryTrace.from_samples(nodes, [stage_a[p][0] for p in nodes], domain.length, kind)
    stage_b = [recover_normal(oracle, domain, p, trace, schedule) for p in points]
    return PipelineResult(
        points=points,
        values=[stage_a[p][0] for p in points],
        normals=[est for est, _ in stage_b],
        trace=trace,
        value_reports=[stage_a[p][1] for p in points],
        normal_reports=[rep for _, rep in stage_b],
    )
