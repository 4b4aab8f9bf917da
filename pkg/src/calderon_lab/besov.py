"""Littlewood-Paley analysis on the periodic unit box.

Functions live on a uniform grid over ``[0, 1)^n`` and frequencies on the
integer lattice.  The dyadic multipliers

    m_1(xi)      = chi(|xi|)
    m_lam(xi)    = chi(|xi| / lam) - chi(2 |xi| / lam),   lam = 2, 4, ..., N/2

telescope to one, with the top band absorbing the lattice corners beyond
``N/2``.  On top of the projections sit Besov norms, a synthetic rough
function generator and empirical checks of boundary Lebesgue-point rates,
the trace inequality and the Hardy inequality.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import dblquad

__all__ = [
    "GridFunction",
    "Interface",
    "smooth_cutoff",
    "band_multiplier",
    "dyadic_bands",
    "lp_project",
    "besov_norm",
    "band_norms",
    "synth_besov",
    "boundary_rate",
    "squared_rate",
    "rate_battery",
    "trace_ratios",
    "trace_check",
    "hardy_check",
    "bump",
    "RATE_SENTINEL",
]

#: slope reported when every local average vanishes
RATE_SENTINEL = math.inf


class GridFunction:
    """Real samples on the periodic grid ``{j / N}^n``."""

    def __init__(self, values):
        v = np.array(values, dtype=float)
        if v.ndim not in (1, 2, 3):
            raise ValueError(f"grid functions are 1-, 2- or 3-dimensional, got ndim={v.ndim}")
        N = v.shape[0]
        if any(m != N for m in v.shape):
            raise ValueError(f"grid must be square, got shape {v.shape}")
        if N < 16 or N & (N - 1):
            raise ValueError(f"N must be a power of two >= 16, got {N}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        self.values = v

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, func, N: int, n: int = 2) -> "GridFunction":
        """Sample ``func(x)`` where ``x`` has shape ``(..., n)``."""
        return cls(func(grid_points(N, n)))

    def lp_norm(self, p: float = 2.0) -> float:
        """``(int |f|^p)^(1/p)`` by the grid rule (box volume one)."""
        return float(np.mean(np.abs(self.values) ** p) ** (1.0 / p))

    def __add__(self, other):
        return GridFunction(self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.values - _vals(other))

    def __mul__(self, c):
        return GridFunction(self.values * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"GridFunction(n={self.n}, N={self.N})"


def _vals(f):
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def grid_points(N: int, n: int) -> np.ndarray:
    axes = np.meshgrid(*([np.arange(N) / N] * n), indexing="ij")
    return np.stack(axes, axis=-1)


# -- multipliers ------------------------------------------------------------

def smooth_cutoff(t) -> np.ndarray:
    """Radial cutoff: 1 on ``[0, 1]``, 0 on ``[2, inf)``, degree-7 smoothstep between."""
    x = np.clip(np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    step = x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)
    return 1.0 - step


def dyadic_bands(N: int) -> list[int]:
    """Available dyadic scales ``1, 2, 4, ..., N/2``."""
    return [2**k for k in range(int(math.log2(N)))]


@lru_cache(maxsize=32)
def _freq_radius(N: int, n: int) -> np.ndarray:
    k = np.fft.fftfreq(N, 1.0 / N)
    grids = np.meshgrid(*([k] * n), indexing="ij", sparse=True)
    r = np.sqrt(sum(g * g for g in grids))
    r.setflags(write=False)
    return r


@lru_cache(maxsize=128)
def _multiplier(N: int, n: int, lam: int) -> np.ndarray:
    r = _freq_radius(N, n)
    top = N // 2
    if lam == 1:
        m = smooth_cutoff(r)
    elif lam == top:
        # absorb everything above the last full band (lattice corners)
        m = 1.0 - smooth_cutoff(2.0 * r / lam)
    else:
        m = smooth_cutoff(r / lam) - smooth_cutoff(2.0 * r / lam)
    m = np.asarray(m, dtype=float)
    m.setflags(write=False)
    return m


def _check_band(N: int, lam: int) -> None:
    if lam < 1 or lam & (lam - 1):
        raise ValueError(f"band scale must be a power of two, got {lam}")
    if lam > N // 2:
        raise ValueError(f"band {lam} exceeds the Nyquist scale N/2 = {N // 2}")


def band_multiplier(N: int, n: int, lam: int) -> np.ndarray:
    """``m_lam`` on the FFT frequency lattice (read-only array)."""
    _check_band(N, lam)
    return _multiplier(N, n, lam)


def lp_project(f: GridFunction, lam: int) -> GridFunction:
    """Littlewood-Paley projection ``P_lam f``."""
    _check_band(f.N, lam)
    return GridFunction(_project_hat(np.fft.fftn(f.values), f.N, f.n, lam))


def _project_hat(fhat, N, n, lam):
    return np.fft.ifftn(fhat * _multiplier(N, n, lam)).real


def band_norms(f: GridFunction, p: float = 2.0) -> dict[int, float]:
    """``{lam: ||P_lam f||_p}`` over all available bands."""
    fhat = np.fft.fftn(f.values)
    return {
        lam: float(np.mean(np.abs(_project_hat(fhat, f.N, f.n, lam)) ** p) ** (1.0 / p))
        for lam in dyadic_bands(f.N)
    }


def besov_norm(f: GridFunction, s: float, p: float) -> float:
    """``(||P_1 f||_p^p + sum_{lam >= 2} lam^(s p) ||P_lam f||_p^p)^(1/p)``.

    The low-frequency band is counted once, so a constant ``c`` has norm ``|c|``.
    """
    if not 0 < s < 2:
        raise ValueError(f"smoothness s must lie in (0, 2), got {s}")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    norms = band_norms(f, p)
    total = norms[1] ** p + math.fsum(lam ** (s * p) * v**p for lam, v in norms.items() if lam >= 2)
    return float(total ** (1.0 / p))


# -- synthetic rough functions ----------------------------------------------

def synth_besov(s: float, p: float, seed: int, N: int = 256, n: int = 2, iterations: int = 30) -> GridFunction:
    """Random series whose band norms satisfy ``||P_lam f||_p ~ lam^-s``.

    The frequency lattice is split into dyadic shells centred on the band
    peaks, ``lam / sqrt 2 <= |xi| < lam sqrt 2``, each filled with
    independent complex Gaussian coefficients.  Shell amplitudes are then
    rescaled until the measured band norms equal ``lam^-s`` (neighbouring
    bands overlap, hence the fixed-point iteration).  Deterministic in
    ``seed``.
    """
    if not 0 < s < 1.5:
        raise ValueError(f"smoothness s must lie in (0, 1.5), got {s}")
    rng = np.random.default_rng(seed)
    r = _freq_radius(N, n)
    bands = dyadic_bands(N)[1:]
    root2 = math.sqrt(2.0)
    shells = {}
    for lam in bands:
        lo = lam / root2
        hi = math.inf if lam == bands[-1] else lam * root2
        mask = (r >= lo) & (r < hi)
        noise = rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)
        g = np.fft.ifftn(np.where(mask, noise, 0.0)).real
        g /= np.mean(np.abs(g) ** p) ** (1.0 / p)
        shells[lam] = np.fft.fftn(g)
    amp = {lam: float(lam) ** -s for lam in bands}
    for _ in range(iterations):
        fhat = sum(amp[lam] * shells[lam] for lam in bands)
        worst = 0.0
        for lam in bands:
            norm = np.mean(np.abs(_project_hat(fhat, N, n, lam)) ** p) ** (1.0 / p)
            ratio = lam**-s / norm
            worst = max(worst, abs(math.log(ratio)))
            amp[lam] *= ratio
        if worst < 1e-6:
            break
    fhat = sum(amp[lam] * shells[lam] for lam in bands)
    return GridFunction(np.fft.ifftn(fhat).real)


# -- interfaces ---------------------------------------------------------------

@dataclass(frozen=True)
class Interface:
    """Graph ``x2 = height + g(x1)`` splitting the periodic plane box.

    ``g`` is a smoothed periodic sawtooth (first odd Fourier modes of a
    triangle wave with ``teeth`` periods) scaled to Lipschitz constant
    ``lipschitz``; ``lipschitz = 0`` gives a straight line.  The domain side
    is ``x2 > height + g(x1)``.
    """

    height: float = 0.5
    lipschitz: float = 0.0
    teeth: int = 4

    @property
    def _scale(self) -> float:
        if self.lipschitz == 0:
            return 0.0
        t = np.linspace(0.0, 1.0, 8193)
        return self.lipschitz / np.max(np.abs(_saw(t, self.teeth, 1)))

    def __call__(self, x1, der: int = 0):
        x1 = np.asarray(x1, dtype=float)
        if self.lipschitz == 0:
            return np.full(x1.shape, self.height if der == 0 else 0.0)
        base = self.height if der == 0 else 0.0
        return base + self._scale * _saw(x1, self.teeth, der)

    @property
    def is_line(self) -> bool:
        return self.lipschitz == 0


def _saw(x, teeth, der):
    out = np.zeros_like(np.asarray(x, dtype=float))
    for m in (1, 3, 5, 7):
        sign = (-1) ** ((m - 1) // 2)
        w = 2 * np.pi * m * teeth
        if der == 0:
            out = out + sign * np.sin(w * x) / m**2
        else:
            out = out + sign * w * np.cos(w * x) / m**2
    return out


def _eval_on_graph(values: np.ndarray, iface: Interface) -> np.ndarray:
    """Trigonometric interpolant of a 2-D grid function at ``(x1_j, graph(x1_j))``."""
    N = values.shape[0]
    x1 = np.arange(N) / N
    if iface.is_line and abs(iface.height * N - round(iface.height * N)) < 1e-12:
        return values[:, int(round(iface.height * N)) % N]
    x2 = iface(x1)
    # column-wise 1-D interpolation in x2 (first axis is x1)
    chat = np.fft.fft(values, axis=1) / N
    k = np.fft.fftfreq(N, 1.0 / N)
    phase = np.exp(2j * np.pi * np.outer(x2, k))
    if N % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant stays real
        nyq = N // 2
        phase[:, nyq] = np.cos(2 * np.pi * nyq * x2)
    return np.einsum("jk,jk->j", chat, phase).real


def _value_at(values: np.ndarray, y) -> float:
    N = values.shape[0]
    idx = np.asarray(y, dtype=float) * N
    if np.all(np.abs(idx - np.round(idx)) < 1e-9):
        return float(values[tuple(np.round(idx).astype(int) % N)])
    # full trigonometric interpolation
    k = np.fft.fftfreq(N, 1.0 / N)
    fhat = np.fft.fft2(values) / N**2
    e1 = np.exp(2j * np.pi * k * y[0])
    e2 = np.exp(2j * np.pi * k * y[1])
    return float(np.real(e1 @ fhat @ e2))


# -- Lebesgue-point rates ---------------------------------------------------------

@dataclass
class RateFit:
    """Radii, local averages and their log-log slope."""

    radii: np.ndarray
    averages: np.ndarray
    slope: float
    intercept: float
    residual: float
    window: tuple[int, int]


def boundary_rate(f: GridFunction, iface: Interface, y1: float, q: float = 2.0, value: float | None = None,
                  trim: int = 2) -> RateFit:
    """Decay rate of boundary averages at ``y = (y1, graph(y1))``.

    For dyadic ``r = 2^-2, ..., 1/N`` computes

        A(r) = ( r^-2 int_{B_r(y) cap Omega} |f(x) - f(y)|^q dx )^(1/q)

    by the grid rule (points on the interface count half) and fits the
    slope of ``log A`` against ``log r`` after dropping ``trim`` radii at
    each end.  If every average vanishes the slope is
    :data:`RATE_SENTINEL`.  ``value`` overrides ``f(y)``.
    """
    if f.n != 2:
        raise ValueError("boundary rates are measured in the plane (n = 2)")
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    N = f.N
    y = np.array([y1, float(iface(y1))])
    fy = _value_at(f.values, y) if value is None else float(value)
    J = int(math.log2(N))
    radii = 2.0 ** -np.arange(2, J + 1)
    # local window of the torus around y
    half = N // 4 + 1
    c = np.floor(y * N).astype(int)
    offs = np.arange(-half, half + 2)
    i1, i2 = (c[0] + offs) % N, (c[1] + offs) % N
    X1 = (c[0] + offs)[:, None] / N
    X2 = (c[1] + offs)[None, :] / N
    local = f.values[np.ix_(i1, i2)]
    dist = np.hypot(X1 - y[0], X2 - y[1])
    height = X2 - iface(X1)
    weight = np.where(height > 1e-12, 1.0, np.where(np.abs(height) <= 1e-12, 0.5, 0.0))
    dev = np.abs(local - fy) ** q * weight
    avgs = np.array([(np.sum(dev[dist < r]) / N**2 / r**2) ** (1.0 / q) for r in radii])
    lo, hi = trim, len(radii) - trim
    if np.all(avgs == 0):
        return RateFit(radii, avgs, RATE_SENTINEL, -math.inf, 0.0, (lo, hi))
    if hi - lo < 3:
        raise ValueError(f"only {max(hi - lo, 0)} usable radii after trimming; need at least 3")
    sel = slice(lo, hi)
    ok = avgs[sel] > 0
    if ok.sum() < 3:
        raise ValueError("fewer than 3 radii with nonzero averages")
    lr, la = np.log(radii[sel][ok]), np.log(avgs[sel][ok])
    A = np.stack([np.ones_like(lr), lr], axis=1)
    coef, *_ = np.linalg.lstsq(A, la, rcond=None)
    res = float(np.linalg.norm(A @ coef - la))
    return RateFit(radii, avgs, float(coef[1]), float(coef[0]), res, (lo, hi))


def squared_rate(f: GridFunction, iface: Interface, y1: float, trim: int = 2) -> RateFit:
    """Rate for ``r^-2 int |f^2(x) - f^2(y)| dx``: :func:`boundary_rate` of ``f^2`` with ``q = 1``."""
    y = np.array([y1, float(iface(y1))])
    fy = _value_at(f.values, y)
    return boundary_rate(GridFunction(f.values**2), iface, y1, q=1.0, value=fy * fy, trim=trim)


def rate_battery(f: GridFunction, iface: Interface, npoints: int = 50, seed: int = 0, q: float = 2.0,
                 squared: bool = False, workers: int = 1) -> np.ndarray:
    """Slopes at ``npoints`` boundary points with grid-aligned uniformly random ``y1``."""
    rng = np.random.default_rng(seed)
    cols = rng.choice(f.N, size=npoints, replace=npoints > f.N)
    ys = cols / f.N

    def one(y1):
        fit = squared_rate(f, iface, y1) if squared else boundary_rate(f, iface, y1, q)
        return fit.slope

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return np.array(list(pool.map(one, ys)))


# -- trace inequality ---------------------------------------------------------------

def trace_ratios(f: GridFunction, iface: Interface, lams, p: float = 2.0, q: float = 2.0) -> dict[int, float]:
    """``{lam: ||P_lam f||_{L^q(graph)} / (lam^(1/p) ||f||_p)}``.

    The curve integral uses the grid columns ``x1 = j/N`` with arclength
    weight ``sqrt(1 + g'^2)``.
    """
    if f.n != 2:
        raise ValueError("trace ratios are measured in the plane (n = 2)")
    if q > p:
        raise ValueError(f"need q <= p, got q={q}, p={p}")
    norm = f.lp_norm(p)
    if norm == 0:
        raise ValueError("f vanishes identically")
    x1 = np.arange(f.N) / f.N
    ds = np.sqrt(1.0 + iface(x1, der=1) ** 2)
    fhat = np.fft.fftn(f.values)
    out = {}
    for lam in lams:
        _check_band(f.N, lam)
        band = _project_hat(fhat, f.N, 2, lam)
        tr = _eval_on_graph(band, iface)
        lq = float(np.mean(np.abs(tr) ** q * ds) ** (1.0 / q))
        out[lam] = lq / (lam ** (1.0 / p) * norm)
    return out


def trace_check(f: GridFunction, iface: Interface, lams, p: float = 2.0, q: float = 2.0) -> float:
    """Largest trace ratio over ``lams``."""
    return max(trace_ratios(f, iface, lams, p, q).values())


# -- Hardy inequality ----------------------------------------------------------------

def _bump_profile(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def bump(N: int, center, width: float, n: int = 3, amplitude: float = 1.0) -> GridFunction:
    """Smooth compactly supported bump of radius ``width``."""
    x = grid_points(N, n)
    r = np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1)
    return GridFunction(amplitude * _bump_profile(r / width))


@lru_cache(maxsize=1)
def _cube_weight_average() -> float:
    """Mean of ``1/|x|^2`` over the unit cube centred at the origin.

    In three dimensions ``div(x/|x|^2) = 1/|x|^2``, so the volume integral is
    the flux through the six faces.
    """
    val, _ = dblquad(lambda z, y: 0.5 / (0.25 + y * y + z * z), -0.5, 0.5, -0.5, 0.5, epsabs=1e-13, epsrel=1e-13)
    return 6.0 * val


def hardy_check(f: GridFunction, x0=None) -> float:
    """``int f^2 / |x - x0|^2 / (||f||_2^2 + ||grad f||_2^2)`` on a 3-D grid.

    The gradient is spectral; the grid cell containing ``x0`` (a grid node,
    by default the box centre) uses the exact cell average of the weight.
    """
    if f.n != 3:
        raise ValueError("the Hardy check runs in three dimensions")
    N = f.N
    x0 = np.full(3, 0.5) if x0 is None else np.asarray(x0, dtype=float)
    if np.any(np.abs(x0 * N - np.round(x0 * N)) > 1e-9):
        raise ValueError("x0 must be a grid node")
    v = f.values
    edge = np.concatenate([v[[0, -1]].ravel(), v[:, [0, -1]].ravel(), v[:, :, [0, -1]].ravel()])
    if np.max(np.abs(edge)) > 1e-8 * max(np.max(np.abs(v)), 1e-300):
        raise ValueError("f must vanish near the box boundary")
    x = grid_points(N, 3)
    d2 = np.sum((x - x0) ** 2, axis=-1)
    j0 = tuple(np.round(x0 * N).astype(int))
    d2[j0] = 1.0
    w = 1.0 / d2
    w[j0] = _cube_weight_average() * N**2
    k = 2j * np.pi * np.fft.fftfreq(N, 1.0 / N)
    vhat = np.fft.fftn(v)
    grad2 = sum(
        np.fft.ifftn(vhat * k.reshape([-1 if a == b else 1 for b in range(3)])).real ** 2 for a in range(3)
    )
    weighted = np.mean(v * v * w)
    h1 = np.mean(v * v) + np.mean(grad2)
    return float(weighted / h1)
