"""The deformed Marchenko-Pastur map f, its inverse, the bulk structure and the density.

For an atomic bulk spectrum with atoms ``sigma_k`` of weight ``w_k`` and aspect
ratio ``c = N / M``,

    f(x) = -1/x + (1/c) * sum_k w_k / (x + 1/sigma_k),

and the Stieltjes transform ``m(z)`` of the limiting spectral law of the
``N x N`` companion matrix solves ``z = f(m)`` with ``Im m > 0``.

Critical points of f are located through the substitution ``y = -1/x``: then
``f'(x) = y**2 * (1 - psi(y))`` with

    psi(y) = (1/c) * sum_k w_k sigma_k**2 / (sigma_k - y)**2,

which is convex between consecutive atoms, so each gap holds zero or two
critical points and its minimum decides which.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from .errors import ClassificationError, ConvergenceError, DomainError, QuantileError, StructureError
from .model import BulkSpectrum
from .report import ValidationReport

__all__ = [
    "FFunction",
    "BulkStructure",
    "StieltjesValue",
    "f_eval",
    "f_derivative",
    "find_bulk_structure",
    "component_of",
    "edge_scales",
    "solve_m",
    "solve_m_array",
    "density",
    "component_masses",
    "classical_locations",
    "check_edge_regularity",
    "write_density_csv",
    "write_gamma_csv",
]

log = logging.getLogger(__name__)

POLE_TOL = 1e-14
DEGENERATE_TOL = 1e-8
SOLVER_TOL = 1e-10
ETA_FACTOR = 1e-7
_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class FFunction:
    """f for a fixed bulk spectrum and aspect ratio; callable on reals or complexes."""

    bulk: BulkSpectrum
    c_N: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c_N) and self.c_N > 0):
            raise DomainError(f"aspect ratio must be positive, got {self.c_N}")

    @property
    def sigma(self) -> NDArray[np.float64]:
        return self.bulk.values

    @property
    def weights(self) -> NDArray[np.float64]:
        return self.bulk.weights

    @property
    def poles(self) -> NDArray[np.float64]:
        """Poles of f other than 0, in ascending order."""
        return -1.0 / self.sigma

    def __call__(self, x):
        return f_eval(self, x)

    def derivative(self, x, order: int = 1):
        return f_derivative(self, x, order)

    def scaled(self, s: float) -> "FFunction":
        return FFunction(self.bulk.scaled(s), self.c_N)

    # power sums sum_k w_k / (x + 1/sigma_k)**p for p in ``powers``
    def _sums(self, x: NDArray, powers: Sequence[int]) -> list[NDArray]:
        inv = 1.0 / self.sigma
        w = self.weights
        flat = x.ravel()
        out = [np.empty_like(flat) for _ in powers]
        step = max(1, _CHUNK // max(1, inv.size))
        for start in range(0, flat.size, step):
            t = 1.0 / (flat[start : start + step, None] + inv[None, :])
            tp = np.ones_like(t)
            done = 0
            for j, p in enumerate(powers):
                while done < p:
                    tp = tp * t
                    done += 1
                out[j][start : start + step] = tp @ w
        return [o.reshape(x.shape) for o in out]

    def _f_fp(self, m: NDArray[np.complex128]) -> tuple[NDArray, NDArray]:
        s1, s2 = self._sums(m, (1, 2))
        return -1.0 / m + s1 / self.c_N, 1.0 / m**2 - s2 / self.c_N


def _check_poles(F: FFunction, x: NDArray) -> None:
    if x.size == 0:
        return
    if np.any(np.abs(x) <= POLE_TOL):
        raise DomainError("argument lies on the pole x = 0")
    poles = np.sort(F.poles)
    xr = x.real.ravel() if np.iscomplexobj(x) else x.ravel()
    xi = np.abs(x.imag.ravel()) if np.iscomplexobj(x) else np.zeros_like(xr)
    near = xi <= POLE_TOL
    if not near.any():
        return
    xr = xr[near]
    pos = np.clip(np.searchsorted(poles, xr), 1, poles.size) - 1
    d_lo = np.abs(xr - poles[pos])
    d_hi = np.abs(xr - poles[np.minimum(pos + 1, poles.size - 1)])
    bad = np.minimum(d_lo, d_hi) <= POLE_TOL
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        pole = poles[pos[k]] if d_lo[k] <= d_hi[k] else poles[min(pos[k] + 1, poles.size - 1)]
        raise DomainError(f"argument {xr[k]!r} lies on the pole x = {pole!r} (= -1/{-1.0 / pole!r})")


def _as_array(x) -> tuple[NDArray, bool]:
    arr = np.asarray(x)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    return arr, arr.ndim == 0


def f_eval(F: FFunction, x):
    """Evaluate f as the finite sum; raises ``DomainError`` on a pole."""
    arr, scalar = _as_array(x)
    arr = np.atleast_1d(arr)
    _check_poles(F, arr)
    (s1,) = F._sums(arr, (1,))
    out = -1.0 / arr + s1 / F.c_N
    return out[0].item() if scalar else out


def f_derivative(F: FFunction, x, order: int = 1):
    """First or second derivative of f, in closed form."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    arr, scalar = _as_array(x)
    arr = np.atleast_1d(arr)
    _check_poles(F, arr)
    if order == 1:
        (s,) = F._sums(arr, (2,))
        out = 1.0 / arr**2 - s / F.c_N
    else:
        (s,) = F._sums(arr, (3,))
        out = -2.0 / arr**3 + 2.0 * s / F.c_N
    return out[0].item() if scalar else out


# ---------------------------------------------------------------- structure


@dataclass(frozen=True, eq=False)
class BulkStructure:
    """Critical points ``x_1 >= ... >= x_{2p-1}`` plus ``x_{2p}`` and edges ``a_k = f(x_k)``.

    Arrays are 0-based: ``critical_points[k - 1]`` is ``x_k``. When ``c_N == 1``
    the last critical point is ``inf`` and its edge is 0.
    """

    critical_points: NDArray[np.float64]
    edges: NDArray[np.float64]
    bulk_counts: NDArray[np.int64]
    atom_component: NDArray[np.int64]
    c_N: float
    N: int

    @property
    def p(self) -> int:
        return self.edges.size // 2

    @property
    def support(self) -> list[tuple[float, float]]:
        return [(float(self.edges[2 * k + 1]), float(self.edges[2 * k])) for k in range(self.p)]

    def x(self, k: int) -> float:
        """1-based critical point ``x_k``; ``x(0)`` is ``+inf``."""
        return math.inf if k == 0 else float(self.critical_points[k - 1])

    def a(self, k: int) -> float:
        """1-based edge ``a_k``; ``a(0)`` is ``+inf``."""
        return math.inf if k == 0 else float(self.edges[k - 1])

    @property
    def width(self) -> float:
        return float(self.edges[0] - self.edges[-1])

    def in_support(self, E: ArrayLike, tol: float = 0.0) -> NDArray[np.bool_]:
        E = np.asarray(E, dtype=float)
        inside = np.zeros(E.shape, dtype=bool)
        for lo, hi in self.support:
            inside |= (E >= lo - tol) & (E <= hi + tol)
        return inside


def _bisect(
    func: Callable[[NDArray], NDArray], lo: NDArray, hi: NDArray, increasing: bool, iters: int = 400
) -> NDArray:
    """Vectorized bisection for a monotone ``func`` with a sign change in ``(lo, hi)``.

    Endpoints are never evaluated, so they may be poles.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        live = (mid > lo) & (mid < hi)
        if not live.any():
            break
        v = func(mid)
        right = (v < 0) if increasing else (v > 0)
        lo = np.where(live & right, mid, lo)
        hi = np.where(live & ~right, mid, hi)
    return 0.5 * (lo + hi)


def _psi(F: FFunction, y: NDArray, power: int) -> NDArray:
    s = F.sigma
    num = F.weights * s**2
    if power == 2:
        return (num / (s[None, :] - y[:, None]) ** 2).sum(axis=1) / F.c_N
    return 2.0 * (num / (s[None, :] - y[:, None]) ** 3).sum(axis=1) / F.c_N


def _gap_roots(F: FFunction) -> list[tuple[float, float]]:
    """Pairs ``(y_high, y_low)`` of critical points between consecutive atoms, top gap first."""
    s = F.sigma
    if s.size < 2:
        return []
    w = F.weights
    upper, lower = s[:-1], s[1:]
    g = upper - lower
    cube = np.cbrt(w[:-1] * upper**2) + np.cbrt(w[1:] * lower**2)
    bound = cube**3 / (F.c_N * g**2)
    cand = np.flatnonzero(bound <= 1.0)
    if cand.size == 0:
        return []
    lo, hi = lower[cand], upper[cand]
    ymin = _bisect(lambda y: _psi(F, y, 3), lo, hi, increasing=True)
    pmin = _psi(F, ymin, 2)
    out: list[tuple[float, float]] = []
    two = pmin < 1.0
    if two.any():
        sel = cand[two]
        f1 = lambda y: _psi(F, y, 2) - 1.0  # noqa: E731
        y_low = _bisect(f1, lower[sel], ymin[two], increasing=False)
        y_high = _bisect(f1, ymin[two], upper[sel], increasing=True)
    k = 0
    for j, gap in enumerate(cand):
        if two[j]:
            yh, yl = float(y_high[k]), float(y_low[k])
            k += 1
            if abs(1.0 / yl - 1.0 / yh) < DEGENERATE_TOL:
                yh = yl = float(ymin[j])
            out.append((yh, yl))
        elif pmin[j] <= 1.0 + 1e-12:
            out.append((float(ymin[j]), float(ymin[j])))
    return out


def find_bulk_structure(F: FFunction, N: int | None = None) -> BulkStructure:
    """Critical points, edges, per-component atoms and classical counts of f."""
    s = F.sigma
    c = F.c_N
    M = F.bulk.M
    if N is None:
        N = int(round(c * M))
    smax, smin = float(s[0]), float(s[-1])

    top_hi = smax * (1.0 + 2.0 / math.sqrt(c))
    y_top = float(
        _bisect(lambda y: _psi(F, y, 2) - 1.0, np.array([smax]), np.array([top_hi]), increasing=False)[0]
    )
    gaps = _gap_roots(F)

    if abs(c - 1.0) < 1e-15:
        y_bot = 0.0
    elif c > 1.0:
        y_bot = float(
            _bisect(lambda y: _psi(F, y, 2) - 1.0, np.array([0.0]), np.array([smin]), increasing=True)[0]
        )
    else:
        lo = smin - 2.0 * smax / math.sqrt(c) - 1.0
        y_bot = float(
            _bisect(lambda y: _psi(F, y, 2) - 1.0, np.array([lo]), np.array([0.0]), increasing=True)[0]
        )

    ys = [y_top]
    for yh, yl in gaps:
        ys += [yh, yl]
    xs = [-1.0 / y for y in ys]
    xs.append(math.inf if y_bot == 0.0 else -1.0 / y_bot)
    crit = np.array(xs)
    edges = np.empty_like(crit)
    edges[:-1] = f_eval(F, crit[:-1])
    edges[-1] = 0.0 if y_bot == 0.0 else f_eval(F, crit[-1])

    scale = max(1.0, float(edges[0]))
    if np.any(np.diff(edges) > 1e-10 * scale) or edges[-1] < -1e-10 * scale:
        raise StructureError(f"edges are not ordered: {edges.tolist()}")
    edges[-1] = max(edges[-1], 0.0)

    lows = np.array([yl for _, yl in gaps])
    comp = 1 + (lows[None, :] > s[:, None]).sum(axis=1) if lows.size else np.ones(s.size, dtype=np.int64)
    p = crit.size // 2
    counts = np.zeros(p, dtype=np.int64)
    mult = F.bulk.multiplicities
    for k in range(1, p):
        counts[k - 1] = int(mult[comp == k].sum())
    counts[p - 1] = min(M, N) - int(counts[: p - 1].sum())
    if counts[p - 1] <= 0:
        raise StructureError(f"non-positive classical count in the last component: {counts.tolist()}")
    return BulkStructure(crit, edges, counts, comp.astype(np.int64), float(c), int(N))


def component_of(B: BulkStructure, x: float) -> int:
    """1-based component whose region ``(x_{2i}, x_{2(i-1)})`` contains ``x < 0``."""
    for i in range(1, B.p):
        xl = B.x(2 * i)
        if x > xl:
            return i
        if x == xl:
            raise ClassificationError(f"x = {x!r} coincides with the critical point x_{2 * i}")
    return B.p


def edge_scales(F: FFunction, B: BulkStructure) -> NDArray[np.float64]:
    """Natural edge scales ``(|f''(x_k)| / 2) ** (1/3)``; the square-root law near ``a_k`` has width ``~ scale * N**(-2/3)``."""
    out = np.empty(B.edges.size)
    for k, x in enumerate(B.critical_points):
        out[k] = 0.0 if not math.isfinite(x) else abs(f_derivative(F, x, 2)) / 2.0
    return np.cbrt(out)


# ---------------------------------------------------------------- solver


@dataclass(frozen=True)
class StieltjesValue:
    z: complex
    m: complex
    converged: bool
    residual: float


def _real_bracket(F: FFunction, B: BulkStructure, z: float) -> tuple[float, float]:
    f = lambda t: f_eval(F, t)  # noqa: E731
    a1 = B.a(1)
    if z > a1:
        hi = B.x(1) / 2.0
        while f(hi) <= z:
            hi /= 2.0
        return B.x(1), hi
    for k in range(1, B.p):
        if B.a(2 * k + 1) < z < B.a(2 * k):
            return B.x(2 * k + 1), B.x(2 * k)
    c = F.c_N
    bottom = B.a(2 * B.p)
    xb = B.x(2 * B.p)
    if c < 1.0 and abs(c - 1.0) >= 1e-15:
        if z < bottom:
            lo = xb / 2.0
            while f(lo) >= z:
                lo /= 2.0
            return lo, xb
    else:
        if z < 0.0:
            lo, hi = 1.0, 1.0
            while f(lo) >= z:
                lo /= 2.0
            while f(hi) <= z:
                hi *= 2.0
            return lo, hi
        if 0.0 < z < bottom:
            lo = xb * 2.0
            while f(lo) >= z:
                lo *= 2.0
            return lo, xb
        if z == 0.0 and c > 1.0:
            raise DomainError("z = 0 carries the atom of zero eigenvalues")
    raise DomainError(f"real z = {z!r} lies in the support {B.support}")


def _solve_real(F: FFunction, B: BulkStructure, z: float) -> StieltjesValue:
    lo, hi = _real_bracket(F, B, z)
    g = lambda t: f_eval(F, t) - z  # noqa: E731
    if g(lo) == 0.0:
        m = lo
    elif g(hi) == 0.0:
        m = hi
    else:
        m = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = abs(g(m))
    return StieltjesValue(complex(z), complex(m), res <= SOLVER_TOL * max(1.0, abs(z)), res)


def _newton(F: FFunction, z: NDArray, m: NDArray, tol: NDArray, max_iter: int = 80) -> tuple[NDArray, NDArray]:
    f, fp = F._f_fp(m)
    res = np.abs(f - z)
    active = res > tol
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        step = (f[idx] - z[idx]) / fp[idx]
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(50):
            pi = np.flatnonzero(pending)
            if pi.size == 0:
                break
            cand = m[idx[pi]] - t[pi] * step[pi]
            with np.errstate(all="ignore"):
                fc, fpc = F._f_fp(cand)
            rc = np.abs(fc - z[idx[pi]])
            ok = np.isfinite(rc) & (cand.imag >= 0) & (rc < res[idx[pi]])
            acc = idx[pi[ok]]
            m[acc] = cand[ok]
            f[acc] = fc[ok]
            fp[acc] = fpc[ok]
            res[acc] = rc[ok]
            pending[pi[ok]] = False
            t[pi[~ok]] *= 0.5
        # elements that could not improve are stalled
        stalled = idx[pending]
        active[stalled] = False
        active[idx] &= res[idx] > tol[idx]
    return m, res


def _fixed_point(F: FFunction, z: NDArray, m: NDArray, tol: NDArray, max_iter: int = 20000) -> tuple[NDArray, NDArray]:
    inv = 1.0 / F.sigma
    w = F.weights
    c = F.c_N
    for _ in range(max_iter):
        T = 1.0 / (-z + ((w / inv) / (1.0 + m[:, None] / inv[None, :])).sum(axis=1) / c)
        m = 0.5 * m + 0.5 * T
        f, _ = F._f_fp(m)
        res = np.abs(f - z)
        if np.all(res <= tol):
            break
    return m, res


def solve_m_array(F: FFunction, z: ArrayLike, B: BulkStructure | None = None, strict: bool = True) -> tuple[NDArray, NDArray]:
    """Solve ``f(m) = z`` for many ``z`` with ``Im z > 0``; returns ``(m, residual)``.

    Newton's method is continued from large imaginary part down to the target,
    which keeps it on the ``Im m > 0`` branch. Points that stall fall back to a
    damped fixed-point iteration. With ``strict`` a ``ConvergenceError`` is
    raised if any point misses the tolerance.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    if np.any(z.imag <= 0):
        raise DomainError("solve_m_array needs Im z > 0; use solve_m for real z")
    shape = z.shape
    z = z.ravel()
    smax = float(F.sigma[0])
    extent = smax * (1.0 + 1.0 / math.sqrt(F.c_N)) ** 2 + 1.0
    eta = np.maximum(z.imag, 4.0 * (np.abs(z.real) + extent))
    m = -1.0 / (z.real + 1j * eta)
    final_tol = SOLVER_TOL * np.maximum(1.0, np.abs(z))
    while True:
        zk = z.real + 1j * eta
        last = bool(np.all(eta <= z.imag))
        tol = 1e-3 * final_tol if last else 1e-6 * np.maximum(1.0, np.abs(zk))
        m, res = _newton(F, zk, m, tol)
        if last:
            break
        eta = np.maximum(0.3 * eta, z.imag)
    bad = res > final_tol
    if bad.any():
        mb, rb = _fixed_point(F, z[bad], m[bad], final_tol[bad])
        m[bad], res[bad] = mb, rb
        bad = res > final_tol
    if strict and bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ConvergenceError(f"solve_m did not converge at z = {z[k]!r}", residual=float(res[k]))
    return m.reshape(shape), res.reshape(shape)


def solve_m(F: FFunction, z: complex, B: BulkStructure | None = None) -> StieltjesValue:
    """Stieltjes transform at one point: complex ``z`` in the upper half plane or real ``z`` off the support."""
    z = complex(z)
    if z.imag < 0:
        raise DomainError("z must have Im z >= 0")
    if z.imag == 0.0:
        if B is None:
            B = find_bulk_structure(F)
        return _solve_real(F, B, z.real)
    m, res = solve_m_array(F, np.array([z]))
    return StieltjesValue(z, complex(m[0]), True, float(res[0]))


# ---------------------------------------------------------------- density


def _eta0(B: BulkStructure) -> float:
    return ETA_FACTOR * max(B.width, 1e-12)


def density(F: FFunction, B: BulkStructure, E: ArrayLike, eta: float | None = None):
    """Continuous part of the limiting density, ``Im m(E + i eta0) / pi``; 0 off the support and for ``E <= 0``.

    The measure counts eigenvalues per sample (``1/N`` each), so its
    continuous part carries total mass ``min(M, N) / N``. Without an explicit
    ``eta`` the offset shrinks near the edges so that the square-root decay is
    not smeared; the edges themselves evaluate to 0.
    """
    arr = np.asarray(E, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.zeros(arr.shape)
    mask = B.in_support(arr) & (arr > 0)
    if eta is None:
        dist = np.min(np.abs(arr[:, None] - B.edges[None, :]), axis=1)
        mask &= dist > 0
        local = np.minimum(_eta0(B), 1e-4 * dist)
    else:
        local = np.full(arr.shape, float(eta))
    if mask.any():
        m, _ = solve_m_array(F, arr[mask] + 1j * local[mask])
        out[mask] = np.maximum(m.imag, 0.0) / math.pi
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class _ComponentCDF:
    """Antiderivative of the density over one component in the angle variable ``t``."""

    lo: float
    hi: float
    antideriv: Chebyshev
    mass: float

    def upper_mass(self, t: NDArray) -> NDArray:
        """Mass of ``[E(t), hi]``."""
        return self.mass - self.antideriv(t)

    def E(self, t: NDArray) -> NDArray:
        return self.lo + (self.hi - self.lo) * (1.0 - np.cos(t)) / 2.0


def _component_cdf(F: FFunction, B: BulkStructure, k: int, deg: int = 128, max_deg: int = 2048) -> _ComponentCDF:
    lo, hi = B.support[k]
    eta = _eta0(B)

    def integrand(t: NDArray) -> NDArray:
        E = lo + (hi - lo) * (1.0 - np.cos(t)) / 2.0
        # shrink eta near the ends so a hard edge at 0 is not smeared
        local = np.minimum(eta, 1e-4 * np.minimum(E - lo, hi - E))
        m, _ = solve_m_array(F, E + 1j * np.maximum(local, 1e-300))
        return np.maximum(m.imag, 0.0) / math.pi * (hi - lo) * np.sin(t) / 2.0

    while True:
        cheb = Chebyshev.interpolate(integrand, deg, domain=[0.0, math.pi])
        coef = np.abs(cheb.coef)
        if coef[-8:].max() <= 1e-8 * coef.max() or deg >= max_deg:
            break
        deg *= 2
    anti = cheb.integ(lbnd=0.0)
    return _ComponentCDF(lo, hi, anti, float(anti(math.pi)))


def component_masses(F: FFunction, B: BulkStructure) -> NDArray[np.float64]:
    """Integrated continuous density per component; ``N`` times a mass is the component's eigenvalue count."""
    return np.array([_component_cdf(F, B, k).mass for k in range(B.p)])


def classical_locations(F: FFunction, B: BulkStructure, N: int | None = None) -> list[NDArray[np.float64]]:
    """Classical locations per component, solving ``N * mass([gamma, a_{2i-1}]) = j - 1/2``.

    Returns one descending array of length ``N_i`` per component.
    """
    N = B.N if N is None else int(N)
    out: list[NDArray[np.float64]] = []
    for k in range(B.p):
        cdf = _component_cdf(F, B, k)
        count = int(B.bulk_counts[k]) if N == B.N else int(round(N * cdf.mass))
        targets = (np.arange(1, count + 1) - 0.5) / N
        if count and targets[-1] > cdf.mass + 1e-9:
            raise QuantileError(
                f"component {k + 1}: quantile {targets[-1]:.6g} exceeds available mass {cdf.mass:.6g}"
            )
        targets = np.minimum(targets, cdf.mass)
        t = _bisect(
            lambda tt: cdf.upper_mass(tt) - targets,
            np.zeros(count),
            np.full(count, math.pi),
            increasing=False,
            iters=200,
        )
        out.append(cdf.E(t))
    return out


# ---------------------------------------------------------------- checks


def check_edge_regularity(
    B: BulkStructure, F: FFunction, tau: float = 0.01, grid: int = 64, inner_frac: float = 0.05
) -> ValidationReport:
    """Report on edge regularity and a positive density floor inside each component."""
    rep = ValidationReport("edge_regularity")
    a = B.edges
    for k, ak in enumerate(a, start=1):
        rep.add(f"edge_positive[a{k}]", ak >= tau, float(ak), tau, "a_k >= tau")
    n = a.size
    for k in range(n):
        others = np.delete(a, k)
        if others.size == 0:
            continue
        j = int(np.argmin(np.abs(others - a[k])))
        jj = j + 1 if j >= k else j
        gap = float(abs(a[k] - others[j]))
        rep.add(f"edge_gap[a{k + 1}]", gap >= tau, gap, tau, f"nearest edge a{jj + 1}")
    poles = F.poles
    for k, xk in enumerate(B.critical_points, start=1):
        if not math.isfinite(xk):
            rep.add(f"pole_distance[x{k}]", True, math.inf, tau, "critical point at infinity")
            continue
        dist = float(np.min(np.abs(xk - poles)))
        rep.add(f"pole_distance[x{k}]", dist >= tau, dist, tau, "min_i |x_k + 1/sigma_i|")
    for k, (lo, hi) in enumerate(B.support, start=1):
        margin = inner_frac * (hi - lo)
        if hi - lo <= 2 * margin or hi <= lo:
            rep.add(f"density_floor[{k}]", False, 0.0, 0.0, "degenerate component")
            continue
        E = np.linspace(lo + margin, hi - margin, grid)
        rho = density(F, B, E)
        low = float(rho.min())
        rep.add(f"density_floor[{k}]", low > 0.0, low, 0.0, f"min density on inner {1 - 2 * inner_frac:.0%} of component")
    return rep


# ---------------------------------------------------------------- export


def write_density_csv(path: str | Path, E: ArrayLike, rho: ArrayLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["E", "rho"])
        for e, r in zip(np.asarray(E, dtype=float), np.asarray(rho, dtype=float)):
            w.writerow([repr(float(e)), repr(float(r))])


def write_gamma_csv(path: str | Path, gammas: Sequence[ArrayLike]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "j", "gamma"])
        for k, g in enumerate(gammas, start=1):
            for j, val in enumerate(np.asarray(g, dtype=float), start=1):
                w.writerow([k, j, repr(float(val))])
