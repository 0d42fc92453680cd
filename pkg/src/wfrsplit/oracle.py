"""Slow, independent reference computations used by the tests and `validate`.

Nothing here imports the solver modules: the point of an oracle is to fail
differently from the code it checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantileRepresentation",
    "w2_exact_1d",
    "brute_force_pointwise",
    "bisect_root",
    "fd_reference_scalar",
    "FDTrajectory",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuantileRepresentation:
    """Piecewise-linear inverse CDF of a 1D cell density, normalised to unit mass."""

    edges: np.ndarray
    cumulative: np.ndarray
    mass: float

    @classmethod
    def from_density(cls, values, length: float = 1.0, origin: float = 0.0):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1:
            raise ValueError("quantile representation needs a 1D density")
        if np.any(values < 0):
            raise ValueError("density must be nonnegative")
        n = values.size
        dx = length / n
        cells = values * dx
        mass = float(cells.sum())
        if mass <= 0:
            raise ValueError("density must have positive mass")
        cum = np.concatenate([[0.0], np.cumsum(cells) / mass])
        cum[-1] = 1.0
        edges = origin + dx * np.arange(n + 1)
        return cls(edges, cum, mass)

    def quantile(self, s):
        s = np.asarray(s, dtype=float)
        cum = self.cumulative
        # cell containing level s; empty cells have zero width in cum and are skipped
        i = np.clip(np.searchsorted(cum, s, side="left") - 1, 0, cum.size - 2)
        width = cum[i + 1] - cum[i]
        frac = np.divide(s - cum[i], width, out=np.zeros_like(s), where=width > 0)
        dx = self.edges[i + 1] - self.edges[i]
        return self.edges[i] + np.clip(frac, 0.0, 1.0) * dx


def w2_exact_1d(rho0, rho1, length: float = 1.0, origin: float = 0.0,
                nodes: int = 20000, rtol_mass: float = 1e-10) -> float:
    """Squared W2 distance between two 1D densities on the same uniform grid.

    ``mass * int_0^1 |Q0(s) - Q1(s)|^2 ds`` by composite midpoint quadrature.
    """
    if nodes < 10_000:
        raise ValueError("use at least 1e4 quadrature nodes")
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    dx = length / rho0.size
    m0, m1 = rho0.sum() * dx, rho1.sum() * dx
    if abs(m0 - m1) > rtol_mass * max(m0, m1):
        raise ValueError(f"masses differ: {m0} vs {m1}")
    if m0 == 0:
        return 0.0
    q0 = QuantileRepresentation.from_density(rho0, length, origin)
    q1 = QuantileRepresentation.from_density(rho1, length, origin)
    s = (np.arange(nodes) + 0.5) / nodes
    diff = q0.quantile(s) - q1.quantile(s)
    return float(m0 * np.mean(diff * diff))


def brute_force_pointwise(objective, bracket, tol: float = 1e-13, allow_boundary: bool = True,
                          max_iter: int = 500, derivative=None) -> float:
    """Minimiser of a unimodal scalar function on ``bracket``.

    Golden-section search alone resolves the minimiser only to about the
    square root of machine precision because the objective is flat there.
    When ``derivative`` is given the search is finished by bisection on its
    sign, which is accurate to ``tol``.

    With ``allow_boundary=False`` a minimiser sitting on an end of the
    bracket is reported as an error.
    """
    lo, hi = (float(v) for v in bracket)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"invalid bracket {bracket}")
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    x = 0.5 * (a + b)
    if derivative is not None:
        # widen the golden-section interval well past its rounding floor
        w = max(1e-6 * (1.0 + abs(x)), b - a)
        a, b = max(lo, x - w), min(hi, x + w)
        while a > lo and derivative(a) > 0:
            a = max(lo, a - 2 * (b - a))
        while b < hi and derivative(b) < 0:
            b = min(hi, b + 2 * (b - a))
        if derivative(a) >= 0:
            x = a
        elif derivative(b) <= 0:
            x = b
        else:
            x = bisect_root(derivative, (a, b), tol=tol)
    if not allow_boundary:
        edge = 10 * tol * (1.0 + abs(lo) + abs(hi))
        if x - lo <= edge or hi - x <= edge:
            raise ValueError("bracket does not contain an interior minimum")
    return x


def bisect_root(fun, bracket, tol: float = 1e-14, max_iter: int = 400) -> float:
    """Root of a continuous scalar function with a sign change on ``bracket``."""
    lo, hi = (float(v) for v in bracket)
    flo, fhi = fun(lo), fun(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("bracket does not contain a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if fm == 0 or hi - lo <= tol * (1.0 + abs(mid)):
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class FDTrajectory:
    times: np.ndarray
    snapshots: list
    substeps: int


def _pressure_fd(rho, diffusion, m1):
    if diffusion == "entropy":
        return rho
    if diffusion == "power":
        return np.power(np.maximum(rho, 0.0), m1)
    return np.zeros_like(rho)


def _pressure_slope(rho, diffusion, m1):
    if diffusion == "entropy":
        return np.ones_like(rho)
    if diffusion == "power":
        return m1 * np.power(np.maximum(rho, 0.0), m1 - 1.0)
    return np.zeros_like(rho)


def fd_reference_scalar(cfg, rho0, times=None, cfl: float = 0.4) -> FDTrajectory:
    """Explicit finite-volume solve of the 1D scalar equation

        d_t rho = (P(rho))_xx + (rho V1_x)_x - rho (s2 F2'(rho) + V2)

    with zero flux at both ends, where ``P(rho) = rho`` for entropy diffusion
    and ``rho^m1`` for power diffusion. ``cfg`` is read by attribute:
    ``n``, ``lengths``, ``h``, ``T``, ``diffusion`` (``"entropy"``,
    ``"power"`` or ``"none"``), ``m1``, ``reaction`` (``"zero"`` or
    ``"power"``), ``m2``, ``V1`` and ``V2`` (scalars or cell arrays).
    Snapshots are returned at multiples of ``h`` up to ``T`` unless ``times``
    is given. The internal step obeys the explicit stability limit.
    """
    n = int(np.atleast_1d(cfg.n)[0])
    if len(np.atleast_1d(cfg.n)) != 1:
        raise ValueError("the finite-difference reference is 1D only")
    length = float(np.atleast_1d(cfg.lengths)[0]) if getattr(cfg, "lengths", ()) else 1.0
    dx = length / n
    rho = np.array(rho0, dtype=float)
    V1 = np.broadcast_to(np.asarray(getattr(cfg, "V1", 0.0), dtype=float), (n,))
    V2 = np.broadcast_to(np.asarray(getattr(cfg, "V2", 0.0), dtype=float), (n,))
    s2 = getattr(cfg, "scale2", 1.0)
    diffusion = getattr(cfg, "diffusion", "entropy")
    m1 = getattr(cfg, "m1", None)
    reaction = getattr(cfg, "reaction", "zero")
    m2 = getattr(cfg, "m2", None)
    dV = np.diff(V1) / dx
    if times is None:
        steps = int(round(cfg.T / cfg.h))
        times = cfg.h * np.arange(steps + 1)
    times = np.asarray(times, dtype=float)

    def rhs(r):
        P = _pressure_fd(r, diffusion, m1)
        # face flux of -(P_x + rho V1_x), upwinded in the drift
        drift = np.where(dV > 0, r[1:], r[:-1]) * dV
        flux = -(np.diff(P) / dx) - drift
        # conservative update: rho_t = -(flux_{i+1/2} - flux_{i-1/2}) / dx
        div = np.zeros(n)
        div[:-1] -= flux
        div[1:] += flux
        div /= dx
        growth = V2.copy()
        if reaction == "power":
            growth = growth + s2 * m2 / (m2 - 1.0) * np.power(np.maximum(r, 0.0), m2 - 1.0)
        return div - r * growth

    out = [rho.copy()]
    t = float(times[0])
    total_sub = 0
    for target in times[1:]:
        while t < target - 1e-14:
            slope = float(np.max(_pressure_slope(rho, diffusion, m1), initial=0.0))
            limits = [target - t]
            if slope > 0:
                limits.append(cfl * dx * dx / slope)
            vmax = float(np.max(np.abs(dV), initial=0.0))
            if vmax > 0:
                limits.append(cfl * dx / vmax)
            rmax = float(np.max(np.abs(V2), initial=0.0))
            if reaction == "power":
                rmax += s2 * m2 / (m2 - 1.0) * float(np.max(rho, initial=0.0)) ** (m2 - 1.0)
            if rmax > 0:
                # explicit Euler on the reaction: keep the relative change per substep at 1%
                limits.append(0.01 / rmax)
            dt = min(limits)
            rho = np.maximum(rho + dt * rhs(rho), 0.0)
            t += dt
            total_sub += 1
        out.append(rho.copy())
    return FDTrajectory(times, out, total_sub)
