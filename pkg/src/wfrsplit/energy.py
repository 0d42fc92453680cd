"""Internal energies, potentials and their pointwise proximal maps.

An energy here is ``E(rho) = sum_i [scale_i F(rho_i) + V_i rho_i] * cellvol``
with ``F`` one of

* ``entropy``: ``F(z) = z log z - z`` (linear diffusion),
* ``power(m)``: ``F(z) = z**m / (m - 1)`` with ``m > 1`` (porous medium),
* ``zero``: ``F = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from ._roots import solve_increasing
from .grid import Grid

__all__ = [
    "Nonlinearity",
    "EnergySpec",
    "energy_value",
    "pressure",
    "prox_internal",
]

_TINY = 1e-300
PROX_RTOL = 1e-11


def _power(z, p):
    """``z**p`` for ``z >= 0`` evaluated in log space (safe for large ``p``)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.exp(p * np.log(np.maximum(z, _TINY)))
    return np.where(z > 0, out, 0.0)


def pressure(rho, m: float) -> np.ndarray:
    """Porous-medium pressure ``m/(m-1) * rho**(m-1)``; zero where ``rho == 0``."""
    if m <= 1:
        raise ValueError(f"pressure needs m > 1, got {m}")
    return m / (m - 1.0) * _power(rho, m - 1.0)


@dataclass(frozen=True)
class Nonlinearity:
    kind: str = "zero"
    m: float | None = None

    def __post_init__(self):
        if self.kind not in ("entropy", "power", "zero"):
            raise ValueError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == "power":
            if self.m is None or not self.m > 1:
                raise ValueError(f"power nonlinearity requires m > 1, got {self.m}")
            object.__setattr__(self, "m", float(self.m))

    @classmethod
    def entropy(cls):
        return cls("entropy")

    @classmethod
    def power(cls, m):
        return cls("power", m)

    @classmethod
    def zero(cls):
        return cls("zero")

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "entropy":
            return xlogy(z, z) - z
        if self.kind == "power":
            return _power(z, self.m) / (self.m - 1.0)
        return np.zeros_like(z)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "entropy":
            with np.errstate(divide="ignore"):
                return np.log(z)
        if self.kind == "power":
            return pressure(z, self.m)
        return np.zeros_like(z)

    def inverse_derivative(self, y):
        """``(F')^{-1}``, used for the transport-step maximum principle."""
        y = np.asarray(y, dtype=float)
        if self.kind == "entropy":
            return np.exp(y)
        if self.kind == "power":
            m = self.m
            return _power(np.maximum(y, 0.0) * (m - 1.0) / m, 1.0 / (m - 1.0))
        raise ValueError("zero nonlinearity has no inverse derivative")

    def __str__(self):
        return f"power({self.m:g})" if self.kind == "power" else self.kind


@dataclass(frozen=True)
class EnergySpec:
    """Energy ``scale * F(rho) + potential * rho`` integrated over the grid.

    ``side`` is ``"diffusion"`` (used by the Wasserstein step) or
    ``"reaction"`` (Fisher-Rao step). The Boltzmann entropy is not admissible
    on the reaction side. ``potential`` and ``scale`` are scalars or cell
    fields; ``scale`` must be nonnegative.
    """

    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    potential: object = 0.0
    scale: object = 1.0
    side: str = "diffusion"
    grid: Grid | None = None

    def __post_init__(self):
        if self.side not in ("diffusion", "reaction"):
            raise ValueError(f"side must be 'diffusion' or 'reaction', got {self.side!r}")
        if self.side == "reaction" and self.nonlinearity.kind == "entropy":
            raise ValueError("the Boltzmann entropy cannot drive the Fisher-Rao (reaction) step")
        V = np.asarray(self.potential, dtype=float)
        s = np.asarray(self.scale, dtype=float)
        if not np.all(np.isfinite(V)):
            raise ValueError("potential must be finite (bounded on the grid)")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValueError("scale must be finite and nonnegative")
        if self.grid is not None:
            for arr, name in ((V, "potential"), (s, "scale")):
                if arr.ndim and arr.shape != self.grid.shape:
                    raise ValueError(f"{name} shape {arr.shape} does not match grid {self.grid.shape}")
            if self.side == "diffusion" and V.ndim:
                grad = self.grid.gradient(V).components
                if not all(np.all(np.isfinite(g)) for g in grad):
                    raise ValueError("diffusion-side potential must be Lipschitz on the grid")
        object.__setattr__(self, "potential", V)
        object.__setattr__(self, "scale", s)

    def density(self, rho):
        """Pointwise integrand ``scale F(rho) + V rho``."""
        rho = np.asarray(rho, dtype=float)
        return self.scale * self.nonlinearity.value(rho) + self.potential * rho

    def first_variation(self, rho):
        return self.scale * self.nonlinearity.derivative(rho) + self.potential

    def with_potential(self, potential):
        return EnergySpec(self.nonlinearity, potential, self.scale, self.side, self.grid)


def energy_value(spec: EnergySpec, rho, grid: Grid) -> float:
    rho = grid.check_cell_field(rho)
    return float(np.sum(np.broadcast_to(spec.density(rho), grid.shape)) * grid.cellvol)


def prox_internal(spec: EnergySpec, tau: float, z, rtol: float = PROX_RTOL, max_newton: int = 60):
    """Pointwise minimiser of ``(rho - z)**2 / (2 tau) + scale F(rho) + V rho`` over ``rho >= 0``.

    Solves ``(rho - z)/tau + scale F'(rho) + V = 0`` to ``|.| <= rtol (1 + |z|)``
    where the minimiser is positive; returns 0 where the constraint is active.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = np.asarray(z, dtype=float)
    V = np.broadcast_to(spec.potential, z.shape).astype(float)
    s = np.broadcast_to(spec.scale, z.shape).astype(float)
    kind = spec.nonlinearity.kind
    atol = rtol * (1.0 + np.abs(z))

    if kind == "zero" or not np.any(s > 0):
        if kind == "entropy":
            raise ValueError("entropy prox needs a positive scale")
        return np.maximum(z - tau * V, 0.0)

    if kind == "entropy":
        # root in s = log(rho): g(s) = (e^s - z)/tau + scale*s + V is increasing
        zf, Vf, sf = z.ravel(), V.ravel(), s.ravel()
        hi = np.log(np.maximum(zf, 0.0) + tau * np.abs(Vf) / np.minimum(sf, 1.0) + 1.0)
        lo = np.minimum(0.0, (-Vf - (1.0 - zf) / tau) / sf - 1.0)

        def g(x, idx):
            ex = np.exp(x)
            return (ex - zf[idx]) / tau + sf[idx] * x + Vf[idx], ex / tau + sf[idx]

        x0 = np.log(np.clip(zf, np.exp(lo), np.exp(hi)))
        logr = solve_increasing(g, lo, hi, x0=x0, atol=atol.ravel(), max_newton=max_newton)
        return np.exp(logr).reshape(z.shape)

    m = spec.nonlinearity.m
    out = np.zeros(z.size)
    cap = (z - tau * V).ravel()  # root lies in (0, cap] since F' >= 0
    pos = np.flatnonzero(cap > 0)
    if pos.size:
        zf, Vf, sf = z.ravel()[pos], V.ravel()[pos], s.ravel()[pos]
        c = m / (m - 1.0)

        def g(x, idx):
            xm2 = _power(x, m - 2.0)
            return ((x - zf[idx]) / tau + sf[idx] * c * xm2 * x + Vf[idx],
                    1.0 / tau + sf[idx] * m * xm2)

        out[pos] = solve_increasing(g, 0.0, cap[pos], x0=cap[pos],
                                    atol=atol.ravel()[pos], max_newton=max_newton)
    return out.reshape(z.shape)
