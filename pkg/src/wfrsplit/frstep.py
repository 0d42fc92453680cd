"""Fisher-Rao proximal (reaction) step.

Because ``FR^2(rho, mu) = 4 ||sqrt(rho) - sqrt(mu)||^2`` the step

    min_rho  FR^2(rho, mu) / (2h) + sum_i [scale_i F(rho_i) + U_i rho_i] cellvol

decouples into one convex scalar problem per cell. In the variable
``r = sqrt(rho)`` the optimality condition reads

    r (1 + h U / 2) + (h / 2) scale F'(r^2) r - sqrt(mu) = 0,

which is increasing in ``r`` as soon as ``1 + h U / 2 > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._roots import solve_increasing
from .energy import EnergySpec, Nonlinearity, _power
from .grid import Grid

__all__ = [
    "ReactionSpec",
    "fr_distance",
    "fisher_rao_step",
    "fr_step_nutrient_c",
    "fr_optimality_residual",
    "sandwich_factors",
]

FR_RTOL = 1e-12


@dataclass(frozen=True)
class ReactionSpec:
    """Reaction energy ``scale F(rho) + potential rho`` with ``F`` power or zero.

    ``family`` records which model built the spec: ``"generic"``,
    ``"hele_shaw"`` (``F = rho^m/(m-1)``, ``U = -1``) or ``"nutrient"``
    (``scale = c + c1``, ``U = c2 - c - c1``).
    """

    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    potential: object = 0.0
    scale: object = 1.0
    family: str = "generic"

    def __post_init__(self):
        if self.nonlinearity.kind == "entropy":
            raise ValueError("the Boltzmann entropy cannot drive the Fisher-Rao (reaction) step")
        U = np.asarray(self.potential, dtype=float)
        s = np.asarray(self.scale, dtype=float)
        if not np.all(np.isfinite(U)):
            raise ValueError("reaction potential must have a finite max norm")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValueError("reaction scale must be finite and nonnegative")
        object.__setattr__(self, "potential", U)
        object.__setattr__(self, "scale", s)

    @classmethod
    def hele_shaw(cls, m: float):
        return cls(Nonlinearity.power(m), -1.0, 1.0, "hele_shaw")

    @classmethod
    def nutrient(cls, m: float, c, c1: float, c2: float):
        c = np.asarray(c, dtype=float)
        return cls(Nonlinearity.power(m), c2 - c - c1, c + c1, "nutrient")

    @property
    def energy(self) -> EnergySpec:
        return EnergySpec(self.nonlinearity, self.potential, self.scale, side="reaction")

    def max_negative_part(self) -> float:
        return float(np.max(np.maximum(-self.potential, 0.0), initial=0.0))


def fr_distance(rho, mu, grid: Grid) -> float:
    """Squared Fisher-Rao distance ``4 sum (sqrt(rho) - sqrt(mu))^2 cellvol``."""
    rho, mu = grid.check_cell_field(rho), grid.check_cell_field(mu)
    if np.any(rho < 0) or np.any(mu < 0):
        raise ValueError("Fisher-Rao distance needs nonnegative fields")
    return float(4.0 * np.sum((np.sqrt(rho) - np.sqrt(mu)) ** 2) * grid.cellvol)


def check_step_size(spec: ReactionSpec, h: float) -> None:
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    if h * spec.max_negative_part() >= 1.0:
        raise ValueError(
            f"time step h={h} too large for the reaction potential: "
            f"need h * max(U^-) < 1, got {h * spec.max_negative_part():.3g}")


def fisher_rao_step(mu, spec: ReactionSpec, h: float, rtol: float = FR_RTOL,
                    max_newton: int = 60) -> np.ndarray:
    """One Fisher-Rao JKO step from ``mu``; returns the pointwise minimiser."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("Fisher-Rao step needs a finite nonnegative input")
    check_step_size(spec, h)
    U = np.broadcast_to(spec.potential, mu.shape).astype(float)
    s = np.broadcast_to(spec.scale, mu.shape).astype(float)
    out = np.zeros(mu.shape)
    pos = mu > 0
    if not np.any(pos):
        return out
    sq = np.sqrt(mu[pos])
    lin = 1.0 + 0.5 * h * U[pos]
    upper = sq / lin  # F' >= 0 so the root never exceeds the linear solution
    if spec.nonlinearity.kind == "zero":
        out[pos] = upper ** 2
        return out

    m = spec.nonlinearity.m
    k = 0.5 * h * s[pos] * m / (m - 1.0)

    def phi(r, idx):
        r2m2 = _power(r, 2.0 * m - 2.0)
        return lin[idx] * r + k[idx] * r2m2 * r - sq[idx], lin[idx] + k[idx] * (2.0 * m - 1.0) * r2m2

    r = solve_increasing(phi, 0.0, upper, x0=np.minimum(sq, upper),
                         atol=rtol * (1.0 + sq), max_newton=max_newton)
    out[pos] = r ** 2
    return out


def fr_optimality_residual(rho, mu, spec: ReactionSpec, h: float) -> np.ndarray:
    """Residual of ``(sqrt(rho) - sqrt(mu)) sqrt(rho) + h/2 rho (scale F'(rho) + U)``."""
    rho, mu = np.asarray(rho, dtype=float), np.asarray(mu, dtype=float)
    fprime = np.broadcast_to(spec.scale, rho.shape) * spec.nonlinearity.derivative(rho)
    return (np.sqrt(rho) - np.sqrt(mu)) * np.sqrt(rho) + 0.5 * h * rho * (fprime + spec.potential)


def fr_step_nutrient_c(c_half, rho_half, h: float) -> np.ndarray:
    """Closed-form nutrient update ``c / (1 + h rho / 2)^2``."""
    c_half, rho_half = np.asarray(c_half, dtype=float), np.asarray(rho_half, dtype=float)
    if np.any(c_half < 0) or np.any(rho_half < 0):
        raise ValueError("nutrient step needs nonnegative inputs")
    return c_half / (1.0 + 0.5 * h * rho_half) ** 2


def sandwich_factors(mu, spec: ReactionSpec, h: float) -> tuple[float, float]:
    """Bounds ``(1 - c h, 1 + C h)`` on the pointwise ratio ``out / mu``.

    ``C = 3 max(U^-)`` in general and ``C = 1`` for the Hele-Shaw family.
    ``c = max(scale F'(M) + U)^+`` with ``M`` the largest output allowed by the
    upper bound.
    """
    mu = np.asarray(mu, dtype=float)
    if spec.family == "hele_shaw":
        upper = 1.0 + h
    else:
        upper = 1.0 + 3.0 * spec.max_negative_part() * h
    s = np.broadcast_to(spec.scale, mu.shape)
    U = np.broadcast_to(spec.potential, mu.shape)
    # largest output the bracket allows (exact linear-part bound)
    M = float(mu.max(initial=0.0)) / (1.0 - 0.5 * h * spec.max_negative_part()) ** 2
    fprime = s * spec.nonlinearity.derivative(np.full(mu.shape, M)) if M > 0 else np.zeros(mu.shape)
    c = float(np.max(np.maximum(fprime + U, 0.0), initial=0.0))
    return 1.0 - c * h, upper
