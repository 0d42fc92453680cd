"""Time-stepping drivers: one Wasserstein JKO step, then one Fisher-Rao step.

Four families share the same loop:

``scalar``
    ``d_t rho = div(rho grad(F1'(rho) + V1)) - rho (s2 F2'(rho) + V2)``
``prey_predator``
    two species with interaction potentials ``V_i = K * (s_i1 rho1 + s_i2 rho2)``
    and reactions ``G1 = A rho^2 / 2``, ``U1 = B rho2/(1+rho1) - A``,
    ``U2 = -B rho1/(1+rho1) + C``, all frozen at the last full step
``heleshaw``
    porous medium ``F_m`` for transport, ``F_m - int rho`` for the reaction
``nutrient``
    tumour density plus a nutrient that diffuses (entropy) and is consumed

Every step records a :class:`Diagnostics` row. The invariants that the
analysis guarantees (mass conservation of the transport step, sandwich bounds
of the reaction step, maximum principles) are measured and logged rather than
asserted, so that a run always completes and the record can be audited.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .energy import EnergySpec, Nonlinearity, energy_value, pressure
from .frstep import (ReactionSpec, fisher_rao_step, fr_distance, fr_step_nutrient_c,
                     sandwich_factors)
from .grid import Grid
from .wstep import ALG2Config, WStepReport, wasserstein_jko_step

__all__ = [
    "ModelConfig",
    "Diagnostics",
    "Trajectory",
    "run_scalar",
    "run_prey_predator",
    "run_heleshaw",
    "run_nutrient",
    "run_model",
    "quadratic_kernel",
]

FAMILIES = ("scalar", "prey_predator", "heleshaw", "nutrient")
SANDWICH_RTOL = 1e-12


def quadratic_kernel(*disp):
    return sum(d * d for d in disp)


@dataclass(frozen=True)
class ModelConfig:
    """Problem description for one driver run.

    Only the fields relevant to ``family`` are read. ``V1``/``V2`` accept a
    scalar or a cell array. ``kernel_signs`` holds ``(s11, s12, s21, s22)`` in
    ``V1 = K*(s11 rho1 + s12 rho2)``, ``V2 = K*(s21 rho1 + s22 rho2)``.
    """

    family: str = "scalar"
    n: tuple = (64,)
    lengths: tuple = ()
    origin: tuple = ()
    h: float = 0.01
    T: float = 0.1
    # scalar
    diffusion: str = "entropy"
    m1: float | None = None
    reaction: str = "zero"
    m2: float | None = None
    scale2: float = 1.0
    V1: object = 0.0
    V2: object = 0.0
    # prey-predator
    A: float = 10.0
    B: float = 70.0
    C: float = 5.0
    kernel_signs: tuple = (1.0, -1.0, 1.0, 1.0)
    # tumour models
    m: float = 100.0
    c1: float = 1.0
    c2: float = 0.5
    # solvers
    wstep: ALG2Config = field(default_factory=ALG2Config)
    fr_tol: float = 1e-12
    fr_max_newton: int = 60
    warm_start: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.T >= self.h * (1 - 1e-12):
            raise ValueError(f"horizon T={self.T} must be at least h={self.h}")
        if self.family in ("heleshaw", "nutrient") and not self.m > 2:
            raise ValueError(f"tumour models need m > 2, got {self.m}")
        if self.family == "prey_predator" and min(self.A, self.B, self.C) < 0:
            raise ValueError("prey-predator constants must be nonnegative")
        if self.family == "nutrient" and min(self.c1, self.c2) < 0:
            raise ValueError("nutrient constants must be nonnegative")
        if self.diffusion not in ("entropy", "power"):
            raise ValueError(f"diffusion must be 'entropy' or 'power', got {self.diffusion!r}")
        if self.reaction not in ("zero", "power"):
            raise ValueError(f"reaction must be 'zero' or 'power', got {self.reaction!r}")
        if len(self.kernel_signs) != 4:
            raise ValueError("kernel_signs needs four entries")
        object.__setattr__(self, "grid", Grid(tuple(np.atleast_1d(self.n)), tuple(self.lengths),
                                              tuple(self.origin)))

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def diffusion_nonlinearity(self) -> Nonlinearity:
        if self.diffusion == "entropy":
            return Nonlinearity.entropy()
        return Nonlinearity.power(self.m1)

    def reaction_nonlinearity(self) -> Nonlinearity:
        if self.reaction == "zero":
            return Nonlinearity.zero()
        return Nonlinearity.power(self.m2)


@dataclass
class Diagnostics:
    """One row per outer step (row 0 describes the initial datum)."""

    step: int
    t: float
    mass_rho: float
    linf_rho: float
    tv_rho: float
    energy1: float
    energy2: float
    fr_sq: float = 0.0
    w2_sq: float = 0.0
    complementarity: float = math.nan
    wstep_iters: int = 0
    converged: bool = True
    mass_2: float = math.nan
    linf_2: float = math.nan
    linf_half: float = math.nan
    linf_2_half: float = math.nan
    w_mass_drift: float = 0.0
    w_raw_drift: float = 0.0
    fr_ratio_min: float = math.nan
    fr_ratio_max: float = math.nan
    sandwich_lower: float = math.nan
    sandwich_upper: float = math.nan
    sandwich_violations: int = 0
    wall_time: float = 0.0

    COLUMNS = ()

    def as_row(self) -> dict:
        return asdict(self)


Diagnostics.COLUMNS = tuple(f.name for f in fields(Diagnostics))


@dataclass
class Trajectory:
    """Snapshots at full steps ``t_k = k h`` and half steps after each transport."""

    config: ModelConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    half_snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.config.grid

    @property
    def converged(self) -> bool:
        return all(d.converged for d in self.diagnostics)

    def field(self, name: str = "rho", half: bool = False) -> np.ndarray:
        snaps = self.half_snapshots if half else self.snapshots
        return np.stack([s[name] for s in snaps])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics], dtype=float)

    def at(self, t: float, name: str = "rho") -> np.ndarray:
        """Piecewise-constant interpolation ``rho_h(t) = rho^k`` for ``t`` in ``[t_k, t_{k+1})``."""
        k = int(np.clip(np.floor(t / self.config.h + 1e-9), 0, len(self.snapshots) - 1))
        return self.snapshots[k][name]


# ----------------------------------------------------------------------
# shared helpers
# ----------------------------------------------------------------------
class _Transport:
    """Wasserstein step with warm starts carried across outer steps."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.state = None

    def __call__(self, rho, spec: EnergySpec):
        grid = self.cfg.grid
        mass = grid.mass(rho)
        if mass <= 0:
            return np.zeros(grid.shape), WStepReport(0, 0.0, 0.0, 0.0, energy_value(spec, rho, grid),
                                                     True, 0.0)
        init = self.state if self.cfg.warm_start else None
        out, rep = wasserstein_jko_step(rho, spec, self.cfg.h, grid, self.cfg.wstep, init=init)
        self.state = rep.state
        return out, rep


def _sandwich(mu, out, spec: ReactionSpec, h: float):
    lo, hi = sandwich_factors(mu, spec, h)
    pos = mu > 0
    if not np.any(pos):
        return math.nan, math.nan, lo, hi, 0
    ratio = out[pos] / mu[pos]
    bad = (ratio < lo * (1 - SANDWICH_RTOL)) | (ratio > hi * (1 + SANDWICH_RTOL))
    # support equality is part of the same statement
    bad_support = int(np.count_nonzero(out[~pos] != 0))
    return float(ratio.min()), float(ratio.max()), lo, hi, int(bad.sum()) + bad_support


def _reaction(mu, spec: ReactionSpec, cfg: ModelConfig):
    out = fisher_rao_step(mu, spec, cfg.h, rtol=cfg.fr_tol, max_newton=cfg.fr_max_newton)
    return out, _sandwich(mu, out, spec, cfg.h)


def _check_initial(rho, grid: Grid, name="rho0"):
    rho = np.array(grid.check_cell_field(rho), dtype=float)
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"{name} must be finite")
    if np.any(rho < 0):
        raise ValueError(f"{name} must be nonnegative")
    return rho


def _check_tumour(rho):
    if rho.max(initial=0.0) > 1.0:
        raise ValueError("tumour models need an initial density <= 1")


def _initial_row(grid, rho, e1, e2, **extra):
    return Diagnostics(step=0, t=0.0, mass_rho=grid.mass(rho), linf_rho=float(rho.max()),
                       tv_rho=grid.total_variation(rho), energy1=e1, energy2=e2, **extra)


def _combine(reps):
    return (sum(r.iterations for r in reps), all(r.converged for r in reps),
            max(r.mass_drift for r in reps), max(r.raw_mass_drift for r in reps))


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------
def run_scalar(cfg: ModelConfig, rho0, progress=None) -> Trajectory:
    grid = cfg.grid
    rho = _check_initial(rho0, grid)
    e1 = EnergySpec(cfg.diffusion_nonlinearity(), cfg.V1, 1.0, "diffusion", grid)
    e2 = ReactionSpec(cfg.reaction_nonlinearity(), cfg.V2, cfg.scale2)
    transport = _Transport(cfg)
    traj = Trajectory(cfg, [0.0], [{"rho": rho.copy()}])
    traj.diagnostics.append(_initial_row(grid, rho, energy_value(e1, rho, grid),
                                         energy_value(e2.energy, rho, grid)))
    for k in range(cfg.steps):
        t0 = time.perf_counter()
        half, rep = transport(rho, e1)
        new, (rmin, rmax, lo, hi, nbad) = _reaction(half, e2, cfg)
        iters, conv, drift, raw = _combine([rep])
        t = (k + 1) * cfg.h
        traj.diagnostics.append(Diagnostics(
            step=k + 1, t=t, mass_rho=grid.mass(new), linf_rho=float(new.max()),
            tv_rho=grid.total_variation(new), energy1=energy_value(e1, new, grid),
            energy2=energy_value(e2.energy, new, grid), fr_sq=fr_distance(new, half, grid),
            w2_sq=rep.action, wstep_iters=iters, converged=conv, linf_half=float(half.max()),
            w_mass_drift=drift, w_raw_drift=raw, fr_ratio_min=rmin, fr_ratio_max=rmax,
            sandwich_lower=lo, sandwich_upper=hi, sandwich_violations=nbad,
            wall_time=time.perf_counter() - t0))
        traj.times.append(t)
        traj.half_snapshots.append({"rho": half})
        traj.snapshots.append({"rho": new.copy()})
        rho = new
        if progress:
            progress(traj.diagnostics[-1])
    return traj


def _interaction(cfg: ModelConfig, r1, r2):
    grid = cfg.grid
    k1 = grid.convolve(quadratic_kernel, r1)
    k2 = grid.convolve(quadratic_kernel, r2)
    s11, s12, s21, s22 = cfg.kernel_signs
    return s11 * k1 + s12 * k2, s21 * k1 + s22 * k2


def run_prey_predator(cfg: ModelConfig, rho1_0, rho2_0, progress=None) -> Trajectory:
    """Semi-implicit two-species scheme; potentials and reactions use the last full step."""
    grid = cfg.grid
    r1 = _check_initial(rho1_0, grid, "rho1_0")
    r2 = _check_initial(rho2_0, grid, "rho2_0")
    A, B, C = cfg.A, cfg.B, cfg.C
    ent = Nonlinearity.entropy()
    g1 = Nonlinearity.power(2.0)
    tr1, tr2 = _Transport(cfg), _Transport(cfg)

    def specs(r1, r2):
        V1, V2 = _interaction(cfg, r1, r2)
        U1 = B * r2 / (1.0 + r1) - A
        U2 = -B * r1 / (1.0 + r1) + C
        return (EnergySpec(ent, V1, 1.0, "diffusion", grid), EnergySpec(ent, V2, 1.0, "diffusion", grid),
                ReactionSpec(g1, U1, 0.5 * A), ReactionSpec(Nonlinearity.zero(), U2))

    def energies(w1, w2, f1, f2, r1, r2):
        return (energy_value(w1, r1, grid) + energy_value(w2, r2, grid),
                energy_value(f1.energy, r1, grid) + energy_value(f2.energy, r2, grid))

    w1, w2, f1, f2 = specs(r1, r2)
    traj = Trajectory(cfg, [0.0], [{"rho": r1.copy(), "rho2": r2.copy()}])
    traj.diagnostics.append(_initial_row(grid, r1, *energies(w1, w2, f1, f2, r1, r2),
                                         mass_2=grid.mass(r2), linf_2=float(r2.max())))
    for k in range(cfg.steps):
        t0 = time.perf_counter()
        h1, rep1 = tr1(r1, w1)
        h2, rep2 = tr2(r2, w2)
        n1, s1 = _reaction(h1, f1, cfg)
        n2, s2 = _reaction(h2, f2, cfg)
        iters, conv, drift, raw = _combine([rep1, rep2])
        t = (k + 1) * cfg.h
        e1, e2 = energies(w1, w2, f1, f2, n1, n2)
        traj.diagnostics.append(Diagnostics(
            step=k + 1, t=t, mass_rho=grid.mass(n1), linf_rho=float(n1.max()),
            tv_rho=grid.total_variation(n1), energy1=e1, energy2=e2,
            fr_sq=fr_distance(n1, h1, grid) + fr_distance(n2, h2, grid),
            w2_sq=rep1.action + rep2.action, wstep_iters=iters, converged=conv,
            mass_2=grid.mass(n2), linf_2=float(n2.max()), linf_half=float(h1.max()),
            linf_2_half=float(h2.max()), w_mass_drift=drift, w_raw_drift=raw,
            fr_ratio_min=min(s1[0], s2[0]), fr_ratio_max=max(s1[1], s2[1]),
            sandwich_lower=min(s1[2], s2[2]), sandwich_upper=max(s1[3], s2[3]),
            sandwich_violations=s1[4] + s2[4], wall_time=time.perf_counter() - t0))
        traj.times.append(t)
        traj.half_snapshots.append({"rho": h1, "rho2": h2})
        traj.snapshots.append({"rho": n1.copy(), "rho2": n2.copy()})
        r1, r2 = n1, n2
        w1, w2, f1, f2 = specs(r1, r2)
        if progress:
            progress(traj.diagnostics[-1])
    return traj


def _complementarity(grid, rho, m):
    return grid.inner(pressure(rho, m), 1.0 - rho)


def run_heleshaw(cfg: ModelConfig, rho0, progress=None) -> Trajectory:
    grid = cfg.grid
    rho = _check_initial(rho0, grid)
    _check_tumour(rho)
    m = cfg.m
    w = EnergySpec(Nonlinearity.power(m), 0.0, 1.0, "diffusion", grid)  # -int rho is inert here
    f = ReactionSpec.hele_shaw(m)
    transport = _Transport(cfg)
    traj = Trajectory(cfg, [0.0], [{"rho": rho.copy(), "p": pressure(rho, m)}])
    traj.diagnostics.append(_initial_row(grid, rho, energy_value(w, rho, grid),
                                         energy_value(f.energy, rho, grid),
                                         complementarity=_complementarity(grid, rho, m)))
    for k in range(cfg.steps):
        t0 = time.perf_counter()
        half, rep = transport(rho, w)
        new, (rmin, rmax, lo, hi, nbad) = _reaction(half, f, cfg)
        iters, conv, drift, raw = _combine([rep])
        t = (k + 1) * cfg.h
        traj.diagnostics.append(Diagnostics(
            step=k + 1, t=t, mass_rho=grid.mass(new), linf_rho=float(new.max()),
            tv_rho=grid.total_variation(new), energy1=energy_value(w, new, grid),
            energy2=energy_value(f.energy, new, grid), fr_sq=fr_distance(new, half, grid),
            w2_sq=rep.action, complementarity=_complementarity(grid, new, m),
            wstep_iters=iters, converged=conv, linf_half=float(half.max()),
            w_mass_drift=drift, w_raw_drift=raw, fr_ratio_min=rmin, fr_ratio_max=rmax,
            sandwich_lower=lo, sandwich_upper=hi, sandwich_violations=nbad,
            wall_time=time.perf_counter() - t0))
        traj.times.append(t)
        traj.half_snapshots.append({"rho": half, "p": pressure(half, m)})
        traj.snapshots.append({"rho": new.copy(), "p": pressure(new, m)})
        rho = new
        if progress:
            progress(traj.diagnostics[-1])
    return traj


def run_nutrient(cfg: ModelConfig, rho0, c0, progress=None) -> Trajectory:
    """Tumour with nutrient. The nutrient transport step uses the entropy of ``c``."""
    grid = cfg.grid
    rho = _check_initial(rho0, grid)
    c = _check_initial(c0, grid, "c0")
    _check_tumour(rho)
    m = cfg.m
    w_rho = EnergySpec(Nonlinearity.power(m), 0.0, 1.0, "diffusion", grid)
    w_c = EnergySpec(Nonlinearity.entropy(), 0.0, 1.0, "diffusion", grid)
    tr_rho, tr_c = _Transport(cfg), _Transport(cfg)

    def e2(rho, c):
        return energy_value(ReactionSpec.nutrient(m, c, cfg.c1, cfg.c2).energy, rho, grid)

    traj = Trajectory(cfg, [0.0], [{"rho": rho.copy(), "c": c.copy(), "p": pressure(rho, m)}])
    traj.diagnostics.append(_initial_row(grid, rho, energy_value(w_rho, rho, grid), e2(rho, c),
                                         complementarity=_complementarity(grid, rho, m),
                                         mass_2=grid.mass(c), linf_2=float(c.max())))
    for k in range(cfg.steps):
        t0 = time.perf_counter()
        rho_half, rep1 = tr_rho(rho, w_rho)
        c_half, rep2 = tr_c(c, w_c)
        f = ReactionSpec.nutrient(m, c_half, cfg.c1, cfg.c2)
        new, (rmin, rmax, lo, hi, nbad) = _reaction(rho_half, f, cfg)
        c_new = fr_step_nutrient_c(c_half, rho_half, cfg.h)
        iters, conv, drift, raw = _combine([rep1, rep2])
        t = (k + 1) * cfg.h
        traj.diagnostics.append(Diagnostics(
            step=k + 1, t=t, mass_rho=grid.mass(new), linf_rho=float(new.max()),
            tv_rho=grid.total_variation(new), energy1=energy_value(w_rho, new, grid),
            energy2=e2(new, c_new), fr_sq=fr_distance(new, rho_half, grid),
            w2_sq=rep1.action, complementarity=_complementarity(grid, new, m),
            wstep_iters=iters, converged=conv, mass_2=grid.mass(c_new),
            linf_2=float(c_new.max()), linf_half=float(rho_half.max()),
            linf_2_half=float(c_half.max()), w_mass_drift=drift, w_raw_drift=raw,
            fr_ratio_min=rmin, fr_ratio_max=rmax, sandwich_lower=lo, sandwich_upper=hi,
            sandwich_violations=nbad, wall_time=time.perf_counter() - t0))
        traj.times.append(t)
        traj.half_snapshots.append({"rho": rho_half, "c": c_half, "p": pressure(rho_half, m)})
        traj.snapshots.append({"rho": new.copy(), "c": c_new.copy(), "p": pressure(new, m)})
        rho, c = new, c_new
        if progress:
            progress(traj.diagnostics[-1])
    return traj


def run_model(cfg: ModelConfig, initial: dict, progress=None) -> Trajectory:
    """Dispatch on ``cfg.family``; ``initial`` maps field names to arrays."""
    if cfg.family == "scalar":
        return run_scalar(cfg, initial["rho"], progress)
    if cfg.family == "prey_predator":
        return run_prey_predator(cfg, initial["rho"], initial["rho2"], progress)
    if cfg.family == "heleshaw":
        return run_heleshaw(cfg, initial["rho"], progress)
    return run_nutrient(cfg, initial["rho"], initial["c"], progress)
