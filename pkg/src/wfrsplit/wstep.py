"""Wasserstein JKO step by ALG2 on the Benamou-Brenier formulation.

The step ``min_{|rho| = |rho0|} W^2(rho, rho0) / (2h) + E(rho)`` is rewritten on
the artificial time interval [0, 1] and dualised in a space-time potential
``phi``. With ``q = (a, b, c)`` standing for ``(d_t phi, grad phi, -phi(1))`` the
problem is

    min_phi  <rho0, phi(0)> + i_K(d_t phi, grad phi) + (hE)^*(-phi(1)),
    K = {(a, b) : a + |b|^2 / 2 <= 0},

and ALG2 (ADMM on the augmented Lagrangian with penalty ``r``) alternates

1. a linear space-time Poisson solve for ``phi``,
2. a pointwise projection onto ``K`` plus a pointwise prox of ``E`` at time 1,
3. a multiplier update. The multipliers are the density/momentum path.

Discretisation: ``phi`` lives on inner-time nodes ``t_k = k/n_t`` times cell
centres; ``a`` and the density path ``mu`` on time midpoints times cells.
Spatial gradients sit on interior faces (zero flux through the boundary),
are averaged in time, and are copied into the two neighbouring cells with
weight ``1/sqrt(2)`` so that the projection is pointwise per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .energy import EnergySpec, energy_value, prox_internal
from .grid import Grid

__all__ = [
    "ALG2Config",
    "SpaceTimeStaggered",
    "WStepReport",
    "wasserstein_jko_step",
    "dynamic_w2",
    "project_paraboloid",
]

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ALG2Config:
    """Solver settings (config keys ``wstep.*``).

    ``tol`` bounds both ADMM residuals, measured in the cell-volume weighted
    L2 norm and divided by the mass of the input density.
    """

    tol: float = 1e-6
    max_iter: int = 3000
    n_t: int = 8
    r_admm: float = 1.0
    linear_solver: str = "spectral"
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    proj_max_newton: int = 40
    proj_tol: float = 1e-12
    relaxation: float = 1.0
    check_every: int = 5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("wstep.tol must be positive")
        if self.max_iter < 1:
            raise ValueError("wstep.max_iter must be >= 1")
        if not 1 <= self.n_t <= 64:
            raise ValueError("wstep.n_t must lie in [1, 64]")
        if not self.r_admm > 0:
            raise ValueError("wstep.r_admm must be positive")
        if self.linear_solver not in ("spectral", "cg"):
            raise ValueError("wstep.linear_solver must be 'spectral' or 'cg'")


@dataclass
class SpaceTimeStaggered:
    """ALG2 working state.

    ``phi`` (n_t+1, *shape); ``a`` and ``mu`` (n_t, *shape); ``b`` and ``mom``
    (2*dim, n_t, *shape) ordered as (x-, x+, y-, y+) face copies; ``c`` and
    ``rho1`` (*shape) at inner time 1; ``rho0`` is the endpoint the state was
    built for.
    """

    grid: Grid
    n_t: int
    phi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    mu: np.ndarray
    mom: np.ndarray
    rho1: np.ndarray
    rho0: np.ndarray
    r_admm: float

    @classmethod
    def static(cls, grid: Grid, n_t: int, rho0, r_admm: float, rho1=None):
        shape = grid.shape
        rho0 = np.asarray(rho0, dtype=float)
        rho1 = rho0 if rho1 is None else np.asarray(rho1, dtype=float)
        s = (np.arange(n_t) + 0.5) / n_t
        mu = (1 - s).reshape((-1,) + (1,) * grid.dim) * rho0 + s.reshape((-1,) + (1,) * grid.dim) * rho1
        return cls(
            grid=grid, n_t=n_t,
            phi=np.zeros((n_t + 1,) + shape),
            a=np.zeros((n_t,) + shape),
            b=np.zeros((2 * grid.dim, n_t) + shape),
            c=np.zeros(shape),
            mu=mu,
            mom=np.zeros((2 * grid.dim, n_t) + shape),
            rho1=rho1.copy(),
            rho0=rho0.copy(),
            r_admm=r_admm,
        )

    def copy(self):
        return replace(self, **{k: getattr(self, k).copy()
                                for k in ("phi", "a", "b", "c", "mu", "mom", "rho1", "rho0")})

    def shifted(self, rho0):
        """Warm start for a new initial density: move the density path by the change in ``rho0``."""
        rho0 = np.asarray(rho0, dtype=float)
        new = self.copy()
        delta = rho0 - self.rho0
        new.mu = np.maximum(new.mu + delta, 0.0)
        new.rho1 = np.maximum(new.rho1 + delta, 0.0)
        new.rho0 = rho0.copy()
        return new


@dataclass
class WStepReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    action: float
    energy_after: float
    converged: bool
    mass_drift: float = 0.0
    raw_mass_drift: float = 0.0
    state: SpaceTimeStaggered | None = field(default=None, repr=False)


# ----------------------------------------------------------------------
# space-time difference operators (plain transposes, no weights)
# ----------------------------------------------------------------------
def _time_diff(phi, dt):
    return (phi[1:] - phi[:-1]) / dt


def _time_diff_T(a, dt):
    out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
    out[:-1] -= a
    out[1:] += a
    return out / dt


def _time_avg(phi):
    return 0.5 * (phi[1:] + phi[:-1])


def _time_avg_T(y):
    out = np.zeros((y.shape[0] + 1,) + y.shape[1:])
    out[:-1] += y
    out[1:] += y
    return 0.5 * out


def _sl(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _face_grad(x, spacing):
    """Interior-face differences along each spatial axis (axis 0 is time)."""
    return [np.diff(x, axis=k + 1) / dx for k, dx in enumerate(spacing)]


def _face_grad_T(faces, spacing):
    g0 = faces[0]
    shape = list(g0.shape)
    shape[1] += 1
    out = np.zeros(shape)
    for k, (g, dx) in enumerate(zip(faces, spacing)):
        g = g / dx
        out[_sl(out.ndim, k + 1, slice(None, -1))] -= g
        out[_sl(out.ndim, k + 1, slice(1, None))] += g
    return out


def _split(faces):
    """Copy each interior-face value into its two cells, scaled by 1/sqrt(2)."""
    g0 = faces[0]
    shape = list(g0.shape)
    shape[1] += 1
    out = np.zeros([2 * len(faces)] + shape)
    for k, g in enumerate(faces):
        g = g / _SQRT2
        nd = g.ndim
        out[2 * k][_sl(nd, k + 1, slice(1, None))] = g
        out[2 * k + 1][_sl(nd, k + 1, slice(None, -1))] = g
    return out


def _split_T(b):
    nd = b.ndim - 1
    return [(b[2 * k][_sl(nd, k + 1, slice(1, None))]
             + b[2 * k + 1][_sl(nd, k + 1, slice(None, -1))]) / _SQRT2
            for k in range(b.shape[0] // 2)]


def space_time_gradient(phi, grid: Grid):
    n_t = phi.shape[0] - 1
    dt = 1.0 / n_t
    return _time_diff(phi, dt), _split(_face_grad(_time_avg(phi), grid.spacing))


def space_time_gradient_T(a, b, grid: Grid):
    n_t = a.shape[0]
    dt = 1.0 / n_t
    return _time_diff_T(a, dt) + _time_avg_T(_face_grad_T(_split_T(b), grid.spacing))


# ----------------------------------------------------------------------
# linear solves for the phi substep
# ----------------------------------------------------------------------
def _laplacian_symbol(grid: Grid):
    """Eigenvalues of the Neumann face-gradient normal operator in the DCT-II basis."""
    lam = np.zeros(grid.shape)
    for k, (n, dx) in enumerate(zip(grid.n, grid.spacing)):
        ev = (2.0 * np.sin(0.5 * np.pi * np.arange(n) / n) / dx) ** 2
        shape = [1] * grid.dim
        shape[k] = n
        lam = lam + ev.reshape(shape)
    return lam


def _time_matrices(n_t):
    dt = 1.0 / n_t
    D = (np.eye(n_t, n_t + 1, 1) - np.eye(n_t, n_t + 1)) / dt
    A = 0.5 * (np.eye(n_t, n_t + 1, 1) + np.eye(n_t, n_t + 1))
    return D.T @ D, A.T @ A


class _SpaceTimeOperator:
    """``r (dt L^T L + endpoint e_N e_N^T)`` with ``L`` the space-time gradient."""

    def __init__(self, grid: Grid, n_t: int, r: float, endpoint: bool, cfg: ALG2Config):
        self.grid, self.n_t, self.r, self.endpoint, self.cfg = grid, n_t, r, endpoint, cfg
        self.dt = 1.0 / n_t
        DtD, AtA = _time_matrices(n_t)
        self._DtD, self._AtA = DtD, AtA
        if cfg.linear_solver == "spectral":
            lam = _laplacian_symbol(grid).ravel()
            E = np.zeros((n_t + 1, n_t + 1))
            if endpoint:
                E[-1, -1] = 1.0
            mats = r * (self.dt * DtD[None] + self.dt * lam[:, None, None] * AtA[None] + E[None])
            if endpoint:
                self._inv = np.linalg.inv(mats)
            else:
                # constant mode is singular; pinv returns the zero-mean solution
                self._inv = np.linalg.pinv(mats, hermitian=True)
        else:
            gdiag = np.zeros(grid.shape)
            for k, (n, dx) in enumerate(zip(grid.n, grid.spacing)):
                nb = np.full(n, 2.0)
                nb[0] = nb[-1] = 1.0
                shape = [1] * grid.dim
                shape[k] = n
                gdiag = gdiag + nb.reshape(shape) / dx ** 2
            tshape = (-1,) + (1,) * grid.dim
            diag = self.dt * np.diag(DtD).reshape(tshape) + self.dt * np.diag(AtA).reshape(tshape) * gdiag
            if endpoint:
                diag[-1] = diag[-1] + 1.0
            self._diag = r * diag

    def apply(self, phi):
        a, b = space_time_gradient(phi, self.grid)
        out = self.dt * space_time_gradient_T(a, b, self.grid)
        if self.endpoint:
            out[-1] += phi[-1]
        return self.r * out

    def solve(self, rhs, x0=None):
        if self.cfg.linear_solver == "spectral":
            axes = tuple(range(1, self.grid.dim + 1))
            rh = dctn(rhs, type=2, axes=axes, norm="ortho").reshape(self.n_t + 1, -1)
            sol = np.einsum("sij,js->is", self._inv, rh)
            return idctn(sol.reshape(rhs.shape), type=2, axes=axes, norm="ortho")
        return self._pcg(rhs, x0)

    def _pcg(self, rhs, x0):
        if not self.endpoint:
            rhs = rhs - rhs.mean()
        x = np.zeros_like(rhs) if x0 is None else x0.copy()
        res = rhs - self.apply(x)
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0:
            return np.zeros_like(rhs)
        z = res / self._diag
        p = z.copy()
        rz = np.vdot(res, z)
        for _ in range(self.cfg.cg_max_iter):
            if np.linalg.norm(res) <= self.cfg.cg_tol * bnorm:
                break
            Ap = self.apply(p)
            alpha = rz / np.vdot(p, Ap)
            x += alpha * p
            res -= alpha * Ap
            z = res / self._diag
            rz_new = np.vdot(res, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if not self.endpoint:
            x -= x.mean()
        return x


@lru_cache(maxsize=8)
def _operator(grid, n_t, r, endpoint, cfg):
    return _SpaceTimeOperator(grid, n_t, r, endpoint, cfg)


# ----------------------------------------------------------------------
# pointwise projection onto the paraboloid K
# ----------------------------------------------------------------------
def project_paraboloid(a, b, max_newton: int = 40, tol: float = 1e-12):
    """Euclidean projection of ``(a, b)`` onto ``{a + |b|^2/2 <= 0}``.

    ``b`` carries the vector components on its leading axis. Outside ``K`` the
    projection is ``(a - lam, b / (1 + lam))`` where ``lam > 0`` solves
    ``a - lam + |b|^2 / (2 (1 + lam)^2) = 0``; the left side is convex and
    decreasing, so Newton started below the root increases monotonically.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bb = np.sum(b * b, axis=0)
    out_a, out_b = a.copy(), b.copy()
    idx = np.flatnonzero(a + 0.5 * bb > 0)
    if idx.size == 0:
        return out_a, out_b
    af, bbf = a.ravel()[idx], bb.ravel()[idx]
    lam = np.maximum(af, 0.0)
    active = np.arange(idx.size)
    for _ in range(max_newton):
        la = lam[active]
        q = 1.0 + la
        f = af[active] - la + 0.5 * bbf[active] / q ** 2
        df = -1.0 - bbf[active] / q ** 3
        step = f / df
        lam[active] = la - step
        active = active[np.abs(step) > tol * (1.0 + np.abs(la))]
        if active.size == 0:
            break
    lam = np.maximum(lam, 0.0)
    out_a.ravel()[idx] = af - lam
    flat_b = out_b.reshape(b.shape[0], -1)
    flat_b[:, idx] = b.reshape(b.shape[0], -1)[:, idx] / (1.0 + lam)
    return out_a, flat_b.reshape(b.shape)


# ----------------------------------------------------------------------
# ALG2 driver
# ----------------------------------------------------------------------
def _kinetic_action(mu, mom, dt, cellvol):
    """``sum dt cellvol |m|^2 / mu`` over space-time cells with positive density."""
    m2 = np.sum(mom * mom, axis=0)
    pos = mu > 1e-14 * max(float(mu.max(initial=0.0)), 1e-300)
    return float(np.sum(m2[pos] / mu[pos]) * dt * cellvol)


def _alg2(grid, rho0, cfg, spec=None, h=None, rho_target=None, init=None, callback=None):
    n_t, r = cfg.n_t, cfg.r_admm
    dt = 1.0 / n_t
    w = dt * grid.cellvol
    jko = spec is not None
    op = _operator(grid, n_t, r, jko, cfg)
    if init is not None:
        if init.n_t != n_t or init.phi.shape[1:] != grid.shape:
            raise ValueError("warm-start state does not match the grid / n_t")
        st = init.shifted(rho0)
        st.r_admm = r
    else:
        st = SpaceTimeStaggered.static(grid, n_t, rho0, r, rho1=rho_target)
    mass0 = grid.mass(rho0)
    scale = max(mass0, 1e-300)
    tau = r * h if jko else None
    alpha = cfg.relaxation

    primal = dual = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        check = it % cfg.check_every == 0 or it == cfg.max_iter
        rhs = space_time_gradient_T(st.mu - r * st.a, st.mom - r * st.b, grid) * (-dt)
        rhs[0] -= rho0
        if jko:
            rhs[-1] += st.rho1 - r * st.c
        else:
            rhs[-1] += rho_target
        st.phi = op.solve(rhs, x0=st.phi)

        a_phi, b_phi = space_time_gradient(st.phi, grid)
        phi1 = st.phi[-1]
        if check:
            a_raw, b_raw, phi1_raw = a_phi, b_phi, phi1
        if alpha != 1.0:
            a_phi = alpha * a_phi + (1.0 - alpha) * st.a
            b_phi = alpha * b_phi + (1.0 - alpha) * st.b
            phi1 = alpha * phi1 - (1.0 - alpha) * st.c
        a_new, b_new = project_paraboloid(a_phi + st.mu / r, b_phi + st.mom / r,
                                          cfg.proj_max_newton, cfg.proj_tol)
        if jko:
            rho1_new = prox_internal(spec, tau, st.rho1 - r * phi1)
            c_new = -phi1 + (st.rho1 - rho1_new) / r
        if check:
            p2 = w * (np.sum((a_raw - a_new) ** 2) + np.sum((b_raw - b_new) ** 2))
            dq = space_time_gradient_T(a_new - st.a, b_new - st.b, grid) * dt
            if jko:
                p2 += grid.cellvol * np.sum((phi1_raw + c_new) ** 2)
                dq[-1] -= c_new - st.c
            primal = math.sqrt(p2 / grid.volume)
            dual = r * math.sqrt(grid.cellvol * np.sum(dq * dq)) / scale
        st.mu += r * (a_phi - a_new)
        st.mom += r * (b_phi - b_new)
        st.a, st.b = a_new, b_new
        if jko:
            st.rho1, st.c = rho1_new, c_new
        if check:
            if callback is not None:
                callback(it, primal, dual, st)
            if max(primal, dual) <= cfg.tol:
                break
    converged = max(primal, dual) <= cfg.tol
    return st, it, primal, dual, converged


def _check_density(rho, grid, name):
    rho = grid.check_cell_field(rho)
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"{name} must be finite")
    if np.any(rho < 0):
        raise ValueError(f"{name} must be nonnegative")
    return rho


def wasserstein_jko_step(rho_prev, spec: EnergySpec, h: float, grid: Grid,
                         cfg: ALG2Config | None = None, init: SpaceTimeStaggered | None = None):
    """One Wasserstein JKO step from ``rho_prev`` for the energy ``spec``.

    Returns ``(rho_half, report)``. The output is clamped at zero and rescaled
    to the input mass. ``init`` warm-starts the ADMM from a previous state;
    the state is copied, never mutated.
    """
    cfg = cfg or ALG2Config()
    rho_prev = _check_density(rho_prev, grid, "rho_prev")
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    if spec.side != "diffusion":
        raise ValueError("the Wasserstein step needs a diffusion-side energy")
    mass0 = grid.mass(rho_prev)
    if not mass0 > 0:
        raise ValueError("the Wasserstein step needs an input with positive mass")

    st, it, primal, dual, converged = _alg2(grid, rho_prev, cfg, spec=spec, h=h, init=init)
    rho = np.maximum(st.rho1, 0.0)
    mass1 = grid.mass(rho)
    raw_drift = abs(mass1 - mass0) / mass0
    rho = rho * (mass0 / mass1) if mass1 > 0 else np.full(grid.shape, mass0 / grid.volume)
    report = WStepReport(
        iterations=it, primal_residual=primal, dual_residual=dual,
        action=_kinetic_action(st.mu, st.mom, 1.0 / cfg.n_t, grid.cellvol),
        energy_after=energy_value(spec, rho, grid), converged=converged,
        mass_drift=abs(grid.mass(rho) - mass0) / mass0, raw_mass_drift=raw_drift, state=st,
    )
    return rho, report


def dynamic_w2(rho0, rho1, grid: Grid, cfg: ALG2Config | None = None, return_report: bool = False):
    """Squared Wasserstein distance via the discrete Benamou-Brenier action."""
    cfg = cfg or ALG2Config()
    rho0 = _check_density(rho0, grid, "rho0")
    rho1 = _check_density(rho1, grid, "rho1")
    m0, m1 = grid.mass(rho0), grid.mass(rho1)
    if abs(m0 - m1) > 1e-8 * max(m0, m1):
        raise ValueError(f"dynamic_w2 needs equal masses, got {m0} and {m1}")
    if m0 == 0:
        return (0.0, None) if return_report else 0.0
    st, it, primal, dual, converged = _alg2(grid, rho0, cfg, rho_target=rho1)
    action = _kinetic_action(st.mu, st.mom, 1.0 / cfg.n_t, grid.cellvol)
    if return_report:
        report = WStepReport(it, primal, dual, action, 0.0, converged, state=st)
        return action, report
    return action
