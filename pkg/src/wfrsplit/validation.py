"""Solver-versus-oracle checks behind ``wfrsplit validate``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracle
from .energy import EnergySpec, Nonlinearity, prox_internal
from .frstep import (ReactionSpec, fisher_rao_step, fr_distance, fr_optimality_residual,
                     fr_step_nutrient_c)
from .grid import Grid
from .models import ModelConfig, run_scalar
from .wstep import ALG2Config, dynamic_w2, wasserstein_jko_step

__all__ = ["Check", "run_validation", "format_check"]


@dataclass
class Check:
    name: str
    measured: float
    bound: float
    passed: bool
    seconds: float = 0.0


def format_check(c: Check) -> str:
    status = "PASS" if c.passed else "FAIL"
    return f"{status}  {c.name:<44s} measured={c.measured:.3e}  bound={c.bound:.3e}  ({c.seconds:.1f}s)"


def _check(name, measured, bound, op="<="):
    ok = measured <= bound if op == "<=" else measured >= bound
    return Check(name, float(measured), float(bound), bool(ok and np.isfinite(measured)))


def _fr_specs(rng, n):
    U = rng.uniform(-2.0, 2.0, n)
    return [
        ReactionSpec(Nonlinearity.zero(), U),
        ReactionSpec(Nonlinearity.power(2.0), U),
        ReactionSpec(Nonlinearity.power(3.5), U, rng.uniform(0.1, 2.0, n)),
        ReactionSpec.hele_shaw(10.0),
        ReactionSpec.hele_shaw(100.0),
    ]


def check_fr_distance(rng):
    g = Grid((16,))
    one, zero, four = np.ones(16), np.zeros(16), np.full(16, 4.0)
    err = max(abs(fr_distance(one, one, g)), abs(fr_distance(one, zero, g) - 4.0),
              abs(fr_distance(four, one, g) - 4.0))
    return _check("fr_distance closed-form constants", err, 1e-12)


def _fprime(nl, r):
    # written out here rather than taken from the solver's Nonlinearity
    if nl.kind == "entropy":
        return math.log(r) if r > 0 else -math.inf
    if nl.kind == "power":
        return nl.m / (nl.m - 1.0) * r ** (nl.m - 1.0)
    return 0.0


def _fvalue(nl, r):
    if nl.kind == "entropy":
        return r * math.log(r) - r if r > 0 else 0.0
    if nl.kind == "power":
        return r ** nl.m / (nl.m - 1.0)
    return 0.0


def fr_oracle(mu, U, s, nl, h):
    """Brute-force minimiser of ``4(sqrt r - sqrt mu)^2/(2h) + s F(r) + U r`` over ``r >= 0``."""
    if mu == 0:
        return 0.0

    def obj(r):
        return 4.0 * (math.sqrt(r) - math.sqrt(mu)) ** 2 / (2 * h) + s * _fvalue(nl, r) + U * r

    def grad(r):
        if r <= 0:
            return -math.inf
        return 2.0 / h * (1.0 - math.sqrt(mu / r)) + s * _fprime(nl, r) + U

    top = mu / max(1e-3, 1.0 + 0.5 * h * U) ** 2 + 1.0
    return oracle.brute_force_pointwise(obj, (0.0, top), derivative=grad)


def prox_oracle(z, V, tau, nl):
    def obj(r):
        return (r - z) ** 2 / (2 * tau) + _fvalue(nl, r) + V * r

    def grad(r):
        return (r - z) / tau + _fprime(nl, r) + V

    return oracle.brute_force_pointwise(obj, (0.0, abs(z) + tau * abs(V) + 2.0), derivative=grad)


def check_fr_step(rng, fr_tol, cells=1000):
    h = 0.05
    worst_res = worst_bf = 0.0
    for spec in _fr_specs(rng, cells):
        mu = rng.uniform(0.0, 1.0, cells)
        out = fisher_rao_step(mu, spec, h, rtol=fr_tol)
        res = np.abs(fr_optimality_residual(out, mu, spec, h)) / (1.0 + mu)
        worst_res = max(worst_res, float(res.max()))
        U = np.broadcast_to(spec.potential, mu.shape)
        s = np.broadcast_to(spec.scale, mu.shape)
        for i in range(0, cells, 37):
            ref = fr_oracle(mu[i], U[i], s[i], spec.nonlinearity, h)
            worst_bf = max(worst_bf, abs(ref - out[i]))
    return [_check("FR step optimality residual / (1+mu)", worst_res, 1e-10),
            _check("FR step vs brute-force oracle", worst_bf, 1e-9)]


def check_prox(rng):
    worst = 0.0
    for nl in (Nonlinearity.entropy(), Nonlinearity.power(2.0), Nonlinearity.power(7.0)):
        for _ in range(20):
            z, V, tau = rng.uniform(-1, 3), rng.uniform(-1, 1), rng.uniform(0.05, 2)
            got = float(prox_internal(EnergySpec(nl, V), tau, np.array([z]))[0])
            worst = max(worst, abs(got - prox_oracle(z, V, tau, nl)))
    return _check("prox_internal vs brute-force oracle", worst, 1e-9)


def _pairs_1d(x):
    def bump(c, w):
        f = np.exp(-0.5 * ((x - c) / w) ** 2)
        return f / f.mean()

    return [
        (bump(0.3, 0.05), bump(0.7, 0.05)),
        (np.where(x < 0.5, 2.0, 0.0), np.where(x > 0.5, 2.0, 0.0)),
        (bump(0.5, 0.05), bump(0.5, 0.15)),
        (np.ones_like(x), bump(0.4, 0.1)),
        (0.5 * bump(0.25, 0.05) + 0.5 * bump(0.75, 0.05), bump(0.5, 0.1)),
    ]


def check_w2(count):
    g = Grid((64,))
    x = g.axes()[0]
    cfg = ALG2Config(n_t=16, tol=1e-6, max_iter=3000, r_admm=1.0)
    worst = 0.0
    for r0, r1 in _pairs_1d(x)[:count]:
        exact = oracle.w2_exact_1d(r0, r1)
        worst = max(worst, abs(dynamic_w2(r0, r1, g, cfg) - exact) / exact)
    return _check(f"dynamic_w2 vs exact 1D W2 ({count} pairs)", worst, 0.02)


def check_wstep(rng):
    g = Grid((64,))
    x = g.axes()[0]
    spec = EnergySpec(Nonlinearity.entropy())
    out, _ = wasserstein_jko_step(np.full(64, 1.5), spec, 0.01, g)
    fixed = float(np.abs(out - 1.5).sum() * g.cellvol)
    bump = np.exp(-0.5 * ((x - 0.5) / 0.05) ** 2) + 1e-3
    out, rep = wasserstein_jko_step(bump, spec, 0.01, g)
    drift = abs(g.mass(out) - g.mass(bump)) / g.mass(bump)
    return [_check("W step fixed point at uniform data (L1)", fixed, 1e-6),
            _check("W step mass drift", drift, 1e-8),
            _check("W step Otto bound max(out) - max(in)", out.max() - bump.max(), 1e-4)]


def check_mass_recursion():
    lam, h, steps = 2.0, 0.01, 10
    cfg = ModelConfig(n=(32,), h=h, T=h * steps, V2=lam)
    traj = run_scalar(cfg, np.full(32, 0.7))
    k = np.arange(steps + 1)
    expected = 0.7 / (1 + h * lam / 2) ** (2 * k)
    err = float(np.max(np.abs(traj.column("mass_rho") - expected) / expected))
    return _check("exact mass recursion (V2 = const)", err, 1e-8)


def check_tumour_caps(rng):
    mu = rng.uniform(0, 1, 5000)
    worst = 0.0
    for m in (10.0, 100.0):
        worst = max(worst, float(fisher_rao_step(mu, ReactionSpec.hele_shaw(m), 0.005).max()) - 1.0)
    c = rng.uniform(0, 2, 5000)
    rho = rng.uniform(0, 1, 5000)
    cn = fr_step_nutrient_c(c, rho, 0.02)
    lower = float(np.max((1 - 0.02) * c - cn))
    return [_check("Hele-Shaw FR cap max(out) - 1", worst, 0.0),
            _check("nutrient c FR sandwich lower gap", lower, 1e-15),
            _check("nutrient c FR max increase", float(cn.max() - c.max()), 1e-10)]


def check_heat_vs_fd(h):
    n = 128
    cfg = ModelConfig(n=(n,), h=h, T=0.05)
    x = cfg.grid.axes()[0]
    rho0 = 1.0 + np.exp(-0.5 * ((x - 0.5) / 0.08) ** 2)
    traj = run_scalar(cfg, rho0)
    ref = oracle.fd_reference_scalar(cfg, rho0)
    err = np.abs(traj.snapshots[-1]["rho"] - ref.snapshots[-1]).sum() * cfg.grid.cellvol
    return err / cfg.grid.mass(rho0)


def check_fd_consistency():
    e1 = check_heat_vs_fd(0.0025)
    e2 = check_heat_vs_fd(0.00125)
    return [_check("scalar heat run vs FD reference (L1/mass)", e1, 5e-2),
            _check("FD error decreases as h halves (ratio)", e2 / e1, 1.0)]


def run_validation(level: str = "quick", fr_tol: float = 1e-12, seed: int = 42, report=print):
    """Run the suite; returns the list of :class:`Check` results."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    rng = np.random.default_rng(seed)
    tasks = [
        lambda: check_fr_distance(rng),
        lambda: check_fr_step(rng, fr_tol),
        lambda: check_prox(rng),
        lambda: check_wstep(rng),
        lambda: check_mass_recursion(),
        lambda: check_tumour_caps(rng),
        lambda: check_w2(1 if level == "quick" else 5),
    ]
    if level == "full":
        tasks.append(check_fd_consistency)
    results = []
    for task in tasks:
        t0 = time.perf_counter()
        out = task()
        out = out if isinstance(out, list) else [out]
        dt = time.perf_counter() - t0
        for c in out:
            c.seconds = dt / len(out)
            results.append(c)
            if report:
                report(format_check(c))
    return results
